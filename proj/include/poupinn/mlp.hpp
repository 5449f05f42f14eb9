#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace poupinn {

enum class Activation { Tanh, Sin };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);

/// Architecture of one expert network: affine layers with a smooth
/// coordinate-wise activation on every hidden layer, linear output layer.
struct MlpSpec {
  int input_dim = 0;
  std::vector<int> hidden_widths;
  int output_dim = 1;
  Activation activation = Activation::Tanh;

  int layer_count() const { return static_cast<int>(hidden_widths.size()) + 1; }
  int width_in(int layer) const;
  int width_out(int layer) const;
  std::size_t param_count() const;
  void validate() const;
};

/// Flat parameter vector plus the per-layer (rows, cols, bias) layout.
/// Layer storage order: row-major weight matrix, then bias.
struct ParamBlock {
  struct LayerLayout {
    int rows = 0;
    int cols = 0;
    std::size_t weight_offset = 0;
    std::size_t bias_offset = 0;
  };
  std::vector<double> values;
  std::vector<LayerLayout> layout;

  static ParamBlock zeros(const MlpSpec& spec);
};

/// Value, input gradient and input Hessian of a network output.
/// grad is stored row-major (out, in); hess row-major (out, in, in) and is
/// symmetric in its trailing pair.
struct Bundle {
  int out_dim = 0;
  int in_dim = 0;
  std::vector<double> value;
  std::vector<double> grad;
  std::vector<double> hess;

  static Bundle zeros(int out_dim, int in_dim);
  double& g(int i, int a) { return grad[static_cast<std::size_t>(i) * in_dim + a]; }
  double g(int i, int a) const { return grad[static_cast<std::size_t>(i) * in_dim + a]; }
  double& h(int i, int a, int b) {
    return hess[(static_cast<std::size_t>(i) * in_dim + a) * in_dim + b];
  }
  double h(int i, int a, int b) const {
    return hess[(static_cast<std::size_t>(i) * in_dim + a) * in_dim + b];
  }
};

/// Fan-scaled uniform weights on hidden layers, zero output-layer weights,
/// zero biases; deterministic in the seed.
ParamBlock init_params(const MlpSpec& spec, std::uint64_t seed);

/// Plain forward pass.
std::vector<double> forward(const MlpSpec& spec, const ParamBlock& params,
                            std::span<const double> x);

/// Forward-mode propagation of (value, gradient, Hessian) triples.
Bundle bundle(const MlpSpec& spec, const ParamBlock& params,
              std::span<const double> x);

/// Gradient with respect to the parameters of the scalar
///   S = <cotangent.value, value> + <cotangent.grad, grad> + <cotangent.hess, hess>,
/// computed by one reverse sweep through the augmented forward pass.
std::vector<double> bundle_vjp(const MlpSpec& spec, const ParamBlock& params,
                               std::span<const double> x, const Bundle& cotangent);

/// bundle() and bundle_vjp() fused; out_grad is resized to the parameter
/// count. Saves the duplicated forward sweep in Jacobian assembly.
Bundle bundle_with_vjp(const MlpSpec& spec, const ParamBlock& params,
                       std::span<const double> x, const Bundle& cotangent,
                       std::vector<double>& out_grad);

}  // namespace poupinn
