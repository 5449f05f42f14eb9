#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "poupinn/geometry.hpp"
#include "poupinn/lm.hpp"
#include "poupinn/partition.hpp"

namespace poupinn {

enum class Regularizer { Entropy, Dirichlet };

/// Mixture density p(x) = (1/M) sum_k w_k phi_k(x) over the domain box,
/// with each component normalized to unit mass inside the box. Masses are
/// Monte-Carlo integrals over a point cloud that is fixed at construction,
/// which makes p a deterministic, differentiable function of the ball
/// centers and radii.
class AdaptiveDensity {
 public:
  AdaptiveDensity(Partition partition, Box domain, double beta,
                  Regularizer regularizer, std::uint64_t seed,
                  std::size_t n_mc = 100000);

  const Partition& partition() const { return partition_; }
  Partition& partition() { return partition_; }
  const Box& domain() const { return domain_; }
  double beta() const { return beta_; }
  void set_beta(double beta) { beta_ = beta; }
  Regularizer regularizer() const { return regularizer_; }
  const std::vector<double>& masses() const { return masses_; }
  const std::vector<double>& weights() const { return weights_; }

  /// Recomputes component masses (and w_k = 1/mass) on the fixed MC cloud.
  /// Throws ZeroMassBall when a support carries no mass inside the domain.
  void normalize();

  double pdf(std::span<const double> x) const;

  /// Derivative of pdf(x) with respect to all (c_j, s_j), laid out
  /// [c_0.., s_0, c_1.., s_1, ...]; includes the mass renormalization term.
  void pdf_gradient(std::span<const double> x, std::span<double> out) const;

  /// Spatial gradient of the pdf (Dirichlet regularizer support).
  void pdf_spatial_gradient(std::span<const double> x, std::span<double> out) const;

  /// Mixture draw: uniform component index, rejection within ball-and-box.
  /// Records pdf values of the accepted points. Deterministic per seed.
  SampleSet sample(std::size_t n, std::uint64_t seed) const;

  std::size_t shape_param_count() const {
    return static_cast<std::size_t>(partition_.size()) * (domain_.dim() + 1);
  }
  std::vector<double> shape_params() const;
  void set_shape_params(std::span<const double> params);

  /// Per-(c_j,s_j) derivative of component mass j on the MC cloud; used by
  /// pdf_gradient and exposed for tests.
  void mass_gradient(int ball, std::span<double> dcenter, double& dradius) const;

 private:
  Partition partition_;
  Box domain_;
  double beta_;
  Regularizer regularizer_;
  std::vector<double> masses_;
  std::vector<double> weights_;
  std::vector<double> mc_points_;  // flat, fixed at construction
  std::size_t n_mc_;
};

/// Importance-sampled ascent objective
///   F = (1/N) sum r_i^2 p(x_i)/pbar(x_i) - (beta/N) sum p log p / pbar
/// (entropy) or with the |grad p|^2 estimate in place of the second sum
/// (Dirichlet). Gradient is with respect to the density's shape parameters.
struct AscentEval {
  double value = 0.0;
  std::vector<double> gradient;
};

AscentEval ascent_objective(const AdaptiveDensity& density,
                            std::span<const double> squared_residuals,
                            const SampleSet& samples);

/// Gibbs density exp(r^2/beta) normalized by midpoint quadrature; values on
/// the grid cells. Guarded against overflow by peak subtraction.
std::vector<double> closed_form_pstar(std::span<const double> squared_residuals,
                                      double beta, double cell_volume);

/// Grid quadrature of p log(p |Omega|) after renormalizing p on the grid;
/// nonnegative, zero iff uniform.
double kl_to_uniform_grid(std::span<const double> density_values,
                          double cell_volume, double domain_volume);

/// KL of the density itself, evaluated on a regular grid of the domain box.
double kl_to_uniform(const AdaptiveDensity& density, int grid_per_dim);

}  // namespace poupinn
