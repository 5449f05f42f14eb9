#include "poupinn/mlp.hpp"

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>

#include "poupinn/errors.hpp"
#include "poupinn/rng.hpp"

namespace poupinn {

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "sin") return Activation::Sin;
  throw ConfigError("unknown activation '" + name + "' (expected tanh or sin)");
}

std::string to_string(Activation a) {
  return a == Activation::Tanh ? "tanh" : "sin";
}

int MlpSpec::width_in(int layer) const {
  return layer == 0 ? input_dim : hidden_widths[layer - 1];
}

int MlpSpec::width_out(int layer) const {
  return layer == static_cast<int>(hidden_widths.size()) ? output_dim
                                                         : hidden_widths[layer];
}

std::size_t MlpSpec::param_count() const {
  std::size_t n = 0;
  for (int l = 0; l < layer_count(); ++l)
    n += static_cast<std::size_t>(width_out(l)) * width_in(l) + width_out(l);
  return n;
}

void MlpSpec::validate() const {
  if (input_dim <= 0 || output_dim <= 0)
    throw ConfigError("mlp: input_dim and output_dim must be positive");
  if (hidden_widths.empty())
    throw ConfigError("mlp: at least one hidden layer required");
  for (int w : hidden_widths)
    if (w <= 0) throw ConfigError("mlp: hidden widths must be positive");
}

ParamBlock ParamBlock::zeros(const MlpSpec& spec) {
  ParamBlock p;
  p.values.assign(spec.param_count(), 0.0);
  std::size_t off = 0;
  for (int l = 0; l < spec.layer_count(); ++l) {
    ParamBlock::LayerLayout lay;
    lay.rows = spec.width_out(l);
    lay.cols = spec.width_in(l);
    lay.weight_offset = off;
    off += static_cast<std::size_t>(lay.rows) * lay.cols;
    lay.bias_offset = off;
    off += static_cast<std::size_t>(lay.rows);
    p.layout.push_back(lay);
  }
  return p;
}

ParamBlock init_params(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  ParamBlock p = ParamBlock::zeros(spec);
  Rng rng(seed);
  const int last = spec.layer_count() - 1;
  for (int l = 0; l < spec.layer_count(); ++l) {
    const auto& lay = p.layout[l];
    if (l == last) continue;  // zero output layer: untrained model predicts 0
    double a = std::sqrt(6.0 / (lay.rows + lay.cols));
    // sine first layer doubles as a frequency bank; widen its fan-scaled
    // range so moderate wave numbers are reachable at initialization
    if (spec.activation == Activation::Sin && l == 0) a *= 2.0 * M_PI;
    for (std::size_t i = 0; i < static_cast<std::size_t>(lay.rows) * lay.cols; ++i)
      p.values[lay.weight_offset + i] = rng.uniform(-a, a);
  }
  return p;
}

namespace {

struct Act {
  // value and first three derivatives of the activation at z
  double s0, s1, s2, s3;
};

inline Act eval_act(Activation act, double z) {
  Act r;
  if (act == Activation::Tanh) {
    const double t = std::tanh(z);
    const double u = 1.0 - t * t;
    r.s0 = t;
    r.s1 = u;
    r.s2 = -2.0 * t * u;
    r.s3 = -2.0 * u * (1.0 - 3.0 * t * t);
  } else {
    r.s0 = std::sin(z);
    r.s1 = std::cos(z);
    r.s2 = -r.s0;
    r.s3 = -r.s1;
  }
  return r;
}

// Per-layer augmented state: n neurons, each carrying value, d-gradient and
// d*d-Hessian with respect to the network input.
struct LayerState {
  int n = 0;
  std::vector<double> v, g, h;
  void resize(int n_, int d) {
    n = n_;
    v.assign(static_cast<std::size_t>(n), 0.0);
    g.assign(static_cast<std::size_t>(n) * d, 0.0);
    h.assign(static_cast<std::size_t>(n) * d * d, 0.0);
  }
};

inline void affine_fwd(const ParamBlock& params, const ParamBlock::LayerLayout& lay,
                       int d, const LayerState& in, LayerState& out) {
  out.resize(lay.rows, d);
  const double* W = params.values.data() + lay.weight_offset;
  const double* b = params.values.data() + lay.bias_offset;
  const int dd = d * d;
  for (int j = 0; j < lay.rows; ++j) {
    double v = b[j];
    double* gj = out.g.data() + static_cast<std::size_t>(j) * d;
    double* hj = out.h.data() + static_cast<std::size_t>(j) * dd;
    const double* Wj = W + static_cast<std::size_t>(j) * lay.cols;
    for (int k = 0; k < lay.cols; ++k) {
      const double w = Wj[k];
      if (w == 0.0) continue;
      v += w * in.v[k];
      const double* gk = in.g.data() + static_cast<std::size_t>(k) * d;
      const double* hk = in.h.data() + static_cast<std::size_t>(k) * dd;
      for (int a = 0; a < d; ++a) gj[a] += w * gk[a];
      for (int a = 0; a < dd; ++a) hj[a] += w * hk[a];
    }
    out.v[j] = v;
  }
}

inline void act_fwd(Activation act, int d, const LayerState& z, LayerState& a) {
  a.resize(z.n, d);
  const int dd = d * d;
  for (int j = 0; j < z.n; ++j) {
    const Act s = eval_act(act, z.v[j]);
    a.v[j] = s.s0;
    const double* gz = z.g.data() + static_cast<std::size_t>(j) * d;
    const double* hz = z.h.data() + static_cast<std::size_t>(j) * dd;
    double* ga = a.g.data() + static_cast<std::size_t>(j) * d;
    double* ha = a.h.data() + static_cast<std::size_t>(j) * dd;
    for (int p = 0; p < d; ++p) ga[p] = s.s1 * gz[p];
    for (int p = 0; p < d; ++p)
      for (int q = 0; q < d; ++q)
        ha[p * d + q] = s.s1 * hz[p * d + q] + s.s2 * gz[p] * gz[q];
  }
}

LayerState input_state(std::span<const double> x) {
  const int d = static_cast<int>(x.size());
  LayerState s;
  s.resize(d, d);
  for (int k = 0; k < d; ++k) {
    s.v[k] = x[k];
    s.g[static_cast<std::size_t>(k) * d + k] = 1.0;
  }
  return s;
}

void check_input(const MlpSpec& spec, std::span<const double> x) {
  if (static_cast<int>(x.size()) != spec.input_dim)
    throw Error("mlp: input has dimension " + std::to_string(x.size()) +
                ", spec expects " + std::to_string(spec.input_dim));
}

}  // namespace

Bundle Bundle::zeros(int out_dim_, int in_dim_) {
  Bundle b;
  b.out_dim = out_dim_;
  b.in_dim = in_dim_;
  b.value.assign(static_cast<std::size_t>(out_dim_), 0.0);
  b.grad.assign(static_cast<std::size_t>(out_dim_) * in_dim_, 0.0);
  b.hess.assign(static_cast<std::size_t>(out_dim_) * in_dim_ * in_dim_, 0.0);
  return b;
}

std::vector<double> forward(const MlpSpec& spec, const ParamBlock& params,
                            std::span<const double> x) {
  check_input(spec, x);
  std::vector<double> cur(x.begin(), x.end());
  std::vector<double> next;
  for (int l = 0; l < spec.layer_count(); ++l) {
    const auto& lay = params.layout[l];
    next.assign(static_cast<std::size_t>(lay.rows), 0.0);
    const double* W = params.values.data() + lay.weight_offset;
    const double* b = params.values.data() + lay.bias_offset;
    for (int j = 0; j < lay.rows; ++j) {
      double v = b[j];
      for (int k = 0; k < lay.cols; ++k) v += W[static_cast<std::size_t>(j) * lay.cols + k] * cur[k];
      next[j] = v;
    }
    if (l + 1 < spec.layer_count())
      for (double& v : next) v = (spec.activation == Activation::Tanh) ? std::tanh(v) : std::sin(v);
    cur.swap(next);
  }
  return cur;
}

Bundle bundle(const MlpSpec& spec, const ParamBlock& params,
              std::span<const double> x) {
  check_input(spec, x);
  const int d = spec.input_dim;
  LayerState a = input_state(x);
  LayerState z;
  for (int l = 0; l < spec.layer_count(); ++l) {
    affine_fwd(params, params.layout[l], d, a, z);
    if (l + 1 < spec.layer_count())
      act_fwd(spec.activation, d, z, a);
    else
      a = z;
  }
  Bundle out = Bundle::zeros(spec.output_dim, d);
  out.value = a.v;
  out.grad = a.g;
  out.hess = a.h;
  return out;
}

Bundle bundle_with_vjp(const MlpSpec& spec, const ParamBlock& params,
                       std::span<const double> x, const Bundle& cotangent,
                       std::vector<double>& out_grad) {
  check_input(spec, x);
  const int d = spec.input_dim;
  const int dd = d * d;
  const int L = spec.layer_count();
  if (cotangent.out_dim != spec.output_dim || cotangent.in_dim != d)
    throw Error("mlp: cotangent shape does not match the network");

  // Forward, keeping every pre- and post-activation state for the sweep back.
  std::vector<LayerState> post(static_cast<std::size_t>(L) + 1);
  std::vector<LayerState> pre(static_cast<std::size_t>(L));
  post[0] = input_state(x);
  for (int l = 0; l < L; ++l) {
    affine_fwd(params, params.layout[l], d, post[l], pre[l]);
    if (l + 1 < L)
      act_fwd(spec.activation, d, pre[l], post[l + 1]);
    else
      post[l + 1] = pre[l];
  }

  Bundle result = Bundle::zeros(spec.output_dim, d);
  result.value = post[L].v;
  result.grad = post[L].g;
  result.hess = post[L].h;

  out_grad.assign(params.values.size(), 0.0);

  // Adjoint of the output state is the cotangent itself.
  LayerState bar;
  bar.n = spec.output_dim;
  bar.v = cotangent.value;
  bar.g = cotangent.grad;
  bar.h = cotangent.hess;

  LayerState bar_prev;
  for (int l = L - 1; l >= 0; --l) {
    // Activation backward maps the adjoint of post[l+1] onto pre[l].
    if (l + 1 < L) {
      const LayerState& z = pre[l];
      for (int j = 0; j < z.n; ++j) {
        const Act s = eval_act(spec.activation, z.v[j]);
        const double* gz = z.g.data() + static_cast<std::size_t>(j) * d;
        const double* hz = z.h.data() + static_cast<std::size_t>(j) * dd;
        double* bg = bar.g.data() + static_cast<std::size_t>(j) * d;
        double* bh = bar.h.data() + static_cast<std::size_t>(j) * dd;
        double vbar = bar.v[j] * s.s1;
        double gz_dot_bg = 0.0;
        for (int p = 0; p < d; ++p) gz_dot_bg += bg[p] * gz[p];
        vbar += s.s2 * gz_dot_bg;
        // new gradient adjoint before overwriting bh
        std::array<double, 16> gtmp;  // d <= 4 in practice; fall back below
        std::vector<double> gtmp_big;
        double* gnew = d <= 4 ? gtmp.data() : (gtmp_big.assign(d, 0.0), gtmp_big.data());
        for (int p = 0; p < d; ++p) {
          double acc = s.s1 * bg[p];
          for (int q = 0; q < d; ++q)
            acc += s.s2 * (bh[p * d + q] + bh[q * d + p]) * gz[q];
          gnew[p] = acc;
        }
        for (int p = 0; p < d; ++p)
          for (int q = 0; q < d; ++q) {
            const double w = bh[p * d + q];
            vbar += w * (s.s2 * hz[p * d + q] + s.s3 * gz[p] * gz[q]);
            bh[p * d + q] = s.s1 * w;
          }
        for (int p = 0; p < d; ++p) bg[p] = gnew[p];
        bar.v[j] = vbar;
      }
    }

    // Affine backward: parameter gradient and adjoint of post[l].
    const auto& lay = params.layout[l];
    const LayerState& in = post[l];
    const double* W = params.values.data() + lay.weight_offset;
    double* gW = out_grad.data() + lay.weight_offset;
    double* gB = out_grad.data() + lay.bias_offset;
    bar_prev.resize(lay.cols, d);
    for (int j = 0; j < lay.rows; ++j) {
      const double vb = bar.v[j];
      const double* bg = bar.g.data() + static_cast<std::size_t>(j) * d;
      const double* bh = bar.h.data() + static_cast<std::size_t>(j) * dd;
      gB[j] += vb;
      const double* Wj = W + static_cast<std::size_t>(j) * lay.cols;
      double* gWj = gW + static_cast<std::size_t>(j) * lay.cols;
      for (int k = 0; k < lay.cols; ++k) {
        const double* gk = in.g.data() + static_cast<std::size_t>(k) * d;
        const double* hk = in.h.data() + static_cast<std::size_t>(k) * dd;
        double acc = vb * in.v[k];
        for (int p = 0; p < d; ++p) acc += bg[p] * gk[p];
        for (int p = 0; p < dd; ++p) acc += bh[p] * hk[p];
        gWj[k] += acc;
        const double w = Wj[k];
        if (w == 0.0) continue;
        bar_prev.v[k] += w * vb;
        double* pg = bar_prev.g.data() + static_cast<std::size_t>(k) * d;
        double* ph = bar_prev.h.data() + static_cast<std::size_t>(k) * dd;
        for (int p = 0; p < d; ++p) pg[p] += w * bg[p];
        for (int p = 0; p < dd; ++p) ph[p] += w * bh[p];
      }
    }
    bar = bar_prev;
  }
  return result;
}

std::vector<double> bundle_vjp(const MlpSpec& spec, const ParamBlock& params,
                               std::span<const double> x, const Bundle& cotangent) {
  std::vector<double> grad;
  bundle_with_vjp(spec, params, x, cotangent, grad);
  return grad;
}

}  // namespace poupinn
