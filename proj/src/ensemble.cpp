#include "poupinn/ensemble.hpp"

#include <cstring>

#include "poupinn/errors.hpp"
#include "poupinn/rng.hpp"

namespace poupinn {

std::vector<double> EnsembleModel::flat_params() const {
  std::vector<double> theta;
  theta.reserve(total_params());
  for (const auto& p : params)
    theta.insert(theta.end(), p.values.begin(), p.values.end());
  return theta;
}

void EnsembleModel::set_flat_params(std::span<const double> theta) {
  std::size_t off = 0;
  for (auto& p : params) {
    std::memcpy(p.values.data(), theta.data() + off, p.values.size() * sizeof(double));
    off += p.values.size();
  }
}

void EnsembleModel::add_flat_params(std::span<const double> delta) {
  std::size_t off = 0;
  for (auto& p : params) {
    for (double& v : p.values) v += delta[off++];
  }
}

EnsembleModel make_ensemble(Partition partition, MlpSpec spec, std::uint64_t seed) {
  spec.validate();
  EnsembleModel model;
  model.partition = std::move(partition);
  model.mlp_spec = spec;
  model.params.reserve(model.partition.balls.size());
  for (int j = 0; j < model.partition.size(); ++j)
    model.params.push_back(init_params(spec, derive_seed(seed, "expert", j)));
  return model;
}

std::vector<double> predict(const EnsembleModel& model, std::span<const double> x) {
  const GateEval g = gate(model.partition, x);
  std::vector<double> out(model.mlp_spec.output_dim, 0.0);
  for (std::size_t i = 0; i < g.active.size(); ++i) {
    const std::vector<double> u = forward(model.mlp_spec, model.params[g.active[i]], x);
    for (int c = 0; c < model.mlp_spec.output_dim; ++c) out[c] += g.lambda[i] * u[c];
  }
  return out;
}

Bundle predict_bundle(const EnsembleModel& model, std::span<const double> x) {
  const GateEval g = gate(model.partition, x);
  const int d = model.mlp_spec.input_dim;
  const int m = model.mlp_spec.output_dim;
  Bundle out = Bundle::zeros(m, d);
  for (std::size_t i = 0; i < g.active.size(); ++i) {
    const Bundle u = bundle(model.mlp_spec, model.params[g.active[i]], x);
    const double lam = g.lambda[i];
    for (int c = 0; c < m; ++c) {
      out.value[c] += lam * u.value[c];
      for (int a = 0; a < d; ++a)
        out.g(c, a) += g.dl(static_cast<int>(i), a) * u.value[c] + lam * u.g(c, a);
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
          out.h(c, a, b) += g.d2l(static_cast<int>(i), a, b) * u.value[c]
              + g.dl(static_cast<int>(i), a) * u.g(c, b)
              + g.dl(static_cast<int>(i), b) * u.g(c, a)
              + lam * u.h(c, a, b);
    }
  }
  return out;
}

void sparse_param_row(const EnsembleModel& model, std::span<const double> x,
                      const Bundle& cotangent, SparseRow& out) {
  const GateEval g = gate(model.partition, x);
  const int d = model.mlp_spec.input_dim;
  const int m = model.mlp_spec.output_dim;
  out.clear();
  // The model bundle is linear in each expert bundle with gate-derived
  // coefficients, so the per-expert cotangent only involves the gate.
  Bundle wj = Bundle::zeros(m, d);
  std::vector<double> grad;
  for (std::size_t i = 0; i < g.active.size(); ++i) {
    const int ii = static_cast<int>(i);
    const double lam = g.lambda[i];
    for (int c = 0; c < m; ++c) {
      double wv = cotangent.value[c] * lam;
      for (int a = 0; a < d; ++a) wv += cotangent.g(c, a) * g.dl(ii, a);
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) wv += cotangent.h(c, a, b) * g.d2l(ii, a, b);
      wj.value[c] = wv;
      for (int cdim = 0; cdim < d; ++cdim) {
        double wg = cotangent.g(c, cdim) * lam;
        for (int a = 0; a < d; ++a)
          wg += cotangent.h(c, a, cdim) * g.dl(ii, a) + cotangent.h(c, cdim, a) * g.dl(ii, a);
        wj.g(c, cdim) = wg;
      }
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) wj.h(c, a, b) = cotangent.h(c, a, b) * lam;
    }
    bundle_with_vjp(model.mlp_spec, model.params[g.active[i]], x, wj, grad);
    const std::size_t base = model.param_offset(g.active[i]);
    for (std::size_t k = 0; k < grad.size(); ++k) {
      out.cols.push_back(static_cast<std::int32_t>(base + k));
      out.vals.push_back(grad[k]);
    }
  }
}

}  // namespace poupinn
