#include "poupinn/checks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "poupinn/ensemble.hpp"
#include "poupinn/errors.hpp"
#include "poupinn/lm.hpp"
#include "poupinn/partition.hpp"
#include "poupinn/pde.hpp"
#include "poupinn/rng.hpp"
#include "poupinn/sampler.hpp"

namespace poupinn {

void project_to_simplex(std::span<double> q) {
  const std::size_t n = q.size();
  std::vector<double> u(q.begin(), q.end());
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cum = 0.0, tau = 0.0;
  std::size_t rho = 0;
  for (std::size_t k = 0; k < n; ++k) {
    cum += u[k];
    const double t = (cum - 1.0) / static_cast<double>(k + 1);
    if (u[k] - t > 0.0) {
      rho = k + 1;
      tau = t;
    }
  }
  (void)rho;
  for (double& v : q) v = std::max(v - tau, 0.0);
}

std::vector<double> brute_force_pstar(std::span<const double> squared_residuals,
                                      double beta, double cell_volume,
                                      int max_iterations, double tolerance) {
  const std::size_t n = squared_residuals.size();
  std::vector<double> q(n, 1.0 / static_cast<double>(n));
  std::vector<double> g(n), next(n);
  const double floor_q = 1e-12 / static_cast<double>(n);
  // Diagonal curvature of the entropy term is beta/q ~ beta*n near uniform.
  const double step = 0.25 / (beta * static_cast<double>(n));
  for (int it = 0; it < max_iterations; ++it) {
    for (std::size_t c = 0; c < n; ++c)
      g[c] = squared_residuals[c] - beta * (std::log(q[c] / cell_volume) + 1.0);
    for (std::size_t c = 0; c < n; ++c) next[c] = q[c] + step * g[c];
    project_to_simplex(next);
    double total = 0.0;
    for (double& v : next) {
      v = std::max(v, floor_q);
      total += v;
    }
    double delta = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      next[c] /= total;
      delta = std::max(delta, std::abs(next[c] - q[c]));
    }
    q.swap(next);
    if (delta < tolerance) break;
  }
  for (double& v : q) v /= cell_volume;
  return q;
}

namespace {

Partition random_partition(Rng& rng, int m, int dim) {
  Partition part;
  part.radius_min = 0.05;
  part.radius_max = 2.0;
  for (int j = 0; j < m; ++j) {
    Ball b;
    for (int a = 0; a < dim; ++a) b.center.push_back(rng.uniform(0.0, 1.0));
    b.radius = rng.uniform(0.35, 0.9);
    part.balls.push_back(std::move(b));
  }
  return part;
}

CheckResult check_partition_of_unity(std::uint64_t seed, bool corrupt) {
  CheckResult r{"partition-of-unity", true, ""};
  double worst_sum = 0.0, worst_grad = 0.0;
  for (int s = 0; s < 5; ++s) {
    Rng rng(derive_seed(seed, "pou", s));
    const Partition part = random_partition(rng, 8, 2);
    int tested = 0;
    while (tested < 2000) {
      double x[2] = {rng.uniform(), rng.uniform()};
      double total = 0.0;
      for (const Ball& b : part.balls) total += phi(b, x);
      if (total == 0.0) continue;
      ++tested;
      const GateEval g = gate(part, x);
      double sum = 0.0, dsum0 = 0.0, dsum1 = 0.0;
      for (std::size_t i = 0; i < g.active.size(); ++i) {
        sum += g.lambda[i];
        dsum0 += g.dl(static_cast<int>(i), 0);
        dsum1 += g.dl(static_cast<int>(i), 1);
      }
      if (corrupt) sum *= 1.01;
      worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
      worst_grad = std::max({worst_grad, std::abs(dsum0), std::abs(dsum1)});
    }
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "max |sum(lambda)-1| = %.3g, max |sum(dlambda)| = %.3g",
                worst_sum, worst_grad);
  r.detail = buf;
  r.passed = worst_sum < 1e-12 && worst_grad < 1e-10;
  return r;
}

CheckResult check_gate_derivatives(std::uint64_t seed) {
  CheckResult r{"gate-fd-agreement", true, ""};
  Rng rng(derive_seed(seed, "gate-fd"));
  const Partition part = random_partition(rng, 6, 2);
  const double h = 1e-6;
  double worst = 0.0;
  int tested = 0;
  while (tested < 50) {
    double x[2] = {rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
    double total = 0.0;
    bool near_edge = false;
    for (const Ball& b : part.balls) {
      total += phi(b, x);
      const double dist = std::sqrt(squared_distance(std::span<const double>(x, 2), b.center));
      if (std::abs(dist - b.radius) < 64 * h) near_edge = true;
    }
    if (total == 0.0 || near_edge) {
      x[0] = rng.uniform();
      continue;
    }
    ++tested;
    const GateEval g = gate(part, x);
    for (int a = 0; a < 2; ++a) {
      double xp[2] = {x[0], x[1]}, xm[2] = {x[0], x[1]};
      xp[a] += h;
      xm[a] -= h;
      const GateEval gp = gate(part, xp), gm = gate(part, xm);
      for (std::size_t i = 0; i < g.active.size(); ++i) {
        // match active lists by ball id
        auto find = [&](const GateEval& ge, int ball) -> double {
          for (std::size_t k = 0; k < ge.active.size(); ++k)
            if (ge.active[k] == ball) return ge.lambda[k];
          return 0.0;
        };
        const double fd = (find(gp, g.active[i]) - find(gm, g.active[i])) / (2 * h);
        const double an = g.dl(static_cast<int>(i), a);
        worst = std::max(worst, std::abs(fd - an) / std::max(1.0, std::abs(an)));
      }
    }
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "max rel err = %.3g", worst);
  r.detail = buf;
  r.passed = worst < 1e-6;
  return r;
}

CheckResult check_jacobian_fd(std::uint64_t seed) {
  CheckResult r{"jacobian-fd-agreement", true, ""};
  const ProblemSpec problem = make_helmholtz();
  Partition part;
  part.radius_min = 0.05;
  part.radius_max = 2.0;
  part.balls = {{{0.35, 0.5}, 0.6}, {{0.7, 0.45}, 0.65}};
  MlpSpec spec;
  spec.input_dim = 2;
  spec.hidden_widths = {6};
  spec.output_dim = 1;
  EnsembleModel model = make_ensemble(part, spec, derive_seed(seed, "jfd"));
  Rng rng(derive_seed(seed, "jfd-pts"));
  for (auto& p : model.params)
    for (double& v : p.values) v = rng.uniform(-0.8, 0.8);

  SampleSet samples;
  samples.dim = 2;
  int got = 0;
  while (got < 10) {
    double x[2] = {rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
    double total = 0.0;
    for (const Ball& b : part.balls) total += phi(b, x);
    if (total == 0.0) continue;
    samples.interior.insert(samples.interior.end(), {x[0], x[1]});
    ++got;
  }
  const AssembledSystem sys = assemble(model, problem, samples);
  const std::vector<double> dense = sys.jacobian.to_dense();

  const double h = 1e-5;
  std::vector<double> theta = model.flat_params();
  double max_abs = 0.0;
  for (double v : dense) max_abs = std::max(max_abs, std::abs(v));
  double worst = 0.0;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    EnsembleModel pm = model, mm = model;
    std::vector<double> tp = theta, tm = theta;
    tp[k] += h;
    tm[k] -= h;
    pm.set_flat_params(tp);
    mm.set_flat_params(tm);
    const std::vector<double> rp = residual_vector(pm, problem, samples);
    const std::vector<double> rm = residual_vector(mm, problem, samples);
    for (std::size_t row = 0; row < rp.size(); ++row) {
      const double fd = (rp[row] - rm[row]) / (2 * h);
      worst = std::max(worst, std::abs(fd - dense[row * theta.size() + k]));
    }
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "max |J_fd - J| / max|J| = %.3g", worst / max_abs);
  r.detail = buf;
  r.passed = worst / max_abs < 1e-6;
  return r;
}

CheckResult check_pstar_oracle(std::uint64_t seed) {
  CheckResult r{"closed-form-pstar", true, ""};
  double worst = 0.0;
  for (int f = 0; f < 2; ++f) {
    Rng rng(derive_seed(seed, "pstar", f));
    const int n = 30 * 30;
    const double cell = 1.0 / n;
    std::vector<double> r2(n);
    for (double& v : r2) v = rng.uniform(0.0, 1.5);
    const double beta = 0.75;
    const auto closed = closed_form_pstar(r2, beta, cell);
    const auto brute = brute_force_pstar(r2, beta, cell);
    for (int i = 0; i < n; ++i) worst = std::max(worst, std::abs(closed[i] - brute[i]));
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "sup |closed - brute| = %.3g", worst);
  r.detail = buf;
  r.passed = worst < 1e-6;
  return r;
}

CheckResult check_sampler_chi2(std::uint64_t seed) {
  CheckResult r{"sampler-uniformity-chi2", true, ""};
  Partition part;
  part.radius_min = 0.05;
  part.radius_max = 1e3;
  part.balls = {{{0.5, 0.5}, 120.0}};
  AdaptiveDensity density(part, Box{{0, 0}, {1, 1}}, 1.0, Regularizer::Entropy,
                          derive_seed(seed, "chi2-density"), 20000);
  const SampleSet set = density.sample(10000, derive_seed(seed, "chi2-draw"));
  std::vector<int> bins(100, 0);
  for (std::size_t i = 0; i < set.n_interior(); ++i) {
    const int bx = std::min(9, static_cast<int>(set.interior[2 * i] * 10));
    const int by = std::min(9, static_cast<int>(set.interior[2 * i + 1] * 10));
    ++bins[by * 10 + bx];
  }
  const double expected = 10000.0 / 100.0;
  double chi2 = 0.0;
  for (int c : bins) chi2 += (c - expected) * (c - expected) / expected;
  char buf[96];
  // 1% upper critical value of chi^2 with 99 degrees of freedom
  std::snprintf(buf, sizeof buf, "chi2 = %.2f (critical 134.64)", chi2);
  r.detail = buf;
  r.passed = chi2 < 134.642;
  return r;
}

CheckResult check_sampler_counts(std::uint64_t seed) {
  CheckResult r{"sampler-mixture-counts", true, ""};
  Partition part;
  part.radius_min = 0.01;
  part.radius_max = 2.0;
  part.balls = {{{0.25, 0.5}, 0.2}, {{0.75, 0.5}, 0.2}};
  AdaptiveDensity density(part, Box{{0, 0}, {1, 1}}, 1.0, Regularizer::Entropy,
                          derive_seed(seed, "cnt-density"), 50000);
  const std::size_t n = 20000;
  const SampleSet set = density.sample(n, derive_seed(seed, "cnt-draw"));
  std::size_t left = 0;
  for (std::size_t i = 0; i < set.n_interior(); ++i)
    if (set.interior[2 * i] < 0.5) ++left;
  const double sigma = std::sqrt(0.25 * static_cast<double>(n));
  const double dev = std::abs(static_cast<double>(left) - n / 2.0);
  char buf[96];
  std::snprintf(buf, sizeof buf, "left count deviation = %.1f (3 sigma = %.1f)", dev,
                3 * sigma);
  r.detail = buf;
  r.passed = dev <= 3 * sigma;
  return r;
}

CheckResult check_lm_one_step(std::uint64_t seed) {
  CheckResult r{"lm-linear-one-step", true, ""};
  Rng rng(derive_seed(seed, "lm1"));
  const int rows = 50, cols = 20;
  CsrBuilder builder(rows, cols);
  std::vector<double> jd(static_cast<std::size_t>(rows) * cols);
  std::vector<std::int32_t> all_cols(cols);
  std::iota(all_cols.begin(), all_cols.end(), 0);
  for (int i = 0; i < rows; ++i) {
    std::vector<double> vals(cols);
    for (double& v : vals) v = rng.uniform(-1.0, 1.0);
    for (int c = 0; c < cols; ++c) jd[static_cast<std::size_t>(i) * cols + c] = vals[c];
    builder.set_row(i, all_cols, vals);
  }
  SparseMatrixCSR j = builder.finish();
  std::vector<double> theta(cols), res(rows);
  for (double& v : theta) v = rng.uniform(-1.0, 1.0);
  j.multiply(theta, res);  // residual(theta) = J theta - b with b = 0 target
  SparseMatrixCSR h = normal_matrix(j);
  std::vector<double> g(cols);
  j.multiply_transpose(res, g);
  const std::vector<double> delta = lm_solve(h, g, 1e-12);
  std::vector<double> after(rows);
  for (int i = 0; i < cols; ++i) theta[i] += delta[i];
  j.multiply(theta, after);
  double norm = 0.0;
  for (double v : after) norm += v * v;
  norm = std::sqrt(norm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "post-step residual = %.3g", norm);
  r.detail = buf;
  r.passed = norm < 1e-10;
  return r;
}

CheckResult check_adam_reference(std::uint64_t seed) {
  CheckResult r{"adam-reference-trace", true, ""};
  Rng rng(derive_seed(seed, "adam"));
  const int n = 4;
  std::vector<double> params(n), ref(n), m(n, 0.0), v(n, 0.0);
  for (int i = 0; i < n; ++i) params[i] = ref[i] = rng.uniform(-1.0, 1.0);
  AdamState state;
  double worst = 0.0;
  for (int t = 1; t <= 10; ++t) {
    std::vector<double> grad(n);
    for (double& gv : grad) gv = rng.uniform(-1.0, 1.0);
    adam_step(params, grad, state, 0.01);
    // straight transcription of the bias-corrected update
    for (int i = 0; i < n; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * grad[i];
      v[i] = 0.999 * v[i] + 0.001 * grad[i] * grad[i];
      const double mh = m[i] / (1.0 - std::pow(0.9, t));
      const double vh = v[i] / (1.0 - std::pow(0.999, t));
      ref[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
      worst = std::max(worst, std::abs(ref[i] - params[i]));
    }
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "max trace deviation = %.3g", worst);
  r.detail = buf;
  r.passed = worst < 1e-12;
  return r;
}

}  // namespace

std::vector<CheckResult> run_invariant_suite(std::uint64_t seed, bool corrupt_gate) {
  std::vector<CheckResult> results;
  results.push_back(check_partition_of_unity(seed, corrupt_gate));
  results.push_back(check_gate_derivatives(seed));
  results.push_back(check_jacobian_fd(seed));
  results.push_back(check_pstar_oracle(seed));
  results.push_back(check_sampler_chi2(seed));
  results.push_back(check_sampler_counts(seed));
  results.push_back(check_lm_one_step(seed));
  results.push_back(check_adam_reference(seed));
  return results;
}

}  // namespace poupinn
