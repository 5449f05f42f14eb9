#include "poupinn/lm.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "poupinn/errors.hpp"
#include "poupinn/threading.hpp"

namespace poupinn {

namespace {

std::span<const double> point_at(const std::vector<double>& flat, std::size_t i, int dim) {
  return std::span<const double>(flat.data() + i * dim, dim);
}

}  // namespace

AssembledSystem assemble(const EnsembleModel& model, const ProblemSpec& problem,
                         const SampleSet& samples) {
  const int dim = samples.dim;
  const std::size_t ni = samples.n_interior();
  const std::size_t nb = samples.n_boundary();
  const double wi = ni ? 1.0 / std::sqrt(static_cast<double>(ni)) : 0.0;
  const double wb = nb ? 1.0 / std::sqrt(static_cast<double>(nb)) : 0.0;

  CsrBuilder builder(static_cast<std::int64_t>(ni + nb), model.total_params());
  std::vector<double> residuals(ni + nb, 0.0);

  parallel_chunks(ni + nb, 64, [&](std::size_t begin, std::size_t end) {
    SparseRow row;
    for (std::size_t i = begin; i < end; ++i) {
      try {
        if (i < ni) {
          const auto x = point_at(samples.interior, i, dim);
          const Bundle u = predict_bundle(model, x);
          const ResidualEval res = residual(problem, u, x);
          residuals[i] = wi * res.value[0];
          sparse_param_row(model, x, res.bundle_cotangents[0], row);
          for (double& v : row.vals) v *= wi;
        } else {
          const auto x = point_at(samples.boundary, i - ni, dim);
          const std::vector<double> u = predict(model, x);
          residuals[i] = wb * boundary_residual(problem, u[0], x);
          Bundle w = Bundle::zeros(1, dim);
          w.value[0] = wb;
          sparse_param_row(model, x, w, row);
        }
        builder.set_row(static_cast<std::int64_t>(i), row.cols, row.vals);
      } catch (const UncoveredPoint&) {
        throw UncoveredPoint("assemble: sample point " + std::to_string(i) +
                             " is not covered by the partition");
      }
    }
  });

  AssembledSystem out;
  out.jacobian = builder.finish();
  out.residual = std::move(residuals);
  return out;
}

std::vector<double> residual_vector(const EnsembleModel& model,
                                    const ProblemSpec& problem,
                                    const SampleSet& samples) {
  const int dim = samples.dim;
  const std::size_t ni = samples.n_interior();
  const std::size_t nb = samples.n_boundary();
  const double wi = ni ? 1.0 / std::sqrt(static_cast<double>(ni)) : 0.0;
  const double wb = nb ? 1.0 / std::sqrt(static_cast<double>(nb)) : 0.0;
  std::vector<double> r(ni + nb, 0.0);
  parallel_chunks(ni + nb, 256, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      if (i < ni) {
        const auto x = point_at(samples.interior, i, dim);
        const Bundle u = predict_bundle(model, x);
        r[i] = wi * residual(problem, u, x).value[0];
      } else {
        const auto x = point_at(samples.boundary, i - ni, dim);
        r[i] = wb * boundary_residual(problem, predict(model, x)[0], x);
      }
    }
  });
  return r;
}

SparseMatrixCSR normal_matrix(const SparseMatrixCSR& j) {
  const std::int64_t n = j.n_cols;

  // CSC view of J: per column, the rows touching it and the entry values.
  std::vector<std::int64_t> col_ptr(static_cast<std::size_t>(n) + 1, 0);
  for (std::int32_t c : j.col_idx) ++col_ptr[c + 1];
  for (std::int64_t c = 0; c < n; ++c) col_ptr[c + 1] += col_ptr[c];
  std::vector<std::int32_t> col_rows(j.col_idx.size());
  std::vector<double> col_vals(j.col_idx.size());
  {
    std::vector<std::int64_t> cursor(col_ptr.begin(), col_ptr.end() - 1);
    for (std::int64_t r = 0; r < j.n_rows; ++r)
      for (std::int64_t k = j.row_ptr[r]; k < j.row_ptr[r + 1]; ++k) {
        const std::int32_t c = j.col_idx[k];
        col_rows[cursor[c]] = static_cast<std::int32_t>(r);
        col_vals[cursor[c]] = j.values[k];
        ++cursor[c];
      }
  }

  // Upper triangle of H row by row: H(i,c) = sum_r J(r,i) J(r,c), c >= i.
  // Row lists in the CSC view are ascending, so accumulation order is fixed
  // and the result does not depend on the thread count.
  std::vector<std::vector<std::int32_t>> upper_cols(static_cast<std::size_t>(n));
  std::vector<std::vector<double>> upper_vals(static_cast<std::size_t>(n));
  parallel_chunks(static_cast<std::size_t>(n), 32, [&](std::size_t begin, std::size_t end) {
    std::vector<double> acc(static_cast<std::size_t>(n), 0.0);
    std::vector<std::int64_t> stamp(static_cast<std::size_t>(n), -1);
    std::vector<std::int32_t> touched;
    for (std::size_t i = begin; i < end; ++i) {
      touched.clear();
      for (std::int64_t ci = col_ptr[i]; ci < col_ptr[i + 1]; ++ci) {
        const std::int32_t r = col_rows[ci];
        const double vri = col_vals[ci];
        const std::int64_t lo = j.row_ptr[r], hi = j.row_ptr[r + 1];
        const auto* first = j.col_idx.data() + lo;
        const auto* last = j.col_idx.data() + hi;
        const auto* it = std::lower_bound(first, last, static_cast<std::int32_t>(i));
        for (std::int64_t k = lo + (it - first); k < hi; ++k) {
          const std::int32_t c = j.col_idx[k];
          if (stamp[c] != static_cast<std::int64_t>(i)) {
            stamp[c] = static_cast<std::int64_t>(i);
            acc[c] = 0.0;
            touched.push_back(c);
          }
          acc[c] += vri * j.values[k];
        }
      }
      std::sort(touched.begin(), touched.end());
      upper_cols[i].assign(touched.begin(), touched.end());
      upper_vals[i].resize(touched.size());
      for (std::size_t t = 0; t < touched.size(); ++t)
        upper_vals[i][t] = acc[touched[t]];
    }
  });

  // Mirror into a full symmetric CSR. Lower entries of row c are the upper
  // entries (i, c) with i < c, arriving in ascending i when rows are walked
  // in order.
  SparseMatrixCSR h;
  h.n_rows = n;
  h.n_cols = n;
  h.row_ptr.assign(static_cast<std::size_t>(n) + 1, 0);
  for (std::int64_t i = 0; i < n; ++i) {
    h.row_ptr[i + 1] += static_cast<std::int64_t>(upper_cols[i].size());
    for (std::int32_t c : upper_cols[i])
      if (c > i) ++h.row_ptr[c + 1];
  }
  for (std::int64_t i = 0; i < n; ++i) h.row_ptr[i + 1] += h.row_ptr[i];
  h.col_idx.assign(static_cast<std::size_t>(h.row_ptr[n]), 0);
  h.values.assign(static_cast<std::size_t>(h.row_ptr[n]), 0.0);
  std::vector<std::int64_t> cursor(h.row_ptr.begin(), h.row_ptr.end() - 1);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < upper_cols[i].size(); ++t) {
      const std::int32_t c = upper_cols[i][t];
      if (c <= i) continue;
      h.col_idx[cursor[c]] = static_cast<std::int32_t>(i);
      h.values[cursor[c]] = upper_vals[i][t];
      ++cursor[c];
    }
  for (std::int64_t i = 0; i < n; ++i) {
    std::memcpy(h.col_idx.data() + cursor[i], upper_cols[i].data(),
                upper_cols[i].size() * sizeof(std::int32_t));
    std::memcpy(h.values.data() + cursor[i], upper_vals[i].data(),
                upper_vals[i].size() * sizeof(double));
  }
  h.check_invariants();
  return h;
}

std::vector<double> lm_solve(const SparseMatrixCSR& h, std::span<const double> g,
                             double eta, const LmSolveOptions& options,
                             LmSolveStats* stats) {
  const std::int64_t n = h.n_cols;
  if (h.n_rows != n) throw Error("lm_solve: matrix must be square");
  eta = std::max(eta, LmState{}.eta_min);

  LmSolveStats local;
  std::vector<double> delta(static_cast<std::size_t>(n), 0.0);
  const double gnorm = std::sqrt(std::inner_product(g.begin(), g.end(), g.begin(), 0.0));
  if (gnorm == 0.0) {
    if (stats) *stats = local;
    return delta;
  }

  auto apply = [&](std::span<const double> x, std::span<double> y) {
    h.multiply(x, y);
    for (std::int64_t i = 0; i < n; ++i) y[i] += eta * x[i];
  };
  auto rel_residual = [&](std::span<const double> d) {
    std::vector<double> ax(static_cast<std::size_t>(n));
    apply(d, ax);
    double s = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      const double ri = ax[i] + g[i];
      s += ri * ri;
    }
    return std::sqrt(s) / gnorm;
  };

  if (n <= options.dense_threshold) {
    local.used_dense = true;
    Eigen::MatrixXd a = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic,
                                                       Eigen::Dynamic, Eigen::RowMajor>>(
        h.to_dense().data(), n, n);
    for (std::int64_t i = 0; i < n; ++i) a(i, i) += eta;
    // Jacobi equilibration: parameter scales differ by orders of magnitude
    // (weights vs biases vs layers), which otherwise wastes precision in the
    // factorization. Solve D (H + eta I) D z = -D g, delta = D z.
    Eigen::VectorXd scale(n);
    for (std::int64_t i = 0; i < n; ++i) scale(i) = 1.0 / std::sqrt(a(i, i));
    Eigen::MatrixXd as = scale.asDiagonal() * a * scale.asDiagonal();
    Eigen::VectorXd rhs = -Eigen::Map<const Eigen::VectorXd>(g.data(), n);
    Eigen::VectorXd rhs_s = scale.asDiagonal() * rhs;
    Eigen::LLT<Eigen::MatrixXd> llt(as);
    Eigen::VectorXd x;
    if (llt.info() == Eigen::Success) {
      x = scale.asDiagonal() * llt.solve(rhs_s);
    } else {
      x = scale.asDiagonal() * as.ldlt().solve(rhs_s).eval();
    }
    // iterative refinement on the original system until it is solved tightly
    for (int pass = 0; pass < 4; ++pass) {
      Eigen::VectorXd res = a * x - rhs;
      if (res.norm() / gnorm <= options.residual_check) break;
      Eigen::VectorXd corr_s = scale.asDiagonal() * res;
      Eigen::VectorXd corr = llt.info() == Eigen::Success
                                 ? llt.solve(corr_s).eval()
                                 : as.ldlt().solve(corr_s).eval();
      x -= scale.asDiagonal() * corr;
    }
    std::memcpy(delta.data(), x.data(), static_cast<std::size_t>(n) * sizeof(double));
    local.workspace_bytes = 2 * static_cast<std::size_t>(n) * n * sizeof(double);
  } else {
    // Jacobi-preconditioned CG on the damped (positive definite) system.
    std::vector<double> inv_diag(static_cast<std::size_t>(n), 0.0);
    for (std::int64_t r = 0; r < n; ++r) {
      double dia = eta;
      for (std::int64_t k = h.row_ptr[r]; k < h.row_ptr[r + 1]; ++k)
        if (h.col_idx[k] == r) dia += h.values[k];
      inv_diag[r] = 1.0 / dia;
    }
    std::vector<double> r(static_cast<std::size_t>(n)), z(static_cast<std::size_t>(n)),
        p(static_cast<std::size_t>(n)), ap(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) r[i] = -g[i];
    for (std::int64_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
    p = z;
    double rz = std::inner_product(r.begin(), r.end(), z.begin(), 0.0);
    const std::int64_t max_iter = 10 * n;
    std::int64_t it = 0;
    const double target = options.cg_tolerance * gnorm;
    for (; it < max_iter; ++it) {
      double rn = std::sqrt(std::inner_product(r.begin(), r.end(), r.begin(), 0.0));
      if (rn <= target) break;
      apply(p, ap);
      const double pap = std::inner_product(p.begin(), p.end(), ap.begin(), 0.0);
      if (pap <= 0.0) throw SolverStall("cg: curvature lost (matrix not PD?)");
      const double alpha = rz / pap;
      for (std::int64_t i = 0; i < n; ++i) delta[i] += alpha * p[i];
      for (std::int64_t i = 0; i < n; ++i) r[i] -= alpha * ap[i];
      for (std::int64_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
      const double rz_new = std::inner_product(r.begin(), r.end(), z.begin(), 0.0);
      const double beta = rz_new / rz;
      rz = rz_new;
      for (std::int64_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    if (it >= max_iter)
      throw SolverStall("cg: exceeded " + std::to_string(max_iter) + " iterations");
    local.cg_iterations = static_cast<int>(it);
    local.workspace_bytes = 5 * static_cast<std::size_t>(n) * sizeof(double);
  }

  local.relative_residual = rel_residual(delta);
  if (local.relative_residual > options.residual_check)
    throw SolverStall("lm_solve: relative residual " +
                      std::to_string(local.relative_residual) + " above target");
  if (stats) *stats = local;
  return delta;
}

bool damping_update(LmState& state, double loss_before, double loss_after) {
  const bool accept = std::isfinite(loss_after) && loss_after < loss_before;
  if (accept)
    state.eta = std::max(state.eta / state.accept_divisor, state.eta_min);
  else
    state.eta = std::min(state.eta * state.reject_factor, state.eta_max);
  return accept;
}

double initial_damping(const SparseMatrixCSR& h) {
  double trace = 0.0;
  for (std::int64_t r = 0; r < h.n_rows; ++r)
    for (std::int64_t k = h.row_ptr[r]; k < h.row_ptr[r + 1]; ++k)
      if (h.col_idx[k] == r) trace += h.values[k];
  return 1e-2 * trace / std::max<std::int64_t>(1, h.n_cols);
}

void adam_step(std::span<double> params, std::span<const double> grads,
               AdamState& state, double lr) {
  if (params.size() != grads.size()) throw Error("adam_step: shape mismatch");
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
    state.step = 0;
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
  }
}

}  // namespace poupinn
