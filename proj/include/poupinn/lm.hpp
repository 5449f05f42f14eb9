#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "poupinn/csr.hpp"
#include "poupinn/ensemble.hpp"
#include "poupinn/pde.hpp"

namespace poupinn {

/// Interior points with their frozen density values, plus boundary points.
/// Flat, point-major storage; dim matches the problem domain.
struct SampleSet {
  int dim = 0;
  std::vector<double> interior;
  std::vector<double> interior_pdf;
  std::vector<double> boundary;
  std::uint64_t seed = 0;

  std::size_t n_interior() const {
    return dim ? interior.size() / static_cast<std::size_t>(dim) : 0;
  }
  std::size_t n_boundary() const {
    return dim ? boundary.size() / static_cast<std::size_t>(dim) : 0;
  }
};

/// Rows: one per interior residual component, then one per boundary point,
/// scaled by 1/sqrt(N) so that ||r||^2 reproduces the mean-based loss.
struct AssembledSystem {
  SparseMatrixCSR jacobian;
  std::vector<double> residual;
};

AssembledSystem assemble(const EnsembleModel& model, const ProblemSpec& problem,
                         const SampleSet& samples);

/// Residual vector only (same scaling); used for step acceptance tests.
std::vector<double> residual_vector(const EnsembleModel& model,
                                    const ProblemSpec& problem,
                                    const SampleSet& samples);

/// H = J^T J, stored full (both triangles), block-sparse by support overlap.
SparseMatrixCSR normal_matrix(const SparseMatrixCSR& j);

struct LmState {
  double eta = 1e-2;
  double eta_min = 1e-12;
  double eta_max = 1e8;
  double accept_divisor = 3.0;
  double reject_factor = 2.0;
};

struct LmSolveOptions {
  std::int64_t dense_threshold = 2000;  // columns at or below: direct factorization
  double cg_tolerance = 1e-12;          // relative residual target
  double residual_check = 1e-10;        // postcondition on either path
};

struct LmSolveStats {
  bool used_dense = false;
  int cg_iterations = 0;
  double relative_residual = 0.0;
  std::size_t workspace_bytes = 0;
};

/// Solves (H + eta I) delta = -g. eta is clamped to at least
/// LmState{}.eta_min. Dense Cholesky below the column threshold, otherwise
/// Jacobi-preconditioned conjugate gradients; throws SolverStall past
/// 10 * n_cols iterations.
std::vector<double> lm_solve(const SparseMatrixCSR& h, std::span<const double> g,
                             double eta, const LmSolveOptions& options = {},
                             LmSolveStats* stats = nullptr);

/// Marquardt damping schedule; NaN losses count as rejects.
bool damping_update(LmState& state, double loss_before, double loss_after);

/// Scale-aware initial damping: 1e-2 * trace(H) / n.
double initial_damping(const SparseMatrixCSR& h);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// In-place Adam descent step (pass the negated gradient to ascend).
void adam_step(std::span<double> params, std::span<const double> grads,
               AdamState& state, double lr);

}  // namespace poupinn
