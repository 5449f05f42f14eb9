#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "poupinn/lm.hpp"

namespace poupinn {

/// One Levenberg-Marquardt update on the supervised sin(4x)sin(y) task:
/// assemble J, form J^T J, solve once, and record size/sparsity/memory/time.
struct BenchRow {
  int balls = 0;
  int width = 0;
  std::size_t n_params = 0;
  std::size_t n_rows = 0;
  std::int64_t nnz_j = 0;
  double nnz_j_pct = 0.0;
  std::int64_t nnz_h = 0;
  std::size_t h_sparse_bytes = 0;
  std::size_t h_dense_bytes = 0;   // 8 n^2, computed arithmetically
  std::size_t solver_workspace_bytes = 0;
  double assemble_s = 0.0;
  double normal_s = 0.0;
  double solve_s = 0.0;
  bool dense_path = false;
  bool computed = true;  // false: too large to materialize, structural stats only
};

struct BenchOptions {
  std::size_t n_points = 2000;
  std::uint64_t seed = 0;
  LmSolveOptions lm;
  std::size_t materialize_budget_bytes = static_cast<std::size_t>(512) << 20;
};

BenchRow bench_case(int balls, int width, const BenchOptions& options);

/// Hidden width whose two-hidden-layer expert count approximates
/// target_params / balls.
int width_for_target(std::size_t target_params, int balls);

std::vector<BenchRow> run_scale_bench(const std::vector<std::size_t>& target_sizes,
                                      const std::vector<int>& ball_counts,
                                      const BenchOptions& options);

void write_bench_csv(const std::vector<BenchRow>& rows, const std::string& path);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace poupinn
