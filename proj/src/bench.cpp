#include "poupinn/bench.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "poupinn/errors.hpp"
#include "poupinn/pde.hpp"
#include "poupinn/rng.hpp"

namespace poupinn {

int width_for_target(std::size_t target_params, int balls) {
  // two hidden layers of width w: (2w + w) + (w^2 + w) + (w + 1) = w^2 + 5w + 1
  const double per = static_cast<double>(target_params) / balls;
  const double w = (-5.0 + std::sqrt(25.0 + 4.0 * (per - 1.0))) / 2.0;
  return std::max(2, static_cast<int>(std::lround(w)));
}

BenchRow bench_case(int balls, int width, const BenchOptions& options) {
  using clock = std::chrono::steady_clock;
  const ProblemSpec problem = make_supervised(supervised_default_target);
  const Box& box = problem.domain;

  std::vector<double> cloud =
      latin_hypercube(box, options.n_points, derive_seed(options.seed, "bench-cloud"));
  for (int corner = 0; corner < 4; ++corner) {
    cloud.push_back(corner & 1 ? box.hi[0] : box.lo[0]);
    cloud.push_back(corner & 2 ? box.hi[1] : box.lo[1]);
  }
  KmeansResult km = kmeans_init(cloud, 2, balls, derive_seed(options.seed, "bench-km"));

  MlpSpec spec;
  spec.input_dim = 2;
  spec.hidden_widths = {width, width};
  spec.output_dim = 1;
  EnsembleModel model =
      make_ensemble(km.partition, spec, derive_seed(options.seed, "bench-params"));

  BenchRow row;
  row.balls = balls;
  row.width = width;
  row.n_params = model.total_params();
  row.n_rows = options.n_points;
  row.h_dense_bytes = 8 * row.n_params * row.n_params;

  SampleSet samples;
  samples.dim = 2;
  samples.interior.assign(cloud.begin(), cloud.end() - 8);  // corners excluded

  // Structural sizes are known without assembly: count covering balls per point.
  std::int64_t nnz_j = 0;
  const std::size_t per = model.per_expert();
  for (std::size_t i = 0; i < samples.n_interior(); ++i) {
    const std::span<const double> x(samples.interior.data() + 2 * i, 2);
    for (const Ball& b : model.partition.balls)
      if (phi(b, x) > 0.0) nnz_j += static_cast<std::int64_t>(per);
  }
  row.nnz_j = nnz_j;
  row.nnz_j_pct =
      100.0 * static_cast<double>(nnz_j) /
      (static_cast<double>(row.n_rows) * static_cast<double>(row.n_params));

  const std::size_t j_bytes = static_cast<std::size_t>(nnz_j) * 12;
  if (j_bytes > options.materialize_budget_bytes) {
    row.computed = false;
    // Fully dense coupling (every ball pair shares points) at M = 1.
    if (balls == 1)
      row.nnz_h = static_cast<std::int64_t>(row.n_params) *
                  static_cast<std::int64_t>(row.n_params);
    return row;
  }

  auto tic = clock::now();
  AssembledSystem sys = assemble(model, problem, samples);
  row.assemble_s = std::chrono::duration<double>(clock::now() - tic).count();

  tic = clock::now();
  SparseMatrixCSR h = normal_matrix(sys.jacobian);
  row.normal_s = std::chrono::duration<double>(clock::now() - tic).count();
  row.nnz_h = h.nnz();
  row.h_sparse_bytes = h.storage_bytes();

  std::vector<double> g(model.total_params(), 0.0);
  sys.jacobian.multiply_transpose(sys.residual, g);
  const double eta = std::max(initial_damping(h), 1e-10);
  LmSolveStats stats;
  tic = clock::now();
  lm_solve(h, g, eta, options.lm, &stats);
  row.solve_s = std::chrono::duration<double>(clock::now() - tic).count();
  row.dense_path = stats.used_dense;
  row.solver_workspace_bytes = stats.workspace_bytes;
  return row;
}

std::vector<BenchRow> run_scale_bench(const std::vector<std::size_t>& target_sizes,
                                      const std::vector<int>& ball_counts,
                                      const BenchOptions& options) {
  std::vector<BenchRow> rows;
  for (int m : ball_counts)
    for (std::size_t size : target_sizes)
      rows.push_back(bench_case(m, width_for_target(size, m), options));
  return rows;
}

void write_bench_csv(const std::vector<BenchRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << "balls,width,params,rows,nnz_j,nnz_j_pct,nnz_h,h_sparse_bytes,"
         "h_dense_bytes,solver_workspace_bytes,assemble_s,normal_s,solve_s,"
         "dense_path,computed\n";
  char buf[512];
  for (const BenchRow& r : rows) {
    std::snprintf(buf, sizeof buf,
                  "%d,%d,%zu,%zu,%lld,%.17g,%lld,%zu,%zu,%zu,%.17g,%.17g,%.17g,%d,%d\n",
                  r.balls, r.width, r.n_params, r.n_rows,
                  static_cast<long long>(r.nnz_j), r.nnz_j_pct,
                  static_cast<long long>(r.nnz_h), r.h_sparse_bytes, r.h_dense_bytes,
                  r.solver_workspace_bytes, r.assemble_s, r.normal_s, r.solve_s,
                  r.dense_path ? 1 : 0, r.computed ? 1 : 0);
    out << buf;
  }
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw Error("loglog_slope: need >= 2 points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace poupinn
