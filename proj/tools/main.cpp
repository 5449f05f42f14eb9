#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "poupinn/bench.hpp"
#include "poupinn/checks.hpp"
#include "poupinn/config.hpp"
#include "poupinn/errors.hpp"
#include "poupinn/threading.hpp"
#include "poupinn/trainer.hpp"

namespace {

using namespace poupinn;

struct CommonFlags {
  std::string config_path;
  std::string out = "out";
  std::int64_t seed = -1;  // -1 = keep the config's seed
  int threads = 0;
};

RunConfig load_config(const CommonFlags& flags) {
  RunConfig cfg = parse_run_config(flags.config_path);
  if (flags.seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(flags.seed);
  return cfg;
}

int cmd_train(const CommonFlags& flags) {
  RunConfig cfg = load_config(flags);
  if (cfg.train.cache_dir.empty()) cfg.train.cache_dir = flags.out + "/oracle_cache";
  RunSetup run = make_run(cfg);
  const TrainReport report = train(run.problem, run.model, run.density, cfg.train, flags.out);
  const auto& last = report.records.back();
  std::printf("train: %d iterations, final held-out loss %.6g", last.iter + 1, last.loss);
  if (!std::isnan(last.rel_l2)) std::printf(", rel-L2 %.6g", last.rel_l2);
  std::printf("\n");
  std::printf("train: wrote %s/report.csv, model.ckpt, density.csv\n", flags.out.c_str());
  return 0;
}

int cmd_eval(const CommonFlags& flags, const std::string& checkpoint, int resolution) {
  const RunConfig cfg = load_config(flags);
  const ProblemSpec problem = make_problem(cfg);
  const EnsembleModel model = load_checkpoint(checkpoint);
  std::filesystem::create_directories(flags.out);
  const EvalResult result =
      evaluate(model, problem, resolution, flags.out + "/oracle_cache",
               flags.out + "/error_field.csv");
  std::printf("eval: rel-L2 = %.17g on %dx%d grid\n", result.rel_l2,
              result.reference.nx, result.reference.ny);
  return 0;
}

int cmd_scale_bench(const CommonFlags& flags, const std::vector<std::size_t>& sizes,
                    const std::vector<int>& balls, std::size_t points) {
  BenchOptions options;
  options.n_points = points;
  options.seed = flags.seed >= 0 ? static_cast<std::uint64_t>(flags.seed) : 0;
  std::filesystem::create_directories(flags.out);
  const auto rows = run_scale_bench(sizes, balls, options);
  const std::string path = flags.out + "/scale_bench.csv";
  write_bench_csv(rows, path);
  std::printf("scale-bench: wrote %s (%zu rows)\n", path.c_str(), rows.size());
  for (const auto& r : rows)
    std::printf("  M=%-3d params=%-8zu nnz(J)=%5.1f%%  nnz(H)=%-10lld %s\n", r.balls,
                r.n_params, r.nnz_j_pct, static_cast<long long>(r.nnz_h),
                r.computed ? (r.dense_path ? "dense solve" : "cg solve")
                           : "structural only");
  return 0;
}

int cmd_oracle(const CommonFlags& flags, const std::string& problem_name,
               int resolution) {
  RunConfig cfg;
  cfg.problem = problem_name;
  if (!flags.config_path.empty()) cfg = load_config(flags);
  cfg.problem = problem_name.empty() ? cfg.problem : problem_name;
  const ProblemSpec problem = make_problem(cfg);
  std::filesystem::create_directories(flags.out);
  const std::string cache = flags.out;

  if (problem.kind == ProblemKind::Helmholtz) {
    // Self-convergence on nested grids: halving h must cut the error ~4x.
    const int m = 63;
    const RefGrid coarse = helmholtz_reference(problem, m);
    const RefGrid mid = helmholtz_reference(problem, 2 * m + 1);
    const RefGrid fine = helmholtz_reference(problem, 4 * m + 3);
    auto value_at = [](const RefGrid& g, int i, int j) {
      return g.values[static_cast<std::size_t>(j) * g.nx + i];
    };
    double dc = 0.0, dm = 0.0;
    for (int j = 0; j < coarse.ny; ++j)
      for (int i = 0; i < coarse.nx; ++i) {
        dc = std::max(dc, std::abs(value_at(coarse, i, j) - value_at(fine, 4 * i, 4 * j)));
        dm = std::max(dm, std::abs(value_at(mid, 2 * i, 2 * j) - value_at(fine, 4 * i, 4 * j)));
      }
    const double ratio = dc / dm;
    std::printf("oracle: helmholtz self-convergence ratio = %.3f (expect ~4)\n", ratio);
    if (ratio < 3.0 || ratio > 5.5) {
      std::fprintf(stderr, "oracle: self-convergence check failed\n");
      return 4;
    }
  } else if (problem.kind == ProblemKind::Burgers) {
    const double pts[6] = {0.0, 0.5, 0.5, 1e-3, -0.5, 1e-3};
    const std::vector<double> u = burgers_reference(problem, pts);
    std::printf("oracle: burgers odd-symmetry |u(0,.5)| = %.3g, "
                "|u(+-0.5, 1e-3) -+ 1| = %.3g / %.3g\n",
                std::abs(u[0]), std::abs(u[1] + 1.0), std::abs(u[2] - 1.0));
    if (std::abs(u[0]) > 1e-10 || std::abs(u[1] + 1.0) > 1e-3 ||
        std::abs(u[2] - 1.0) > 1e-3) {
      std::fprintf(stderr, "oracle: burgers sanity check failed\n");
      return 4;
    }
  }

  const std::string cache_file = cache + "/" + reference_cache_name(problem, resolution);
  const bool hit = std::filesystem::exists(cache_file);
  const RefGrid grid = reference_grid(problem, resolution, cache);
  std::printf("oracle: %s grid %dx%d %s %s\n", to_string(problem.kind).c_str(),
              grid.nx, grid.ny, hit ? "cache hit at" : "written to", cache_file.c_str());
  return 0;
}

int cmd_check(const CommonFlags& flags, bool corrupt_gate) {
  const std::uint64_t seed = flags.seed >= 0 ? static_cast<std::uint64_t>(flags.seed) : 0;
  const auto results = run_invariant_suite(seed, corrupt_gate);
  bool all = true;
  std::printf("%-28s %-6s %s\n", "check", "status", "detail");
  for (const auto& r : results) {
    std::printf("%-28s %-6s %s\n", r.name.c_str(), r.passed ? "PASS" : "FAIL",
                r.detail.c_str());
    all = all && r.passed;
  }
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"partition-of-unity PINN ensembles with sparse second-order training"};
  app.require_subcommand(1);

  CommonFlags flags;
  app.add_option("--threads", flags.threads, "worker threads (default: logical cores)");

  auto add_common = [&](CLI::App* sub, bool need_config) {
    auto* opt = sub->add_option("--config", flags.config_path, "run configuration file");
    if (need_config) opt->required();
    sub->add_option("--seed", flags.seed, "override the config seed");
    sub->add_option("--out", flags.out, "output directory");
  };

  auto* train_cmd = app.add_subcommand("train", "train a model from a config file");
  add_common(train_cmd, true);

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint against the oracle");
  add_common(eval_cmd, true);
  std::string checkpoint;
  int resolution = 256;
  eval_cmd->add_option("--checkpoint", checkpoint, "model checkpoint path")->required();
  eval_cmd->add_option("--resolution", resolution, "evaluation grid resolution");

  auto* bench_cmd = app.add_subcommand("scale-bench", "one-step LM scaling statistics");
  add_common(bench_cmd, false);
  std::vector<std::size_t> sizes{2000, 4000, 8000, 16000};
  std::vector<int> balls{1, 5, 10, 20, 50};
  std::size_t points = 2000;
  bench_cmd->add_option("--sizes", sizes, "target total parameter counts")->delimiter(',');
  bench_cmd->add_option("--balls", balls, "ensemble sizes")->delimiter(',');
  bench_cmd->add_option("--points", points, "collocation points");

  auto* oracle_cmd = app.add_subcommand("oracle", "generate / cache reference grids");
  add_common(oracle_cmd, false);
  std::string problem_name = "helmholtz";
  int oracle_resolution = 256;
  oracle_cmd->add_option("--problem", problem_name, "helmholtz | burgers | supervised");
  oracle_cmd->add_option("--resolution", oracle_resolution, "grid resolution");

  auto* check_cmd = app.add_subcommand("check", "run the invariant suite");
  add_common(check_cmd, false);
  bool corrupt_gate = false;
  check_cmd->add_flag("--corrupt-gate", corrupt_gate,
                      "negative control: break the gate normalization check")
      ->group("");  // hidden

  CLI11_PARSE(app, argc, argv);
  if (flags.threads > 0) poupinn::set_thread_count(flags.threads);

  try {
    if (train_cmd->parsed()) return cmd_train(flags);
    if (eval_cmd->parsed()) return cmd_eval(flags, checkpoint, resolution);
    if (bench_cmd->parsed()) return cmd_scale_bench(flags, sizes, balls, points);
    if (oracle_cmd->parsed()) return cmd_oracle(flags, problem_name, oracle_resolution);
    if (check_cmd->parsed()) return cmd_check(flags, corrupt_gate);
  } catch (const poupinn::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const poupinn::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
