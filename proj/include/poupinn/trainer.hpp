#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "poupinn/ensemble.hpp"
#include "poupinn/lm.hpp"
#include "poupinn/pde.hpp"
#include "poupinn/sampler.hpp"

namespace poupinn {

struct TrainConfig {
  int outer_iterations = 500;
  int n_interior = 2000;
  int n_boundary = 600;
  int ascent_inner_steps = 20;
  double beta = 0.0;            // 0 = 1e-2 * initial mean squared residual
  double lr0 = 1e-3;
  double lr_half_life = 500.0;  // outer iterations per halving of the ascent lr
  int resample_every = 1;
  int batch_interior = 0;       // 0 = use the full fresh sample each iteration
  int batch_boundary = 0;
  std::uint64_t seed = 0;
  int logging_interval = 10;
  Regularizer regularizer = Regularizer::Entropy;
  bool frozen_radii = false;

  LmSolveOptions lm;
  double eta0 = 0.0;            // 0 = 1e-2 * trace(H)/n at the first iteration
  int max_step_retries = 25;

  std::size_t n_mc_mass = 100000;
  int heldout_interior = 1000;
  int heldout_boundary = 300;

  int eval_resolution = 0;      // 0 = no rel-L2 series during training
  std::string cache_dir;
};

struct TrainRecord {
  int iter = 0;
  double loss = 0.0;       // held-out discretized loss
  double rel_l2 = std::numeric_limits<double>::quiet_NaN();
  double eta = 0.0;
  double nnz_frac = 0.0;
  double kl_uniform = 0.0;
  double wall_ms = 0.0;
  // not part of the CSV: per-iteration acceptance bookkeeping
  double sample_loss_before = 0.0;
  double sample_loss_after = 0.0;
  bool accepted = false;
};

struct TrainReport {
  std::vector<TrainRecord> records;
  std::string checkpoint_path;
  double final_rel_l2 = std::numeric_limits<double>::quiet_NaN();
  double beta_used = 0.0;
};

/// Alternating minimax training: fresh interior sample from the density,
/// one damped LM step on the expert parameters, `ascent_inner_steps` Adam
/// ascent steps on the partition shape, renormalize, log. Deterministic for
/// a fixed config.
TrainReport train(const ProblemSpec& problem, EnsembleModel& model,
                  AdaptiveDensity& density, const TrainConfig& config,
                  const std::string& out_dir = "");

struct EvalResult {
  double rel_l2 = 0.0;
  RefGrid reference;
  std::vector<double> prediction;
};

/// Predicts on the problem's reference grid and compares. Writes the error
/// field as CSV when error_csv_path is non-empty.
EvalResult evaluate(const EnsembleModel& model, const ProblemSpec& problem,
                    int resolution, const std::string& cache_dir = "",
                    const std::string& error_csv_path = "");

/// Same comparison for an arbitrary predictor (probe mode, tests).
EvalResult evaluate_grid(const RefGrid& reference,
                         const std::function<double(std::span<const double>)>& predict_fn,
                         const std::string& error_csv_path = "");

void save_checkpoint(const EnsembleModel& model, const std::string& path);
EnsembleModel load_checkpoint(const std::string& path);

void write_report_csv(const TrainReport& report, const std::string& path);

}  // namespace poupinn
