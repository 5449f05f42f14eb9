#pragma once

#include <string>

#include "poupinn/sampler.hpp"
#include "poupinn/trainer.hpp"

namespace poupinn {

/// Flat `key = value` run configuration. Unknown keys are rejected with the
/// offending line number.
struct RunConfig {
  std::string problem = "helmholtz";
  double kx = 4.0;
  double ky = 1.0;
  double nu = 0.01 / M_PI;

  int balls = 5;
  std::vector<int> hidden = {10, 10};
  std::string activation = "tanh";

  int kmeans_points = 4000;
  double coverage_factor = 1.05;
  double radius_min = 0.0;  // 0 = 0.05 * domain diagonal
  double radius_max = 0.0;  // 0 = 1.0  * domain diagonal
  std::string init_checkpoint;  // resume: load model + partition instead of k-means

  TrainConfig train;
};

RunConfig parse_run_config(const std::string& path);
RunConfig parse_run_config_text(const std::string& text, const std::string& origin);

/// Everything a training or evaluation run needs, built deterministically
/// from a RunConfig.
struct RunSetup {
  ProblemSpec problem;
  EnsembleModel model;
  AdaptiveDensity density;
};

RunSetup make_run(const RunConfig& config);

ProblemSpec make_problem(const RunConfig& config);

}  // namespace poupinn
