#include "poupinn/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "poupinn/errors.hpp"

namespace poupinn {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

[[noreturn]] void fail(const std::string& origin, int line, const std::string& msg) {
  throw ConfigError(origin + ":" + std::to_string(line) + ": " + msg);
}

double to_double(const std::string& v, const std::string& origin, int line) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (...) {
    fail(origin, line, "expected a number, got '" + v + "'");
  }
}

int to_int(const std::string& v, const std::string& origin, int line) {
  const double x = to_double(v, origin, line);
  if (x != static_cast<int>(x)) fail(origin, line, "expected an integer, got '" + v + "'");
  return static_cast<int>(x);
}

std::vector<int> to_int_list(const std::string& v, const std::string& origin, int line) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(to_int(item, origin, line));
  }
  if (out.empty()) fail(origin, line, "expected a comma-separated integer list");
  return out;
}

}  // namespace

RunConfig parse_run_config_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) fail(origin, lineno, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) fail(origin, lineno, "expected 'key = value'");

    if (key == "problem") cfg.problem = value;
    else if (key == "kx") cfg.kx = to_double(value, origin, lineno);
    else if (key == "ky") cfg.ky = to_double(value, origin, lineno);
    else if (key == "nu") cfg.nu = to_double(value, origin, lineno);
    else if (key == "balls") cfg.balls = to_int(value, origin, lineno);
    else if (key == "hidden") cfg.hidden = to_int_list(value, origin, lineno);
    else if (key == "activation") cfg.activation = value;
    else if (key == "kmeans_points") cfg.kmeans_points = to_int(value, origin, lineno);
    else if (key == "coverage_factor") cfg.coverage_factor = to_double(value, origin, lineno);
    else if (key == "radius_min") cfg.radius_min = to_double(value, origin, lineno);
    else if (key == "radius_max") cfg.radius_max = to_double(value, origin, lineno);
    else if (key == "outer_iterations") cfg.train.outer_iterations = to_int(value, origin, lineno);
    else if (key == "n_interior") cfg.train.n_interior = to_int(value, origin, lineno);
    else if (key == "n_boundary") cfg.train.n_boundary = to_int(value, origin, lineno);
    else if (key == "ascent_inner_steps") cfg.train.ascent_inner_steps = to_int(value, origin, lineno);
    else if (key == "beta") cfg.train.beta = to_double(value, origin, lineno);
    else if (key == "lr0") cfg.train.lr0 = to_double(value, origin, lineno);
    else if (key == "lr_half_life") cfg.train.lr_half_life = to_double(value, origin, lineno);
    else if (key == "resample_every") cfg.train.resample_every = to_int(value, origin, lineno);
    else if (key == "batch_interior") cfg.train.batch_interior = to_int(value, origin, lineno);
    else if (key == "batch_boundary") cfg.train.batch_boundary = to_int(value, origin, lineno);
    else if (key == "seed") cfg.train.seed = static_cast<std::uint64_t>(to_double(value, origin, lineno));
    else if (key == "logging_interval") cfg.train.logging_interval = to_int(value, origin, lineno);
    else if (key == "regularizer") {
      if (value == "entropy") cfg.train.regularizer = Regularizer::Entropy;
      else if (value == "dirichlet") cfg.train.regularizer = Regularizer::Dirichlet;
      else fail(origin, lineno, "regularizer must be 'entropy' or 'dirichlet'");
    }
    else if (key == "frozen_radii") cfg.train.frozen_radii = to_int(value, origin, lineno) != 0;
    else if (key == "dense_threshold") cfg.train.lm.dense_threshold = to_int(value, origin, lineno);
    else if (key == "eta0") cfg.train.eta0 = to_double(value, origin, lineno);
    else if (key == "max_step_retries") cfg.train.max_step_retries = to_int(value, origin, lineno);
    else if (key == "n_mc_mass") cfg.train.n_mc_mass = static_cast<std::size_t>(to_int(value, origin, lineno));
    else if (key == "heldout_interior") cfg.train.heldout_interior = to_int(value, origin, lineno);
    else if (key == "heldout_boundary") cfg.train.heldout_boundary = to_int(value, origin, lineno);
    else if (key == "eval_resolution") cfg.train.eval_resolution = to_int(value, origin, lineno);
    else if (key == "init_checkpoint") cfg.init_checkpoint = value;
    else fail(origin, lineno, "unknown key '" + key + "'");
  }
  return cfg;
}

RunConfig parse_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config_text(ss.str(), path);
}

ProblemSpec make_problem(const RunConfig& config) {
  const ProblemKind kind = problem_kind_from_string(config.problem);
  switch (kind) {
    case ProblemKind::Helmholtz: return make_helmholtz(config.kx, config.ky);
    case ProblemKind::Burgers: return make_burgers(config.nu);
    case ProblemKind::SupervisedFit: return make_supervised(supervised_default_target);
    case ProblemKind::Poisson:
      return make_poisson([](std::span<const double>) { return 1.0; },
                          [](std::span<const double>) { return 0.0; });
  }
  throw ConfigError("unreachable problem kind");
}

RunSetup make_run(const RunConfig& config) {
  ProblemSpec problem = make_problem(config);
  const Box& box = problem.domain;
  const int d = box.dim();
  const std::uint64_t seed = config.train.seed;

  if (!config.init_checkpoint.empty()) {
    EnsembleModel model = load_checkpoint(config.init_checkpoint);
    AdaptiveDensity density(model.partition, box,
                            config.train.beta > 0 ? config.train.beta : 1.0,
                            config.train.regularizer, seed, config.train.n_mc_mass);
    return RunSetup{std::move(problem), std::move(model), std::move(density)};
  }

  // K-means cloud: latin hypercube plus the box corners, so the initial
  // radii cover the whole domain.
  std::vector<double> cloud =
      latin_hypercube(box, config.kmeans_points, derive_seed(seed, "init-cloud"));
  for (int corner = 0; corner < (1 << d); ++corner)
    for (int a = 0; a < d; ++a)
      cloud.push_back((corner >> a) & 1 ? box.hi[a] : box.lo[a]);

  KmeansOptions opts;
  opts.coverage_factor = config.coverage_factor;
  opts.radius_min = config.radius_min;
  opts.radius_max = config.radius_max;
  KmeansResult km = kmeans_init(cloud, d, config.balls, seed, opts);
  km.partition.frozen_radii = config.train.frozen_radii;
  // Cluster radii cover the cloud; evaluation grids probe the whole box.
  expand_to_cover_box(km.partition, box, 257, config.coverage_factor);

  MlpSpec spec;
  spec.input_dim = d;
  spec.hidden_widths = config.hidden;
  spec.output_dim = 1;
  spec.activation = activation_from_string(config.activation);

  EnsembleModel model = make_ensemble(km.partition, spec, derive_seed(seed, "params"));
  AdaptiveDensity density(km.partition, box,
                          config.train.beta > 0 ? config.train.beta : 1.0,
                          config.train.regularizer, seed, config.train.n_mc_mass);
  return RunSetup{std::move(problem), std::move(model), std::move(density)};
}

}  // namespace poupinn
