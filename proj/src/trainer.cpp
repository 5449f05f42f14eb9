#include "poupinn/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "poupinn/errors.hpp"

namespace poupinn {

namespace {

double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

// Interior residuals, unscaled, at the sample points.
std::vector<double> squared_residuals_at(const EnsembleModel& model,
                                         const ProblemSpec& problem,
                                         const SampleSet& samples) {
  const int d = samples.dim;
  const std::size_t n = samples.n_interior();
  std::vector<double> r2(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::span<const double> x(samples.interior.data() + i * d, d);
    const Bundle u = predict_bundle(model, x);
    const double r = residual(problem, u, x).value[0];
    r2[i] = r * r;
  }
  return r2;
}

struct AscentSnapshot {
  std::vector<double> shape;
  std::vector<double> masses;
  std::vector<double> weights;
  AdamState adam;
};

}  // namespace

TrainReport train(const ProblemSpec& problem, EnsembleModel& model,
                  AdaptiveDensity& density, const TrainConfig& config,
                  const std::string& out_dir) {
  using clock = std::chrono::steady_clock;
  const int d = problem.domain.dim();
  const std::uint64_t seed = config.seed;
  TrainReport report;

  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  // Fixed boundary training set and fixed held-out loss sets.
  std::vector<double> boundary_pts;
  if (!problem.condition_faces.empty() && config.n_boundary > 0)
    boundary_pts = sample_on_faces(problem.domain, problem.condition_faces,
                                   config.n_boundary, derive_seed(seed, "boundary"));
  SampleSet heldout;
  heldout.dim = d;
  heldout.interior = latin_hypercube(problem.domain, config.heldout_interior,
                                     derive_seed(seed, "heldout-interior"));
  if (!problem.condition_faces.empty() && config.heldout_boundary > 0)
    heldout.boundary = sample_on_faces(problem.domain, problem.condition_faces,
                                       config.heldout_boundary,
                                       derive_seed(seed, "heldout-boundary"));

  // Coverage probe: held-out points, boundary points and a lattice spanning
  // the domain (corners included). Ascent steps that uncover any of these
  // are rolled back.
  std::vector<double> probe = heldout.interior;
  probe.insert(probe.end(), heldout.boundary.begin(), heldout.boundary.end());
  probe.insert(probe.end(), boundary_pts.begin(), boundary_pts.end());
  {
    const int g = 65;
    std::vector<int> idx(d, 0);
    std::vector<double> x(d);
    const std::size_t cells = static_cast<std::size_t>(std::pow(g, d));
    for (std::size_t c = 0; c < cells; ++c) {
      std::size_t rem = c;
      for (int a = 0; a < d; ++a) {
        x[a] = problem.domain.lo[a] +
               (problem.domain.hi[a] - problem.domain.lo[a]) * (rem % g) / (g - 1.0);
        rem /= g;
      }
      probe.insert(probe.end(), x.begin(), x.end());
    }
  }
  if (auto bad = coverage_check(density.partition(), probe, d); !bad.empty())
    throw UncoveredPoint("train: initial partition leaves " +
                         std::to_string(bad.size()) + " probe points uncovered");
  model.partition = density.partition();

  // Optional rel-L2 series against the reference oracle.
  RefGrid eval_grid;
  const bool track_l2 = config.eval_resolution > 0 && problem.has_reference();
  if (track_l2)
    eval_grid = reference_grid(problem, config.eval_resolution, config.cache_dir);

  LmState lm_state;
  bool eta_initialized = config.eta0 > 0.0;
  if (eta_initialized) lm_state.eta = config.eta0;
  double beta = config.beta;

  AdamState adam;
  const std::size_t n_shape = density.shape_param_count();
  std::vector<double> shape(n_shape), grad(n_shape);

  SampleSet samples;
  int consecutive_maxed_rejects = 0;
  std::vector<std::string> density_rows;
  auto capture_density_row = [&](int iter, double kl) {
    char buf[64];
    std::string row = std::to_string(iter);
    std::snprintf(buf, sizeof buf, ",%.17g", kl);
    row += buf;
    for (int k = 0; k < density.partition().size(); ++k) {
      const Ball& b = density.partition().balls[k];
      for (int a = 0; a < d; ++a) {
        std::snprintf(buf, sizeof buf, ",%.17g", b.center[a]);
        row += buf;
      }
      std::snprintf(buf, sizeof buf, ",%.17g", b.radius);
      row += buf;
      std::snprintf(buf, sizeof buf, ",%.17g", density.masses()[k]);
      row += buf;
    }
    density_rows.push_back(std::move(row));
  };

  for (int iter = 0; iter < config.outer_iterations; ++iter) {
    const auto tic = clock::now();
    TrainRecord rec;
    rec.iter = iter;

    // (a) fresh interior sample from the current density
    if (iter % std::max(1, config.resample_every) == 0) {
      const std::size_t n_pool = static_cast<std::size_t>(config.n_interior);
      samples = density.sample(n_pool, derive_seed(seed, "interior", iter));
      samples.boundary = boundary_pts;
    }
    SampleSet* active = &samples;
    SampleSet batch;
    if (config.batch_interior > 0 || config.batch_boundary > 0) {
      Rng brng(derive_seed(seed, "batch", iter));
      batch.dim = d;
      const std::size_t bi = config.batch_interior > 0
                                 ? std::min<std::size_t>(config.batch_interior, samples.n_interior())
                                 : samples.n_interior();
      const std::size_t bb = config.batch_boundary > 0
                                 ? std::min<std::size_t>(config.batch_boundary, samples.n_boundary())
                                 : samples.n_boundary();
      for (std::size_t i = 0; i < bi; ++i) {
        const std::size_t pick = brng.below(samples.n_interior());
        batch.interior.insert(batch.interior.end(),
                              samples.interior.begin() + pick * d,
                              samples.interior.begin() + (pick + 1) * d);
        batch.interior_pdf.push_back(samples.interior_pdf[pick]);
      }
      for (std::size_t i = 0; i < bb; ++i) {
        const std::size_t pick = brng.below(samples.n_boundary());
        batch.boundary.insert(batch.boundary.end(),
                              samples.boundary.begin() + pick * d,
                              samples.boundary.begin() + (pick + 1) * d);
      }
      active = &batch;
    }

    if (beta <= 0.0) {
      const std::vector<double> r2 = squared_residuals_at(model, problem, *active);
      double mean = 0.0;
      for (double v : r2) mean += v;
      mean /= std::max<std::size_t>(1, r2.size());
      beta = std::max(1e-2 * mean, 1e-10);
      density.set_beta(beta);
    }

    // (b) one LM step with damping adaptation
    AssembledSystem sys = assemble(model, problem, *active);
    const double loss_before = squared_norm(sys.residual);
    SparseMatrixCSR h = normal_matrix(sys.jacobian);
    std::vector<double> g(model.total_params(), 0.0);
    sys.jacobian.multiply_transpose(sys.residual, g);
    if (!eta_initialized) {
      lm_state.eta = std::max(initial_damping(h), lm_state.eta_min);
      eta_initialized = true;
    }

    const std::vector<double> theta_backup = model.flat_params();
    double loss_after = loss_before;
    rec.accepted = false;
    for (int attempt = 0; attempt < config.max_step_retries; ++attempt) {
      bool solver_ok = true;
      std::vector<double> delta;
      try {
        delta = lm_solve(h, g, lm_state.eta, config.lm);
      } catch (const SolverStall&) {
        solver_ok = false;
      }
      if (solver_ok) {
        model.add_flat_params(delta);
        loss_after = squared_norm(residual_vector(model, problem, *active));
      } else {
        loss_after = std::numeric_limits<double>::quiet_NaN();
      }
      const bool at_max = lm_state.eta >= lm_state.eta_max;
      if (damping_update(lm_state, loss_before, loss_after)) {
        rec.accepted = true;
        consecutive_maxed_rejects = 0;
        break;
      }
      if (solver_ok) model.set_flat_params(theta_backup);
      if (at_max && !std::isfinite(loss_after)) {
        if (++consecutive_maxed_rejects >= 3)
          throw Error("train: non-finite loss after 3 rejected steps at maximum damping "
                      "(iteration " + std::to_string(iter) + ")");
      }
    }
    rec.sample_loss_before = loss_before;
    rec.sample_loss_after = rec.accepted ? loss_after : loss_before;

    // (c) frozen-density ascent on the partition shape
    if (config.ascent_inner_steps > 0) {
      const std::vector<double> r2 = squared_residuals_at(model, problem, *active);
      const double lr = config.lr0 * std::pow(0.5, iter / config.lr_half_life);
      for (int s = 0; s < config.ascent_inner_steps; ++s) {
        AscentSnapshot snap{density.shape_params(), density.masses(),
                            density.weights(), adam};
        const AscentEval f = ascent_objective(density, r2, *active);
        shape = density.shape_params();
        for (std::size_t t = 0; t < n_shape; ++t) grad[t] = -f.gradient[t];
        adam_step(shape, grad, adam, lr);
        // (d) clamp, renormalize, verify coverage; roll back bad steps
        for (int k = 0; k < density.partition().size(); ++k) {
          double* c = shape.data() + static_cast<std::size_t>(k) * (d + 1);
          for (int a = 0; a < d; ++a)
            c[a] = std::clamp(c[a], problem.domain.lo[a], problem.domain.hi[a]);
          if (config.frozen_radii)
            c[d] = snap.shape[static_cast<std::size_t>(k) * (d + 1) + d];
          else
            c[d] = std::clamp(c[d], density.partition().radius_min,
                              density.partition().radius_max);
        }
        density.set_shape_params(shape);
        bool ok = true;
        try {
          density.normalize();
        } catch (const ZeroMassBall&) {
          ok = false;
        }
        if (ok) {
          if (!coverage_check(density.partition(), samples.interior, d).empty() ||
              !coverage_check(density.partition(), probe, d).empty())
            ok = false;
        }
        if (!ok) {
          density.set_shape_params(snap.shape);
          density.normalize();
          adam = snap.adam;
        }
      }
      model.partition = density.partition();
    }

    // (e) log
    rec.eta = lm_state.eta;
    rec.nnz_frac = sys.jacobian.fill_fraction();
    rec.kl_uniform = kl_to_uniform(density, 48);
    rec.loss = squared_norm(residual_vector(model, problem, heldout));
    if (track_l2) {
      EvalResult ev = evaluate_grid(eval_grid, [&](std::span<const double> x) {
        return predict(model, x)[0];
      });
      rec.rel_l2 = ev.rel_l2;
      report.final_rel_l2 = ev.rel_l2;
    }
    rec.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - tic).count();
    report.records.push_back(rec);
    if (iter % std::max(1, config.logging_interval) == 0 ||
        iter == config.outer_iterations - 1)
      capture_density_row(iter, rec.kl_uniform);
    if (std::getenv("POUPINN_TRACE"))
      std::fprintf(stderr, "trace iter=%d sample_before=%.6e sample_after=%.6e heldout=%.6e eta=%.3e\n",
                   iter, rec.sample_loss_before, rec.sample_loss_after, rec.loss,
                   rec.eta);
  }

  report.beta_used = beta;
  if (!out_dir.empty()) {
    report.checkpoint_path = out_dir + "/model.ckpt";
    save_checkpoint(model, report.checkpoint_path);
    write_report_csv(report, out_dir + "/report.csv");

    std::ofstream dens(out_dir + "/density.csv");
    dens << "iter,kl_uniform";
    for (int k = 0; k < density.partition().size(); ++k) {
      for (int a = 0; a < d; ++a) dens << ",c" << k << "_" << a;
      dens << ",r" << k << ",m" << k;
    }
    dens << "\n";
    for (const std::string& row : density_rows) dens << row << "\n";
  }
  return report;
}

EvalResult evaluate_grid(const RefGrid& reference,
                         const std::function<double(std::span<const double>)>& predict_fn,
                         const std::string& error_csv_path) {
  EvalResult out;
  out.reference = reference;
  const std::size_t n = reference.values.size();
  out.prediction.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::span<const double> x(reference.points.data() + 2 * i, 2);
    try {
      out.prediction[i] = predict_fn(x);
    } catch (const UncoveredPoint&) {
      throw UncoveredPoint("evaluate: grid point (" + std::to_string(x[0]) + ", " +
                           std::to_string(x[1]) + ") is not covered");
    }
  }
  out.rel_l2 = relative_l2(out.prediction, reference.values);
  if (!error_csv_path.empty()) {
    RefGrid err = reference;
    for (std::size_t i = 0; i < n; ++i) err.values[i] = out.prediction[i] - reference.values[i];
    write_grid_csv(err, error_csv_path);
  }
  return out;
}

EvalResult evaluate(const EnsembleModel& model, const ProblemSpec& problem,
                    int resolution, const std::string& cache_dir,
                    const std::string& error_csv_path) {
  const RefGrid grid = reference_grid(problem, resolution, cache_dir);
  return evaluate_grid(grid, [&](std::span<const double> x) {
    return predict(model, x)[0];
  }, error_csv_path);
}

void save_checkpoint(const EnsembleModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  char buf[64];
  out << "poupinn-checkpoint v1\n";
  out << "activation " << to_string(model.mlp_spec.activation) << "\n";
  out << "input_dim " << model.mlp_spec.input_dim << "\n";
  out << "output_dim " << model.mlp_spec.output_dim << "\n";
  out << "hidden";
  for (int w : model.mlp_spec.hidden_widths) out << " " << w;
  out << "\n";
  out << "balls " << model.ball_count() << "\n";
  std::snprintf(buf, sizeof buf, "radius_bounds %.17g %.17g\n",
                model.partition.radius_min, model.partition.radius_max);
  out << buf;
  out << "frozen_radii " << (model.partition.frozen_radii ? 1 : 0) << "\n";
  for (const Ball& b : model.partition.balls) {
    out << "ball";
    for (double c : b.center) {
      std::snprintf(buf, sizeof buf, " %.17g", c);
      out << buf;
    }
    std::snprintf(buf, sizeof buf, " %.17g\n", b.radius);
    out << buf;
  }
  out << "params_per_ball " << model.per_expert() << "\n";
  for (const ParamBlock& p : model.params) {
    for (std::size_t i = 0; i < p.values.size(); ++i) {
      std::snprintf(buf, sizeof buf, i ? " %.17g" : "%.17g", p.values[i]);
      out << buf;
    }
    out << "\n";
  }
}

EnsembleModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint " + path);
  std::string line, word;
  auto expect = [&](const std::string& key) -> std::istringstream {
    if (!std::getline(in, line)) throw Error("checkpoint: truncated at " + key);
    std::istringstream ss(line);
    ss >> word;
    if (word != key) throw Error("checkpoint: expected '" + key + "', got '" + word + "'");
    return ss;
  };

  if (!std::getline(in, line) || line != "poupinn-checkpoint v1")
    throw Error("checkpoint: unrecognized header");
  MlpSpec spec;
  {
    auto ss = expect("activation");
    std::string act;
    ss >> act;
    spec.activation = activation_from_string(act);
  }
  {
    auto ss = expect("input_dim");
    ss >> spec.input_dim;
  }
  {
    auto ss = expect("output_dim");
    ss >> spec.output_dim;
  }
  {
    auto ss = expect("hidden");
    int w;
    while (ss >> w) spec.hidden_widths.push_back(w);
  }
  int m = 0;
  {
    auto ss = expect("balls");
    ss >> m;
  }
  Partition part;
  {
    auto ss = expect("radius_bounds");
    ss >> part.radius_min >> part.radius_max;
  }
  {
    auto ss = expect("frozen_radii");
    int f;
    ss >> f;
    part.frozen_radii = f != 0;
  }
  for (int k = 0; k < m; ++k) {
    auto ss = expect("ball");
    std::vector<double> nums;
    double v;
    while (ss >> v) nums.push_back(v);
    if (static_cast<int>(nums.size()) != spec.input_dim + 1)
      throw Error("checkpoint: ball line has wrong arity");
    Ball b;
    b.center.assign(nums.begin(), nums.end() - 1);
    b.radius = nums.back();
    part.balls.push_back(std::move(b));
  }
  std::size_t per = 0;
  {
    auto ss = expect("params_per_ball");
    ss >> per;
  }
  spec.validate();
  if (per != spec.param_count()) throw Error("checkpoint: parameter count mismatch");

  EnsembleModel model;
  model.partition = std::move(part);
  model.mlp_spec = spec;
  for (int k = 0; k < m; ++k) {
    if (!std::getline(in, line)) throw Error("checkpoint: missing parameter rows");
    std::istringstream ss(line);
    ParamBlock p = ParamBlock::zeros(spec);
    for (std::size_t i = 0; i < per; ++i)
      if (!(ss >> p.values[i])) throw Error("checkpoint: short parameter row");
    model.params.push_back(std::move(p));
  }
  return model;
}

void write_report_csv(const TrainReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << "iter,loss,rel_l2,eta,nnz_frac,kl_uniform,wall_ms\n";
  char buf[256];
  for (const auto& r : report.records) {
    if (std::isnan(r.rel_l2))
      std::snprintf(buf, sizeof buf, "%d,%.17g,,%.17g,%.17g,%.17g,%.17g\n", r.iter,
                    r.loss, r.eta, r.nnz_frac, r.kl_uniform, r.wall_ms);
    else
      std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                    r.iter, r.loss, r.rel_l2, r.eta, r.nnz_frac, r.kl_uniform,
                    r.wall_ms);
    out << buf;
  }
}

}  // namespace poupinn
