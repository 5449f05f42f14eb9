#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "poupinn/checks.hpp"
#include "poupinn/config.hpp"
#include "poupinn/errors.hpp"
#include "poupinn/sampler.hpp"
#include "poupinn/threading.hpp"
#include "poupinn/trainer.hpp"

namespace py = pybind11;
using namespace poupinn;

namespace {

std::span<const double> row_span(const py::array_t<double, py::array::c_style>& a,
                                 std::size_t i, int dim) {
  return std::span<const double>(a.data() + i * dim, dim);
}

py::array_t<double> to_array(const std::vector<double>& v) {
  return py::array_t<double>({static_cast<py::ssize_t>(v.size())},
                             {static_cast<py::ssize_t>(sizeof(double))}, v.data());
}

py::array_t<double> to_array_2d(const std::vector<double>& v, py::ssize_t rows,
                                py::ssize_t cols) {
  return py::array_t<double>(
      {rows, cols},
      {cols * static_cast<py::ssize_t>(sizeof(double)),
       static_cast<py::ssize_t>(sizeof(double))},
      v.data());
}

MlpSpec make_spec(int input_dim, const std::vector<int>& hidden, int output_dim,
                  const std::string& activation) {
  MlpSpec spec;
  spec.input_dim = input_dim;
  spec.hidden_widths = hidden;
  spec.output_dim = output_dim;
  spec.activation = activation_from_string(activation);
  spec.validate();
  return spec;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "partition-of-unity PINN ensembles: gated local experts, adaptive "
            "sampling and sparse second-order training";

  py::register_exception<Error>(m, "PoupinnError");

  m.def("set_thread_count", &set_thread_count, py::arg("n"));

  // ---- expert networks -----------------------------------------------
  py::class_<MlpSpec>(m, "MlpSpec")
      .def(py::init(&make_spec), py::arg("input_dim"), py::arg("hidden"),
           py::arg("output_dim") = 1, py::arg("activation") = "tanh")
      .def_readonly("input_dim", &MlpSpec::input_dim)
      .def_readonly("output_dim", &MlpSpec::output_dim)
      .def_property_readonly("param_count", [](const MlpSpec& s) { return s.param_count(); });

  py::class_<ParamBlock>(m, "ParamBlock")
      .def_property_readonly("values", [](const ParamBlock& p) { return to_array(p.values); })
      .def("set_values", [](ParamBlock& p, const py::array_t<double>& v) {
        if (static_cast<std::size_t>(v.size()) != p.values.size())
          throw Error("set_values: length mismatch");
        std::memcpy(p.values.data(), v.data(), p.values.size() * sizeof(double));
      });

  m.def("init_params", &init_params, py::arg("spec"), py::arg("seed"));
  m.def("mlp_forward",
        [](const MlpSpec& spec, const ParamBlock& p,
           const py::array_t<double, py::array::c_style>& x) {
          return to_array(forward(spec, p, row_span(x, 0, spec.input_dim)));
        });
  m.def("mlp_bundle",
        [](const MlpSpec& spec, const ParamBlock& p,
           const py::array_t<double, py::array::c_style>& x) {
          const Bundle b = bundle(spec, p, row_span(x, 0, spec.input_dim));
          return py::make_tuple(to_array(b.value), to_array(b.grad), to_array(b.hess));
        },
        "value, input gradient and input Hessian at one point");

  // ---- partition -------------------------------------------------------
  py::class_<Ball>(m, "Ball")
      .def_readonly("center", &Ball::center)
      .def_readonly("radius", &Ball::radius);

  py::class_<Partition>(m, "Partition")
      .def_property_readonly("balls", [](const Partition& p) { return p.balls; })
      .def_property_readonly("size", &Partition::size);

  m.def("kmeans_init",
        [](const py::array_t<double, py::array::c_style>& points, int m_balls,
           std::uint64_t seed, double coverage_factor) {
          KmeansOptions opts;
          opts.coverage_factor = coverage_factor;
          const int dim = static_cast<int>(points.shape(1));
          const std::span<const double> flat(points.data(),
                                             static_cast<std::size_t>(points.size()));
          return kmeans_init(flat, dim, m_balls, seed, opts).partition;
        },
        py::arg("points"), py::arg("balls"), py::arg("seed") = 0,
        py::arg("coverage_factor") = 1.05);

  m.def("gate_weights",
        [](const Partition& part, const py::array_t<double, py::array::c_style>& x) {
          const GateEval g = gate(part, row_span(x, 0, part.dim()));
          return py::make_tuple(g.active, to_array(g.lambda));
        },
        "active ball indices and normalized weights at one point");

  m.def("coverage_check",
        [](const Partition& part, const py::array_t<double, py::array::c_style>& pts) {
          const int dim = static_cast<int>(pts.shape(1));
          return coverage_check(
              part, std::span<const double>(pts.data(), static_cast<std::size_t>(pts.size())),
              dim);
        });

  // ---- ensemble ----------------------------------------------------------
  py::class_<EnsembleModel>(m, "EnsembleModel")
      .def_property_readonly("partition", [](const EnsembleModel& e) { return e.partition; })
      .def_property_readonly("total_params", &EnsembleModel::total_params)
      .def("flat_params", [](const EnsembleModel& e) { return to_array(e.flat_params()); })
      .def("predict",
           [](const EnsembleModel& e, const py::array_t<double, py::array::c_style>& pts) {
             const std::size_t n = pts.shape(0);
             const int dim = static_cast<int>(pts.shape(1));
             std::vector<double> out(n);
             for (std::size_t i = 0; i < n; ++i)
               out[i] = predict(e, row_span(pts, i, dim))[0];
             return to_array(out);
           },
           "scalar predictions at an (n, dim) array of points");

  m.def("make_ensemble", &make_ensemble, py::arg("partition"), py::arg("spec"),
        py::arg("seed"));
  m.def("load_checkpoint", &load_checkpoint);
  m.def("save_checkpoint", &save_checkpoint);

  // ---- problems and reference oracles -----------------------------------
  py::class_<ProblemSpec>(m, "ProblemSpec")
      .def_property_readonly("kind", [](const ProblemSpec& p) { return to_string(p.kind); });
  m.def("helmholtz_problem", &make_helmholtz, py::arg("kx") = 4.0, py::arg("ky") = 1.0);
  m.def("burgers_problem", &make_burgers, py::arg("nu") = 0.01 / M_PI);
  m.def("supervised_problem",
        [] { return make_supervised(supervised_default_target); },
        "regression of sin(4x) sin(y) over the unit square");

  m.def("helmholtz_reference",
        [](const ProblemSpec& p, int n) {
          const RefGrid g = helmholtz_reference(p, n);
          return to_array_2d(g.values, g.ny, g.nx);
        },
        py::arg("problem"), py::arg("n"),
        "finite-difference solution on the (n+2)^2 grid, boundary included");

  m.def("burgers_reference",
        [](const ProblemSpec& p, const py::array_t<double, py::array::c_style>& pts) {
          return to_array(burgers_reference(
              p, std::span<const double>(pts.data(), static_cast<std::size_t>(pts.size()))));
        },
        py::arg("problem"), py::arg("points"), "Cole-Hopf values at (n, 2) points");

  m.def("relative_l2",
        [](const py::array_t<double>& a, const py::array_t<double>& b) {
          return relative_l2(
              std::span<const double>(a.data(), static_cast<std::size_t>(a.size())),
              std::span<const double>(b.data(), static_cast<std::size_t>(b.size())));
        });

  // ---- adaptive density ---------------------------------------------------
  py::class_<AdaptiveDensity>(m, "AdaptiveDensity")
      .def(py::init([](const Partition& part, const std::vector<double>& lo,
                       const std::vector<double>& hi, double beta,
                       const std::string& regularizer, std::uint64_t seed,
                       std::size_t n_mc) {
             return AdaptiveDensity(part, Box{lo, hi}, beta,
                                    regularizer == "dirichlet" ? Regularizer::Dirichlet
                                                               : Regularizer::Entropy,
                                    seed, n_mc);
           }),
           py::arg("partition"), py::arg("lo"), py::arg("hi"), py::arg("beta") = 1.0,
           py::arg("regularizer") = "entropy", py::arg("seed") = 0,
           py::arg("n_mc") = 100000)
      .def("normalize", &AdaptiveDensity::normalize)
      .def_property_readonly("weights", [](const AdaptiveDensity& d) { return d.weights(); })
      .def_property_readonly("masses", [](const AdaptiveDensity& d) { return d.masses(); })
      .def("pdf",
           [](const AdaptiveDensity& d, const py::array_t<double, py::array::c_style>& x) {
             return d.pdf(row_span(x, 0, d.domain().dim()));
           })
      .def("sample",
           [](const AdaptiveDensity& d, std::size_t n, std::uint64_t seed) {
             const SampleSet s = d.sample(n, seed);
             return py::make_tuple(to_array_2d(s.interior, static_cast<py::ssize_t>(n),
                                               d.domain().dim()),
                                   to_array(s.interior_pdf));
           },
           py::arg("n"), py::arg("seed") = 0);

  m.def("closed_form_pstar",
        [](const py::array_t<double>& r2, double beta, double cell_volume) {
          return to_array(closed_form_pstar(
              std::span<const double>(r2.data(), static_cast<std::size_t>(r2.size())),
              beta, cell_volume));
        },
        py::arg("squared_residuals"), py::arg("beta"), py::arg("cell_volume"));
  m.def("brute_force_pstar",
        [](const py::array_t<double>& r2, double beta, double cell_volume) {
          return to_array(brute_force_pstar(
              std::span<const double>(r2.data(), static_cast<std::size_t>(r2.size())),
              beta, cell_volume));
        },
        py::arg("squared_residuals"), py::arg("beta"), py::arg("cell_volume"));
  m.def("kl_to_uniform_grid",
        [](const py::array_t<double>& p, double cell_volume, double domain_volume) {
          return kl_to_uniform_grid(
              std::span<const double>(p.data(), static_cast<std::size_t>(p.size())),
              cell_volume, domain_volume);
        });

  // ---- training ------------------------------------------------------------
  m.def("train_from_config",
        [](const std::string& config_text, const std::string& out_dir) {
          const RunConfig cfg = parse_run_config_text(config_text, "<config>");
          RunSetup run = make_run(cfg);
          const TrainReport report =
              train(run.problem, run.model, run.density, cfg.train, out_dir);
          py::dict out;
          std::vector<double> loss, rel;
          for (const auto& r : report.records) {
            loss.push_back(r.loss);
            rel.push_back(r.rel_l2);
          }
          out["loss"] = to_array(loss);
          out["rel_l2"] = to_array(rel);
          out["checkpoint"] = report.checkpoint_path;
          out["beta"] = report.beta_used;
          out["model"] = run.model;
          return out;
        },
        py::arg("config_text"), py::arg("out_dir") = "",
        "parse a key = value config, train, and return the logged series");

  m.def("evaluate_checkpoint",
        [](const std::string& checkpoint, const std::string& problem_name, int resolution) {
          RunConfig cfg;
          cfg.problem = problem_name;
          const ProblemSpec problem = make_problem(cfg);
          const EnsembleModel model = load_checkpoint(checkpoint);
          return evaluate(model, problem, resolution).rel_l2;
        },
        py::arg("checkpoint"), py::arg("problem"), py::arg("resolution") = 64);
}
