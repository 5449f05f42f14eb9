#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "poupinn/geometry.hpp"
#include "poupinn/mlp.hpp"

namespace poupinn {

enum class ProblemKind { SupervisedFit, Poisson, Helmholtz, Burgers };

std::string to_string(ProblemKind k);
ProblemKind problem_kind_from_string(const std::string& name);

/// A PDE (or fitting) instance on an axis-aligned box. `forcing` is the
/// interior right-hand side (the fit target for SupervisedFit), `boundary`
/// the Dirichlet/initial data on `condition_faces`.
struct ProblemSpec {
  ProblemKind kind = ProblemKind::SupervisedFit;
  Box domain;
  double kx = 0.0, ky = 0.0;  // Helmholtz wave numbers
  double nu = 0.0;            // Burgers viscosity
  std::function<double(std::span<const double>)> forcing;
  std::function<double(std::span<const double>)> boundary;
  std::vector<BoxFace> condition_faces;

  bool has_reference() const {
    return kind == ProblemKind::Helmholtz || kind == ProblemKind::Burgers ||
           kind == ProblemKind::SupervisedFit;
  }
};

/// u(x,y) = 0 on all four edges of [0,1]^2, f = -kx*ky*sin(kx x)*sin(ky y).
ProblemSpec make_helmholtz(double kx = 4.0, double ky = 1.0);

/// (x,tau) in [-1,1]x[0,1]; u = -sin(pi x) at tau=0, u = 0 at x = +-1.
ProblemSpec make_burgers(double nu = 0.01 / M_PI);

/// Laplace(u) = f on [0,1]^2 with Dirichlet data g; optimizer plumbing.
ProblemSpec make_poisson(std::function<double(std::span<const double>)> f,
                         std::function<double(std::span<const double>)> g);

/// Plain regression of `target` over [0,1]^2; no boundary term.
ProblemSpec make_supervised(std::function<double(std::span<const double>)> target);

/// The default supervised target: sin(4x) * sin(y).
double supervised_default_target(std::span<const double> x);

/// Residual value(s) plus the exact linearization with respect to the
/// derivative bundle, expressed as one cotangent bundle per component.
struct ResidualEval {
  std::vector<double> value;
  std::vector<Bundle> bundle_cotangents;
};

ResidualEval residual(const ProblemSpec& problem, const Bundle& u,
                      std::span<const double> x);

/// value - g(x); throws when x is not on a condition face (tolerance 1e-12).
double boundary_residual(const ProblemSpec& problem, double value,
                         std::span<const double> x);

bool on_condition_face(const ProblemSpec& problem, std::span<const double> x,
                       double tol = 1e-12);

/// A rectangular evaluation grid with reference values.
struct RefGrid {
  int nx = 0, ny = 0;               // ny rows of nx points
  std::vector<double> points;       // point-major, dim 2
  std::vector<double> values;
  std::string axis_labels = "x,y";  // CSV header prefix
};

/// Direct finite-difference solve of Laplace(u) + kx*ky*u = f on an n x n
/// interior grid of [0,1]^2 with zero Dirichlet data, via the discrete sine
/// diagonalization of the 5-point stencil. Returned grid includes the
/// boundary ring (zeros): (n+2) x (n+2) points.
RefGrid helmholtz_reference(const ProblemSpec& problem, int n);

/// Cole-Hopf quadrature solution of the viscous Burgers instance; accurate
/// to ~1e-8 away from tau = 0. Points are (x, tau) pairs, flat.
std::vector<double> burgers_reference(const ProblemSpec& problem,
                                      std::span<const double> points);

double relative_l2(std::span<const double> pred, std::span<const double> ref);

/// Reference values on the standard evaluation grid for `resolution`,
/// cached as CSV under cache_dir when non-empty.
RefGrid reference_grid(const ProblemSpec& problem, int resolution,
                       const std::string& cache_dir = "");

/// File name (without directory) used by the reference cache.
std::string reference_cache_name(const ProblemSpec& problem, int resolution);

void write_grid_csv(const RefGrid& grid, const std::string& path);
std::optional<RefGrid> read_grid_csv(const std::string& path);

}  // namespace poupinn
