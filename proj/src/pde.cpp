#include "poupinn/pde.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "poupinn/errors.hpp"
#include "poupinn/threading.hpp"

namespace poupinn {

std::string to_string(ProblemKind k) {
  switch (k) {
    case ProblemKind::SupervisedFit: return "supervised";
    case ProblemKind::Poisson: return "poisson";
    case ProblemKind::Helmholtz: return "helmholtz";
    case ProblemKind::Burgers: return "burgers";
  }
  return "?";
}

ProblemKind problem_kind_from_string(const std::string& name) {
  if (name == "supervised") return ProblemKind::SupervisedFit;
  if (name == "poisson") return ProblemKind::Poisson;
  if (name == "helmholtz") return ProblemKind::Helmholtz;
  if (name == "burgers") return ProblemKind::Burgers;
  throw ConfigError("unknown problem '" + name + "'");
}

double supervised_default_target(std::span<const double> x) {
  return std::sin(4.0 * x[0]) * std::sin(x[1]);
}

ProblemSpec make_helmholtz(double kx, double ky) {
  if (kx <= 0.0 || ky <= 0.0)
    throw ConfigError("helmholtz: wave numbers must be positive");
  ProblemSpec p;
  p.kind = ProblemKind::Helmholtz;
  p.domain = Box{{0.0, 0.0}, {1.0, 1.0}};
  p.kx = kx;
  p.ky = ky;
  p.forcing = [kx, ky](std::span<const double> x) {
    return -kx * ky * std::sin(kx * x[0]) * std::sin(ky * x[1]);
  };
  p.boundary = [](std::span<const double>) { return 0.0; };
  p.condition_faces = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  return p;
}

ProblemSpec make_burgers(double nu) {
  if (nu <= 0.0) throw ConfigError("burgers: viscosity must be positive");
  ProblemSpec p;
  p.kind = ProblemKind::Burgers;
  p.domain = Box{{-1.0, 0.0}, {1.0, 1.0}};
  p.nu = nu;
  p.forcing = [](std::span<const double>) { return 0.0; };
  p.boundary = [](std::span<const double> x) {
    // tau = 0 face carries the initial condition, x = +-1 are homogeneous.
    if (std::abs(x[1]) <= 1e-12) return -std::sin(M_PI * x[0]);
    return 0.0;
  };
  p.condition_faces = {{1, 0}, {0, 0}, {0, 1}};
  return p;
}

ProblemSpec make_poisson(std::function<double(std::span<const double>)> f,
                         std::function<double(std::span<const double>)> g) {
  ProblemSpec p;
  p.kind = ProblemKind::Poisson;
  p.domain = Box{{0.0, 0.0}, {1.0, 1.0}};
  p.forcing = std::move(f);
  p.boundary = std::move(g);
  p.condition_faces = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  return p;
}

ProblemSpec make_supervised(std::function<double(std::span<const double>)> target) {
  ProblemSpec p;
  p.kind = ProblemKind::SupervisedFit;
  p.domain = Box{{0.0, 0.0}, {1.0, 1.0}};
  p.forcing = std::move(target);
  p.boundary = [](std::span<const double>) { return 0.0; };
  return p;
}

ResidualEval residual(const ProblemSpec& problem, const Bundle& u,
                      std::span<const double> x) {
  if (u.out_dim != 1 || u.in_dim != problem.domain.dim())
    throw Error("residual: bundle shape mismatch");
  const int d = u.in_dim;
  ResidualEval out;
  Bundle w = Bundle::zeros(1, d);
  switch (problem.kind) {
    case ProblemKind::SupervisedFit: {
      out.value = {u.value[0] - problem.forcing(x)};
      w.value[0] = 1.0;
      break;
    }
    case ProblemKind::Poisson: {
      double lap = 0.0;
      for (int a = 0; a < d; ++a) lap += u.h(0, a, a);
      out.value = {lap - problem.forcing(x)};
      for (int a = 0; a < d; ++a) w.h(0, a, a) = 1.0;
      break;
    }
    case ProblemKind::Helmholtz: {
      double lap = 0.0;
      for (int a = 0; a < d; ++a) lap += u.h(0, a, a);
      const double kk = problem.kx * problem.ky;
      out.value = {lap + kk * u.value[0] - problem.forcing(x)};
      w.value[0] = kk;
      for (int a = 0; a < d; ++a) w.h(0, a, a) = 1.0;
      break;
    }
    case ProblemKind::Burgers: {
      // coordinates: x[0] = space, x[1] = time
      const double uu = u.value[0];
      const double ux = u.g(0, 0);
      const double ut = u.g(0, 1);
      const double uxx = u.h(0, 0, 0);
      out.value = {ut + uu * ux - problem.nu * uxx};
      w.value[0] = ux;       // d r / d u
      w.grad[0] = uu;        // d r / d u_x
      w.grad[1] = 1.0;       // d r / d u_t
      w.h(0, 0, 0) = -problem.nu;
      break;
    }
  }
  out.bundle_cotangents.push_back(std::move(w));
  return out;
}

bool on_condition_face(const ProblemSpec& problem, std::span<const double> x,
                       double tol) {
  for (const BoxFace& f : problem.condition_faces) {
    const double pin = f.side ? problem.domain.hi[f.axis] : problem.domain.lo[f.axis];
    if (std::abs(x[f.axis] - pin) <= tol && problem.domain.contains(x, tol)) return true;
  }
  return false;
}

double boundary_residual(const ProblemSpec& problem, double value,
                         std::span<const double> x) {
  if (!on_condition_face(problem, x))
    throw Error("boundary_residual: point is not on a condition face");
  return value - problem.boundary(x);
}

RefGrid helmholtz_reference(const ProblemSpec& problem, int n) {
  if (problem.kind != ProblemKind::Helmholtz)
    throw Error("helmholtz_reference: wrong problem kind");
  if (n < 1) throw Error("helmholtz_reference: n must be positive");
  const double h = 1.0 / (n + 1);
  const double kk = problem.kx * problem.ky;

  // Discrete sine basis diagonalizes the 5-point Laplacian exactly.
  Eigen::MatrixXd S(n, n);
  for (int p = 0; p < n; ++p)
    for (int q = 0; q < n; ++q)
      S(p, q) = std::sin((p + 1.0) * (q + 1.0) * M_PI * h);
  Eigen::VectorXd mu(n);
  for (int p = 0; p < n; ++p) {
    const double s = std::sin((p + 1.0) * M_PI * h / 2.0);
    mu(p) = -4.0 / (h * h) * s * s;
  }

  Eigen::MatrixXd F(n, n);  // F(i,j) = f(x_{i+1}, y_{j+1})
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double xy[2] = {(i + 1) * h, (j + 1) * h};
      F(i, j) = problem.forcing(xy);
    }

  const double scale = 2.0 / (n + 1);
  Eigen::MatrixXd Fh = (scale * scale) * (S * F * S);
  for (int p = 0; p < n; ++p)
    for (int q = 0; q < n; ++q) {
      const double den = mu(p) + mu(q) + kk;
      if (std::abs(den) < 1e-10 * std::max(1.0, kk))
        throw SingularSystem("helmholtz_reference: kx*ky hits a discrete eigenvalue at n=" +
                             std::to_string(n));
      Fh(p, q) /= den;
    }
  Eigen::MatrixXd U = S * Fh * S;

  RefGrid grid;
  grid.nx = n + 2;
  grid.ny = n + 2;
  grid.axis_labels = "x,y";
  grid.points.reserve(static_cast<std::size_t>(grid.nx) * grid.ny * 2);
  grid.values.reserve(static_cast<std::size_t>(grid.nx) * grid.ny);
  for (int j = 0; j < grid.ny; ++j)
    for (int i = 0; i < grid.nx; ++i) {
      grid.points.push_back(i * h);
      grid.points.push_back(j * h);
      const bool interior = i >= 1 && i <= n && j >= 1 && j <= n;
      grid.values.push_back(interior ? U(i - 1, j - 1) : 0.0);
    }
  return grid;
}

namespace {

// Integrands of the Cole-Hopf ratio at one (x, t): numerator weight
// -sin(pi y), shared kernel exp(-cos(pi y)/(2 pi nu) - (x-y)^2/(4 nu t)).
struct ColeHopfQuery {
  double x, t, nu;

  double log_kernel(double y) const {
    const double dy = x - y;
    return -std::cos(M_PI * y) / (2.0 * M_PI * nu) - dy * dy / (4.0 * nu * t);
  }
};

// 16-point Gauss-Legendre nodes/weights on [-1, 1].
constexpr int kGl = 16;
constexpr double kGlX[kGl] = {
    -0.9894009349916499, -0.9445750230732326, -0.8656312023878318,
    -0.7554044083550030, -0.6178762444026438, -0.4580167776572274,
    -0.2816035507792589, -0.0950125098376374, 0.0950125098376374,
    0.2816035507792589,  0.4580167776572274,  0.6178762444026438,
    0.7554044083550030,  0.8656312023878318,  0.9445750230732326,
    0.9894009349916499};
constexpr double kGlW[kGl] = {
    0.0271524594117541, 0.0622535239386479, 0.0951585116824928,
    0.1246289712555339, 0.1495959888165767, 0.1691565193950025,
    0.1826034150449236, 0.1894506104550685, 0.1894506104550685,
    0.1826034150449236, 0.1691565193950025, 0.1495959888165767,
    0.1246289712555339, 0.0951585116824928, 0.0622535239386479,
    0.0271524594117541};

double cole_hopf_value(const ColeHopfQuery& q) {
  const double sigma = std::sqrt(4.0 * q.nu * q.t);
  const double r = sigma * std::sqrt(160.0);  // exp window: tails < 1e-18
  const double lo = q.x - r, hi = q.x + r;

  double prev = 0.0;
  int panels = std::max(8, static_cast<int>(std::ceil((hi - lo) / std::min(sigma, 0.02))));
  for (int level = 0;; ++level, panels *= 2) {
    const double w = (hi - lo) / panels;
    // First pass: peak of the exponent for stable normalization.
    double emax = -std::numeric_limits<double>::infinity();
    for (int p = 0; p < panels; ++p) {
      const double mid = lo + (p + 0.5) * w;
      for (int g = 0; g < kGl; ++g)
        emax = std::max(emax, q.log_kernel(mid + 0.5 * w * kGlX[g]));
    }
    // Uniform panel width: the Jacobian factors cancel in the ratio.
    double num = 0.0, den = 0.0;
    for (int p = 0; p < panels; ++p) {
      const double mid = lo + (p + 0.5) * w;
      for (int g = 0; g < kGl; ++g) {
        const double y = mid + 0.5 * w * kGlX[g];
        const double k = std::exp(q.log_kernel(y) - emax) * kGlW[g];
        den += k;
        num += k * std::sin(M_PI * y);
      }
    }
    const double value = -num / den;
    if (level > 0 && std::abs(value - prev) <= 1e-11 * std::max(1.0, std::abs(value)))
      return value;
    if (level >= 8)
      throw Error("burgers_reference: quadrature did not converge at (x=" +
                  std::to_string(q.x) + ", t=" + std::to_string(q.t) +
                  "), last delta=" + std::to_string(std::abs(value - prev)));
    prev = value;
  }
}

}  // namespace

std::vector<double> burgers_reference(const ProblemSpec& problem,
                                      std::span<const double> points) {
  if (problem.kind != ProblemKind::Burgers)
    throw Error("burgers_reference: wrong problem kind");
  const std::size_t n = points.size() / 2;
  std::vector<double> values(n, 0.0);
  parallel_for(n, [&](std::size_t i) {
    const double x = points[2 * i];
    const double t = points[2 * i + 1];
    if (t <= 0.0) {
      values[i] = -std::sin(M_PI * x);
    } else {
      values[i] = cole_hopf_value({x, t, problem.nu});
    }
  });
  return values;
}

double relative_l2(std::span<const double> pred, std::span<const double> ref) {
  if (pred.size() != ref.size()) throw Error("relative_l2: size mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - ref[i];
    num += d * d;
    den += ref[i] * ref[i];
  }
  if (den == 0.0) throw Error("relative_l2: reference has zero norm");
  return std::sqrt(num / den);
}

void write_grid_csv(const RefGrid& grid, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << grid.axis_labels << ",u\n";
  char buf[96];
  for (std::size_t i = 0; i < grid.values.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", grid.points[2 * i],
                  grid.points[2 * i + 1], grid.values[i]);
    out << buf;
  }
}

std::optional<RefGrid> read_grid_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  RefGrid grid;
  std::string line;
  if (!std::getline(in, line)) return std::nullopt;
  grid.axis_labels = line.substr(0, line.rfind(','));
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    double a, b, u;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &a, &b, &u) != 3) return std::nullopt;
    grid.points.push_back(a);
    grid.points.push_back(b);
    grid.values.push_back(u);
  }
  return grid;
}

std::string reference_cache_name(const ProblemSpec& problem, int resolution) {
  char tag[128];
  switch (problem.kind) {
    case ProblemKind::Helmholtz:
      std::snprintf(tag, sizeof tag, "helmholtz_kx%g_ky%g_n%d.csv", problem.kx,
                    problem.ky, resolution);
      break;
    case ProblemKind::Burgers:
      std::snprintf(tag, sizeof tag, "burgers_nu%.8g_n%d.csv", problem.nu, resolution);
      break;
    default:
      std::snprintf(tag, sizeof tag, "%s_n%d.csv", to_string(problem.kind).c_str(),
                    resolution);
  }
  return tag;
}

RefGrid reference_grid(const ProblemSpec& problem, int resolution,
                       const std::string& cache_dir) {
  std::string cache_path;
  if (!cache_dir.empty()) {
    std::filesystem::create_directories(cache_dir);
    cache_path = cache_dir + "/" + reference_cache_name(problem, resolution);
    if (auto cached = read_grid_csv(cache_path)) {
      RefGrid g = std::move(*cached);
      // Shape bookkeeping is not stored in the CSV; rebuild it.
      if (problem.kind == ProblemKind::Helmholtz || problem.kind == ProblemKind::SupervisedFit ||
          problem.kind == ProblemKind::Poisson) {
        g.nx = resolution + 2;
        g.ny = resolution + 2;
      } else {
        g.nx = resolution + 1;
        g.ny = resolution / 2 + 1;
      }
      if (g.values.size() == static_cast<std::size_t>(g.nx) * g.ny) return g;
    }
  }

  RefGrid grid;
  switch (problem.kind) {
    case ProblemKind::Helmholtz:
      grid = helmholtz_reference(problem, resolution);
      break;
    case ProblemKind::Burgers: {
      grid.nx = resolution + 1;
      grid.ny = resolution / 2 + 1;
      grid.axis_labels = "x,t";
      for (int j = 0; j < grid.ny; ++j)
        for (int i = 0; i < grid.nx; ++i) {
          grid.points.push_back(problem.domain.lo[0] +
                                2.0 * i / static_cast<double>(grid.nx - 1));
          grid.points.push_back(j / static_cast<double>(grid.ny - 1));
        }
      grid.values = burgers_reference(problem, grid.points);
      break;
    }
    case ProblemKind::SupervisedFit: {
      const int n = resolution + 2;
      grid.nx = n;
      grid.ny = n;
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
          const double xy[2] = {i / (n - 1.0), j / (n - 1.0)};
          grid.points.push_back(xy[0]);
          grid.points.push_back(xy[1]);
          grid.values.push_back(problem.forcing(xy));
        }
      break;
    }
    case ProblemKind::Poisson:
      throw Error("reference_grid: no oracle for the poisson instance");
  }
  if (!cache_path.empty()) write_grid_csv(grid, cache_path);
  return grid;
}

}  // namespace poupinn
