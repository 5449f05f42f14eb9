#include "poupinn/partition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "poupinn/errors.hpp"
#include "poupinn/rng.hpp"

namespace poupinn {

double phi(const Ball& ball, std::span<const double> x) {
  const double r2 = squared_distance(x, ball.center);
  const double s2 = ball.radius * ball.radius;
  if (r2 >= s2) return 0.0;
  const double t = 1.0 - r2 / s2;
  return t * t;
}

PhiDerivs phi_derivs(const Ball& ball, std::span<const double> x) {
  const int d = static_cast<int>(x.size());
  if (d > kMaxDim) throw Error("phi_derivs: dimension above " + std::to_string(kMaxDim));
  PhiDerivs out;
  const double s = ball.radius;
  const double s2 = s * s;
  const double r2 = squared_distance(x, ball.center);
  if (r2 >= s2) return out;
  const double t = 1.0 - r2 / s2;
  out.value = t * t;
  for (int a = 0; a < d; ++a) {
    const double da = x[a] - ball.center[a];
    out.dx[a] = -4.0 * t * da / s2;
    out.dc[a] = -out.dx[a];
    for (int b = 0; b < d; ++b) {
      const double db = x[b] - ball.center[b];
      out.dxx[static_cast<std::size_t>(a) * d + b] = 8.0 * da * db / (s2 * s2);
    }
    out.dxx[static_cast<std::size_t>(a) * d + a] += -4.0 * t / s2;
  }
  out.ds = 4.0 * t * r2 / (s2 * s);
  return out;
}

GateEval gate(const Partition& partition, std::span<const double> x) {
  const int d = static_cast<int>(x.size());
  const int m = partition.size();
  GateEval g;
  g.dim = d;

  std::vector<PhiDerivs> ders;
  ders.reserve(4);
  std::vector<double> xs(x.begin(), x.end());
  for (int j = 0; j < m; ++j) {
    const Ball& ball = partition.balls[j];
    const double s = ball.radius;
    const double r2 = squared_distance(x, ball.center);
    const double rel = r2 / (s * s);
    if (rel >= 1.0) {
      if (rel > 1.0 + 1e-14) continue;
      // Exactly on the support boundary: evaluate at a point nudged toward
      // the center so the interior branch of the second derivative applies.
      std::vector<double> xn(xs);
      for (int a = 0; a < d; ++a)
        xn[a] = ball.center[a] + (xs[a] - ball.center[a]) * (1.0 - 1e-12);
      PhiDerivs pd = phi_derivs(ball, xn);
      if (pd.value == 0.0) continue;
      g.active.push_back(j);
      ders.push_back(std::move(pd));
      continue;
    }
    g.active.push_back(j);
    ders.push_back(phi_derivs(ball, x));
  }
  if (g.active.empty())
    throw UncoveredPoint("gate: point not covered by any ball");

  const int k = static_cast<int>(g.active.size());
  const int dd = d * d;
  double total = 0.0;
  std::vector<double> dtotal(d, 0.0);
  std::vector<double> d2total(static_cast<std::size_t>(dd), 0.0);
  for (const auto& pd : ders) {
    total += pd.value;
    for (int a = 0; a < d; ++a) dtotal[a] += pd.dx[a];
    for (int a = 0; a < dd; ++a) d2total[a] += pd.dxx[a];
  }

  g.lambda.resize(k);
  g.dlambda.assign(static_cast<std::size_t>(k) * d, 0.0);
  g.d2lambda.assign(static_cast<std::size_t>(k) * dd, 0.0);
  // Quotient rule written so the degenerate cases stay exact: a single
  // covering ball gives lambda = 1, dlambda = d2lambda = 0 bitwise.
  for (int i = 0; i < k; ++i) {
    const auto& pd = ders[i];
    const double lam = pd.value / total;
    g.lambda[i] = lam;
    double* dl = g.dlambda.data() + static_cast<std::size_t>(i) * d;
    for (int a = 0; a < d; ++a) dl[a] = (pd.dx[a] - lam * dtotal[a]) / total;
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b)
        g.d2lambda[(static_cast<std::size_t>(i) * d + a) * d + b] =
            (pd.dxx[a * d + b] - lam * d2total[a * d + b] - dl[a] * dtotal[b] -
             dl[b] * dtotal[a]) / total;
  }
  return g;
}

std::vector<std::size_t> coverage_check(const Partition& partition,
                                        std::span<const double> points, int dim) {
  const std::size_t n = points.size() / dim;
  std::vector<std::size_t> uncovered;
  for (std::size_t i = 0; i < n; ++i) {
    std::span<const double> x = points.subspan(i * dim, dim);
    double total = 0.0;
    for (const Ball& b : partition.balls) total += phi(b, x);
    if (total == 0.0) uncovered.push_back(i);
  }
  return uncovered;
}

namespace {

// k-means++ seeding over flat point storage.
std::vector<std::vector<double>> seed_centers(std::span<const double> pts, int dim,
                                              int m, Rng& rng) {
  const std::size_t n = pts.size() / dim;
  std::vector<std::vector<double>> centers;
  centers.reserve(m);
  auto point = [&](std::size_t i) { return pts.subspan(i * dim, dim); };

  const std::size_t first = rng.below(n);
  centers.emplace_back(point(first).begin(), point(first).end());
  std::vector<double> dist2(n);
  for (int c = 1; c < m; ++c) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::max();
      for (const auto& ctr : centers)
        best = std::min(best, squared_distance(point(i), ctr));
      dist2[i] = best;
      sum += best;
    }
    std::size_t pick = 0;
    if (sum > 0.0) {
      double target = rng.uniform(0.0, sum);
      for (std::size_t i = 0; i < n; ++i) {
        target -= dist2[i];
        if (target <= 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.below(n);
    }
    centers.emplace_back(point(pick).begin(), point(pick).end());
  }
  return centers;
}

}  // namespace

KmeansResult kmeans_init(std::span<const double> points, int dim, int m,
                         std::uint64_t seed, const KmeansOptions& options) {
  const std::size_t n = points.size() / dim;
  if (static_cast<std::size_t>(m) > n)
    throw DegenerateClusters("kmeans: fewer points than clusters");
  auto point = [&](std::size_t i) { return points.subspan(i * dim, dim); };

  // Bounding box of the input cloud, for the radius bound defaults.
  Box bbox;
  bbox.lo.assign(dim, std::numeric_limits<double>::max());
  bbox.hi.assign(dim, std::numeric_limits<double>::lowest());
  for (std::size_t i = 0; i < n; ++i)
    for (int a = 0; a < dim; ++a) {
      bbox.lo[a] = std::min(bbox.lo[a], points[i * dim + a]);
      bbox.hi[a] = std::max(bbox.hi[a], points[i * dim + a]);
    }
  const double diag = std::max(bbox.diagonal(), 1e-300);
  const double radius_min = options.radius_min > 0 ? options.radius_min : 0.05 * diag;
  const double radius_max = options.radius_max > 0 ? options.radius_max : 1.0 * diag;

  std::vector<int> assign(n, 0);
  std::vector<std::vector<double>> centers;
  int iterations = 0;

  for (int attempt = 0;; ++attempt) {
    Rng rng(derive_seed(seed, "kmeans", static_cast<std::uint64_t>(attempt)));
    centers = seed_centers(points, dim, m, rng);
    bool degenerate = false;
    iterations = 0;
    for (int it = 0; it < options.max_iterations; ++it) {
      ++iterations;
      for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::max();
        int bi = 0;
        for (int c = 0; c < m; ++c) {
          const double d2 = squared_distance(point(i), centers[c]);
          if (d2 < best) {
            best = d2;
            bi = c;
          }
        }
        assign[i] = bi;
      }
      std::vector<std::vector<double>> mean(m, std::vector<double>(dim, 0.0));
      std::vector<std::size_t> count(m, 0);
      for (std::size_t i = 0; i < n; ++i) {
        ++count[assign[i]];
        for (int a = 0; a < dim; ++a) mean[assign[i]][a] += points[i * dim + a];
      }
      degenerate = false;
      for (int c = 0; c < m; ++c)
        if (count[c] == 0) degenerate = true;
      if (degenerate) break;
      double moved = 0.0;
      for (int c = 0; c < m; ++c) {
        for (int a = 0; a < dim; ++a) mean[c][a] /= static_cast<double>(count[c]);
        moved = std::max(moved, std::sqrt(squared_distance(mean[c], centers[c])));
        centers[c] = std::move(mean[c]);
      }
      if (moved < options.tolerance) break;
    }
    if (!degenerate) break;
    if (attempt + 1 >= options.reseed_attempts)
      throw DegenerateClusters("kmeans: empty cluster after " +
                               std::to_string(options.reseed_attempts) + " re-seeds");
  }

  KmeansResult result;
  result.iterations = iterations;
  result.partition.radius_min = radius_min;
  result.partition.radius_max = radius_max;
  result.cluster_stddev.assign(m, 0.0);
  std::vector<double> max_d2(m, 0.0);
  std::vector<double> sum_d2(m, 0.0);
  std::vector<std::size_t> count(m, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const double d2 = squared_distance(point(i), centers[assign[i]]);
    max_d2[assign[i]] = std::max(max_d2[assign[i]], d2);
    sum_d2[assign[i]] += d2;
    ++count[assign[i]];
  }
  for (int c = 0; c < m; ++c) {
    Ball b;
    b.center = centers[c];
    const double cover = std::sqrt(max_d2[c]);
    double r = std::clamp(options.coverage_factor * cover, radius_min, radius_max);
    // Coverage of the cluster's own points always wins over the cap.
    if (r <= cover) r = cover * (1.0 + 1e-9);
    b.radius = r;
    result.partition.balls.push_back(std::move(b));
    result.cluster_stddev[c] = std::sqrt(sum_d2[c] / static_cast<double>(count[c]));
  }
  return result;
}

void expand_to_cover_box(Partition& partition, const Box& box,
                         int lattice_per_dim, double margin_factor) {
  const int d = box.dim();
  const int m = partition.size();
  std::vector<double> needed(m, 0.0);
  std::size_t cells = 1;
  for (int a = 0; a < d; ++a) cells *= static_cast<std::size_t>(lattice_per_dim);
  std::vector<double> x(d);
  for (std::size_t c = 0; c < cells; ++c) {
    std::size_t rem = c;
    for (int a = 0; a < d; ++a) {
      x[a] = box.lo[a] +
             (box.hi[a] - box.lo[a]) * (rem % lattice_per_dim) / (lattice_per_dim - 1.0);
      rem /= lattice_per_dim;
    }
    double best = std::numeric_limits<double>::max();
    int bi = 0;
    for (int j = 0; j < m; ++j) {
      const double d2 = squared_distance(x, partition.balls[j].center);
      if (d2 < best) {
        best = d2;
        bi = j;
      }
    }
    needed[bi] = std::max(needed[bi], std::sqrt(best));
  }
  for (int j = 0; j < m; ++j) {
    const double grown = margin_factor * needed[j];
    partition.balls[j].radius = std::max(partition.balls[j].radius,
                                         std::min(grown, partition.radius_max));
    if (partition.balls[j].radius <= needed[j])
      partition.balls[j].radius = needed[j] * (1.0 + 1e-9);
  }
}

}  // namespace poupinn
