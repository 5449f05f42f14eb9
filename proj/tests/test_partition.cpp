#include <doctest.h>

#include <cmath>

#include "poupinn/errors.hpp"
#include "poupinn/partition.hpp"
#include "poupinn/rng.hpp"
#include "test_support.hpp"

using namespace poupinn;

TEST_SUITE("partition") {

TEST_CASE("quartic bump values at the reference points") {
  const Ball ball{{0.5, 0.5}, 0.4};
  const double at_center[2] = {0.5, 0.5};
  CHECK(phi(ball, at_center) == 1.0);

  const double at_edge[2] = {0.9, 0.5};
  CHECK(phi(ball, at_edge) == 0.0);
  const PhiDerivs edge = phi_derivs(ball, at_edge);
  CHECK(edge.value == 0.0);
  CHECK(edge.dx[0] == 0.0);
  CHECK(edge.dx[1] == 0.0);

  const double at_half[2] = {0.7, 0.5};  // |x-c| = s/2
  CHECK(phi(ball, at_half) == doctest::Approx(0.5625).epsilon(1e-15));
}

TEST_CASE("bump and all derivatives vanish outside the support") {
  const Ball ball{{0.0, 0.0}, 0.5};
  Rng rng(41);
  for (int i = 0; i < 200; ++i) {
    double x[2] = {rng.uniform(-2, 2), rng.uniform(-2, 2)};
    if (squared_distance(std::span<const double>(x, 2), ball.center) <= 0.25) continue;
    const PhiDerivs d = phi_derivs(ball, x);
    CHECK(d.value == 0.0);
    for (double v : d.dx) CHECK(v == 0.0);
    for (double v : d.dxx) CHECK(v == 0.0);
    for (double v : d.dc) CHECK(v == 0.0);
    CHECK(d.ds == 0.0);
  }
}

TEST_CASE("bump and gradient go to zero approaching the support edge") {
  const Ball ball{{0.0, 0.0}, 0.7};
  double prev_phi = 1.0, prev_grad = 1e9;
  for (double eps = 1e-2; eps >= 1e-8; eps *= 0.1) {
    const double x[2] = {0.7 - eps, 0.0};
    const PhiDerivs d = phi_derivs(ball, x);
    CHECK(d.value < prev_phi);
    CHECK(std::abs(d.dx[0]) < prev_grad);
    prev_phi = d.value;
    prev_grad = std::abs(d.dx[0]);
  }
  CHECK(prev_phi < 1e-14);
  CHECK(prev_grad < 2e-7);  // |dphi/dx| ~ 8 eps / s^2 at distance s - eps
}

TEST_CASE("bump derivatives match finite differences inside the support") {
  const Ball ball{{0.3, -0.2}, 0.8};
  Rng rng(77);
  const double h = 1e-6;
  for (int i = 0; i < 40; ++i) {
    double x[2] = {rng.uniform(-0.3, 0.9), rng.uniform(-0.8, 0.4)};
    const double r = std::sqrt(squared_distance(std::span<const double>(x, 2), ball.center));
    if (r > 0.75) continue;  // keep clear of the edge
    const PhiDerivs d = phi_derivs(ball, x);
    for (int a = 0; a < 2; ++a) {
      double xp[2] = {x[0], x[1]}, xm[2] = {x[0], x[1]};
      xp[a] += h;
      xm[a] -= h;
      CHECK(d.dx[a] == doctest::Approx((phi(ball, xp) - phi(ball, xm)) / (2 * h)).epsilon(1e-6));
      // center derivative: move the ball instead of the point
      Ball bp = ball, bm = ball;
      bp.center[a] += h;
      bm.center[a] -= h;
      CHECK(d.dc[a] == doctest::Approx((phi(bp, x) - phi(bm, x)) / (2 * h)).epsilon(1e-6));
      for (int b = 0; b < 2; ++b) {
        const double fd = (phi_derivs(ball, xp).dx[b] - phi_derivs(ball, xm).dx[b]) / (2 * h);
        CHECK(d.dxx[a * 2 + b] == doctest::Approx(fd).epsilon(1e-6));
      }
    }
    Ball sp = ball, sm = ball;
    sp.radius += h;
    sm.radius -= h;
    CHECK(d.ds == doctest::Approx((phi(sp, x) - phi(sm, x)) / (2 * h)).epsilon(1e-6));
  }
}

TEST_CASE("gate of a single covering ball is the constant 1") {
  Partition part;
  part.balls = {{{0.5, 0.5}, 2.0}};
  const double x[2] = {0.2, 0.8};
  const GateEval g = gate(part, x);
  REQUIRE(g.active.size() == 1);
  CHECK(g.lambda[0] == 1.0);
  for (double v : g.dlambda) CHECK(v == 0.0);
  for (double v : g.d2lambda) CHECK(v == 0.0);
}

TEST_CASE("two identical balls split the weight evenly") {
  Partition part;
  part.balls = {{{0.5, 0.5}, 0.6}, {{0.5, 0.5}, 0.6}};
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    double x[2] = {rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)};
    if (!test::covered(part, x)) continue;
    const GateEval g = gate(part, x);
    REQUIRE(g.active.size() == 2);
    CHECK(g.lambda[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(g.lambda[1] == doctest::Approx(0.5).epsilon(1e-15));
  }
}

TEST_CASE("gate weights sum to one with vanishing derivative sums") {
  Rng rng(19);
  for (int trial = 0; trial < 50; ++trial) {
    Partition part;
    for (int j = 0; j < 7; ++j)
      part.balls.push_back({{rng.uniform(), rng.uniform()}, rng.uniform(0.3, 0.9)});
    int tested = 0;
    while (tested < 200) {
      double x[2] = {rng.uniform(), rng.uniform()};
      if (!test::covered(part, x)) continue;
      ++tested;
      const GateEval g = gate(part, x);
      double sum = 0.0, d0 = 0.0, d1 = 0.0, h00 = 0.0, h01 = 0.0, h11 = 0.0;
      for (std::size_t i = 0; i < g.active.size(); ++i) {
        const int ii = static_cast<int>(i);
        sum += g.lambda[i];
        d0 += g.dl(ii, 0);
        d1 += g.dl(ii, 1);
        h00 += g.d2l(ii, 0, 0);
        h01 += g.d2l(ii, 0, 1);
        h11 += g.d2l(ii, 1, 1);
        CHECK(g.lambda[i] >= 0.0);
      }
      CHECK(std::abs(sum - 1.0) < 1e-12);
      CHECK(std::abs(d0) < 1e-12);
      CHECK(std::abs(d1) < 1e-12);
      // second-derivative sums cancel through the quotient rule; rounding
      // amplifies near support edges where the bump sum is small
      CHECK(std::abs(h00) < 1e-8);
      CHECK(std::abs(h01) < 1e-8);
      CHECK(std::abs(h11) < 1e-8);
    }
  }
}

TEST_CASE("gate derivatives match finite differences") {
  Rng rng(23);
  Partition part;
  for (int j = 0; j < 5; ++j)
    part.balls.push_back({{rng.uniform(), rng.uniform()}, rng.uniform(0.4, 0.8)});
  const double h = 1e-6;
  int tested = 0;
  while (tested < 60) {
    double x[2] = {rng.uniform(), rng.uniform()};
    if (!test::covered(part, x) || !test::clear_of_boundaries(part, x, 100 * h)) continue;
    ++tested;
    const GateEval g = gate(part, x);
    auto lambda_of = [&](std::span<const double> q, int ball) {
      const GateEval ge = gate(part, q);
      for (std::size_t k = 0; k < ge.active.size(); ++k)
        if (ge.active[k] == ball) return ge.lambda[k];
      return 0.0;
    };
    for (std::size_t i = 0; i < g.active.size(); ++i) {
      for (int a = 0; a < 2; ++a) {
        double xp[2] = {x[0], x[1]}, xm[2] = {x[0], x[1]};
        xp[a] += h;
        xm[a] -= h;
        const double fd = (lambda_of(xp, g.active[i]) - lambda_of(xm, g.active[i])) / (2 * h);
        CHECK(g.dl(static_cast<int>(i), a) == doctest::Approx(fd).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("gate throws on uncovered points") {
  Partition part;
  part.balls = {{{0.0, 0.0}, 0.1}};
  const double x[2] = {0.9, 0.9};
  CHECK_THROWS_AS(gate(part, x), UncoveredPoint);
}

TEST_CASE("coverage check reports exactly the uncovered indices") {
  Partition empty;
  const std::vector<double> pts = {0.1, 0.1, 0.9, 0.9};
  CHECK(coverage_check(empty, pts, 2) == std::vector<std::size_t>{0, 1});

  Partition whole;
  whole.balls = {{{0.5, 0.5}, 10.0}};
  CHECK(coverage_check(whole, pts, 2).empty());

  Partition partial;
  partial.balls = {{{0.1, 0.1}, 0.3}};
  // second point sits just outside the closed support
  const std::vector<double> pts2 = {0.1, 0.1, 0.1 + 0.3 + 1e-9, 0.1};
  CHECK(phi(partial.balls[0], std::span<const double>(pts2.data() + 2, 2)) == 0.0);
  CHECK(coverage_check(partial, pts2, 2) == std::vector<std::size_t>{1});
}

TEST_CASE("kmeans with one cluster centers on the mean and covers everything") {
  Rng rng(5);
  std::vector<double> pts;
  double mean[2] = {0, 0};
  for (int i = 0; i < 100; ++i) {
    const double a = rng.uniform(), b = rng.uniform();
    pts.insert(pts.end(), {a, b});
    mean[0] += a / 100;
    mean[1] += b / 100;
  }
  KmeansOptions opts;
  opts.coverage_factor = 1.05;
  const KmeansResult km = kmeans_init(pts, 2, 1, 17, opts);
  REQUIRE(km.partition.size() == 1);
  CHECK(km.partition.balls[0].center[0] == doctest::Approx(mean[0]).epsilon(1e-12));
  CHECK(km.partition.balls[0].center[1] == doctest::Approx(mean[1]).epsilon(1e-12));
  double maxd = 0.0;
  for (int i = 0; i < 100; ++i)
    maxd = std::max(maxd, std::sqrt(squared_distance(
                              std::span<const double>(pts.data() + 2 * i, 2),
                              km.partition.balls[0].center)));
  CHECK(km.partition.balls[0].radius == doctest::Approx(1.05 * maxd).epsilon(1e-12));
  CHECK(coverage_check(km.partition, pts, 2).empty());
}

TEST_CASE("kmeans on two separated blobs matches brute-force 2-means") {
  Rng rng(29);
  std::vector<double> pts;
  for (int i = 0; i < 9; ++i)
    pts.insert(pts.end(), {rng.uniform(0.0, 0.2), rng.uniform(0.0, 0.2)});
  for (int i = 0; i < 9; ++i)
    pts.insert(pts.end(), {rng.uniform(0.8, 1.0), rng.uniform(0.8, 1.0)});
  const std::size_t n = 18;

  // brute force: enumerate all 2-partitions, centers are cluster means
  double best_cost = 1e300;
  for (unsigned mask = 1; mask < (1u << n) - 1; ++mask) {
    double c0[2] = {0, 0}, c1[2] = {0, 0};
    int n0 = 0, n1 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (1u << i)) {
        c0[0] += pts[2 * i];
        c0[1] += pts[2 * i + 1];
        ++n0;
      } else {
        c1[0] += pts[2 * i];
        c1[1] += pts[2 * i + 1];
        ++n1;
      }
    }
    c0[0] /= n0;
    c0[1] /= n0;
    c1[0] /= n1;
    c1[1] /= n1;
    double cost = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double* c = (mask & (1u << i)) ? c0 : c1;
      const double dx = pts[2 * i] - c[0], dy = pts[2 * i + 1] - c[1];
      cost += dx * dx + dy * dy;
    }
    best_cost = std::min(best_cost, cost);
  }

  const KmeansResult km = kmeans_init(pts, 2, 2, 11);
  double got_cost = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::span<const double> x(pts.data() + 2 * i, 2);
    double best = 1e300;
    for (const Ball& b : km.partition.balls)
      best = std::min(best, squared_distance(x, b.center));
    got_cost += best;
  }
  CHECK(got_cost == doctest::Approx(best_cost).epsilon(1e-9));
  for (const Ball& b : km.partition.balls) {
    const bool in_low = b.center[0] < 0.2 && b.center[1] < 0.2;
    const bool in_high = b.center[0] > 0.8 && b.center[1] > 0.8;
    CHECK((in_low || in_high));
  }
}

TEST_CASE("kmeans is deterministic in the seed") {
  Rng rng(31);
  std::vector<double> pts;
  for (int i = 0; i < 300; ++i) pts.insert(pts.end(), {rng.uniform(), rng.uniform()});
  const KmeansResult a = kmeans_init(pts, 2, 6, 123);
  const KmeansResult b = kmeans_init(pts, 2, 6, 123);
  for (int j = 0; j < 6; ++j) {
    CHECK(a.partition.balls[j].center == b.partition.balls[j].center);
    CHECK(a.partition.balls[j].radius == b.partition.balls[j].radius);
  }
}

TEST_CASE("kmeans rejects more clusters than points") {
  const std::vector<double> pts = {0.1, 0.1, 0.9, 0.9};
  CHECK_THROWS_AS(kmeans_init(pts, 2, 3, 1), DegenerateClusters);
}

}  // TEST_SUITE
