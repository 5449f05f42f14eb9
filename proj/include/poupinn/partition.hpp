#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "poupinn/geometry.hpp"

namespace poupinn {

/// Compactly supported quartic bump: phi(x) = (1 - |x-c|^2/s^2)^2 for
/// |x-c| <= s and 0 elsewhere.
struct Ball {
  std::vector<double> center;
  double radius = 0.0;
};

struct Partition {
  std::vector<Ball> balls;
  bool frozen_radii = false;
  double radius_min = 0.0;
  double radius_max = 0.0;

  int size() const { return static_cast<int>(balls.size()); }
  int dim() const { return balls.empty() ? 0 : static_cast<int>(balls[0].center.size()); }
};

double phi(const Ball& ball, std::span<const double> x);

/// Domains here are at most three-dimensional; derivative scratch stays on
/// the stack.
inline constexpr int kMaxDim = 3;

/// phi with all analytic derivatives in one evaluation. Everything is
/// identically zero outside the closed support. Arrays are indexed up to the
/// point dimension.
struct PhiDerivs {
  double value = 0.0;
  std::array<double, kMaxDim> dx{};                // d
  std::array<double, kMaxDim * kMaxDim> dxx{};     // d*d, symmetric
  std::array<double, kMaxDim> dc{};                // d   (= -dx)
  double ds = 0.0;
};

PhiDerivs phi_derivs(const Ball& ball, std::span<const double> x);

/// Normalized gating weights over the balls active at x, with first and
/// second spatial derivatives. Only balls with phi > 0 appear.
struct GateEval {
  std::vector<int> active;
  std::vector<double> lambda;      // k
  std::vector<double> dlambda;     // k*d
  std::vector<double> d2lambda;    // k*d*d
  int dim = 0;

  double dl(int i, int a) const { return dlambda[static_cast<std::size_t>(i) * dim + a]; }
  double d2l(int i, int a, int b) const {
    return d2lambda[(static_cast<std::size_t>(i) * dim + a) * dim + b];
  }
};

/// Throws UncoveredPoint when the bump sum vanishes at x. Points landing
/// exactly on a support boundary are nudged 1e-12 toward that ball's center
/// so the interior derivative branch applies.
GateEval gate(const Partition& partition, std::span<const double> x);

/// Indices of points (flat, point-major, dim from the partition) where the
/// bump sum is zero.
std::vector<std::size_t> coverage_check(const Partition& partition,
                                        std::span<const double> points, int dim);

struct KmeansOptions {
  double coverage_factor = 1.05;
  int max_iterations = 100;
  double tolerance = 1e-10;
  int reseed_attempts = 5;
  double radius_min = 0.0;   // 0 = derive as 0.05 * bounding-box diagonal
  double radius_max = 0.0;   // 0 = derive as 1.0  * bounding-box diagonal
};

/// Seeded k-means++ then Lloyd iterations; radius_j covers the farthest
/// point of cluster j times coverage_factor, clamped to the radius bounds
/// (never below what coverage needs). The per-cluster standard deviation is
/// reported as a diagnostic.
struct KmeansResult {
  Partition partition;
  std::vector<double> cluster_stddev;
  int iterations = 0;
};

KmeansResult kmeans_init(std::span<const double> points, int dim, int m,
                         std::uint64_t seed, const KmeansOptions& options = {});

/// Grows radii until every point of a box lattice (lattice_per_dim per axis,
/// corners included) lies strictly inside its nearest ball, with a margin
/// factor on top. Cluster-based radii cover the k-means cloud only; runs that
/// evaluate on dense grids need the whole box covered.
void expand_to_cover_box(Partition& partition, const Box& box,
                         int lattice_per_dim = 257, double margin_factor = 1.05);

}  // namespace poupinn
