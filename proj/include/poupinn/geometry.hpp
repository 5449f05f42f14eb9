#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "poupinn/rng.hpp"

namespace poupinn {

/// Axis-aligned box domain.
struct Box {
  std::vector<double> lo;
  std::vector<double> hi;

  int dim() const { return static_cast<int>(lo.size()); }

  double volume() const {
    double v = 1.0;
    for (int a = 0; a < dim(); ++a) v *= hi[a] - lo[a];
    return v;
  }

  double diagonal() const {
    double s = 0.0;
    for (int a = 0; a < dim(); ++a) s += (hi[a] - lo[a]) * (hi[a] - lo[a]);
    return std::sqrt(s);
  }

  bool contains(std::span<const double> x, double tol = 0.0) const {
    for (int a = 0; a < dim(); ++a)
      if (x[a] < lo[a] - tol || x[a] > hi[a] + tol) return false;
    return true;
  }

  void sample_uniform(Rng& rng, std::span<double> out) const {
    for (int a = 0; a < dim(); ++a) out[a] = rng.uniform(lo[a], hi[a]);
  }
};

/// One face of a box: coordinate `axis` pinned to lo (side=0) or hi (side=1).
struct BoxFace {
  int axis = 0;
  int side = 0;
};

inline double face_measure(const Box& box, const BoxFace& f) {
  double m = 1.0;
  for (int a = 0; a < box.dim(); ++a)
    if (a != f.axis) m *= box.hi[a] - box.lo[a];
  return m;
}

inline void sample_on_face(const Box& box, const BoxFace& f, Rng& rng,
                           std::span<double> out) {
  for (int a = 0; a < box.dim(); ++a)
    out[a] = (a == f.axis) ? (f.side ? box.hi[f.axis] : box.lo[f.axis])
                           : rng.uniform(box.lo[a], box.hi[a]);
}

/// Measure-weighted uniform draws over a list of faces. Points are stored
/// flat, point-major.
std::vector<double> sample_on_faces(const Box& box,
                                    const std::vector<BoxFace>& faces,
                                    std::size_t n, std::uint64_t seed);

/// Latin hypercube draw over the box, flat point-major storage.
std::vector<double> latin_hypercube(const Box& box, std::size_t n,
                                    std::uint64_t seed);

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace poupinn
