#include "poupinn/geometry.hpp"

namespace poupinn {

std::vector<double> sample_on_faces(const Box& box,
                                    const std::vector<BoxFace>& faces,
                                    std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> measures;
  double total = 0.0;
  for (const auto& f : faces) {
    total += face_measure(box, f);
    measures.push_back(total);
  }
  std::vector<double> pts(n * box.dim());
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform(0.0, total);
    std::size_t fi = 0;
    while (fi + 1 < faces.size() && u > measures[fi]) ++fi;
    sample_on_face(box, faces[fi], rng,
                   std::span<double>(pts.data() + i * box.dim(), box.dim()));
  }
  return pts;
}

std::vector<double> latin_hypercube(const Box& box, std::size_t n,
                                    std::uint64_t seed) {
  const int d = box.dim();
  Rng rng(seed);
  std::vector<double> pts(n * d, 0.0);
  std::vector<std::size_t> perm(n);
  for (int a = 0; a < d; ++a) {
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    for (std::size_t i = 0; i < n; ++i) {
      const double u =
          (static_cast<double>(perm[i]) + rng.uniform()) / static_cast<double>(n);
      pts[i * d + a] = box.lo[a] + u * (box.hi[a] - box.lo[a]);
    }
  }
  return pts;
}

}  // namespace poupinn
