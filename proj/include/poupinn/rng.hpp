#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace poupinn {

// splitmix64; used to derive independent, named child seeds from one master
// seed so that adding a consumer never shifts the streams of the others.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                                 std::uint64_t index = 0) {
  std::uint64_t h = mix64(master);
  for (char c : tag) h = mix64(h ^ static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
  return mix64(h ^ index);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) {
    // 53-bit mantissa draw; identical across standard library versions.
    const std::uint64_t bits = engine_() >> 11;
    const double u = static_cast<double>(bits) * 0x1.0p-53;
    return lo + (hi - lo) * u;
  }

  double normal() {
    // Polar Marsaglia; avoids std::normal_distribution's unspecified algorithm.
    for (;;) {
      const double a = uniform(-1.0, 1.0);
      const double b = uniform(-1.0, 1.0);
      const double s = a * a + b * b;
      if (s > 0.0 && s < 1.0) return a * std::sqrt(-2.0 * std::log(s) / s);
    }
  }

  std::uint64_t next_u64() { return engine_(); }

  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    for (;;) {
      const std::uint64_t x = engine_();
      if (x < limit) return x % n;
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace poupinn
