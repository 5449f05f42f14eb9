#pragma once

#include <stdexcept>
#include <string>

namespace poupinn {

struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// A point where the partition of unity vanishes (sum of bumps is zero).
struct UncoveredPoint : Error {
  explicit UncoveredPoint(const std::string& what) : Error(what) {}
};

/// K-means produced an empty cluster even after internal re-seeding.
struct DegenerateClusters : Error {
  explicit DegenerateClusters(const std::string& what) : Error(what) {}
};

/// A mixture component whose support carries no mass inside the domain.
struct ZeroMassBall : Error {
  explicit ZeroMassBall(const std::string& what) : Error(what) {}
};

/// Rejection sampler acceptance rate fell below the stall threshold.
struct RejectionStall : Error {
  explicit RejectionStall(const std::string& what) : Error(what) {}
};

/// Mixture density evaluated to a non-positive value at a sample point.
struct NonPositivePdf : Error {
  explicit NonPositivePdf(const std::string& what) : Error(what) {}
};

/// Iterative solver exceeded its iteration cap.
struct SolverStall : Error {
  explicit SolverStall(const std::string& what) : Error(what) {}
};

/// Discrete operator is (numerically) singular at the requested setup.
struct SingularSystem : Error {
  explicit SingularSystem(const std::string& what) : Error(what) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(what) {}
};

}  // namespace poupinn
