#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

namespace poupinn {

/// Maximizer of the entropy-regularized grid objective
///   sum_c r2_c q_c - beta sum_c q_c log(q_c / cell_volume)
/// over the probability simplex, by projected gradient ascent. Climbs the
/// discretized objective directly; shares no code with closed_form_pstar.
/// Returns density values (q / cell_volume).
std::vector<double> brute_force_pstar(std::span<const double> squared_residuals,
                                      double beta, double cell_volume,
                                      int max_iterations = 200000,
                                      double tolerance = 1e-14);

/// Euclidean projection onto { q >= 0, sum q = 1 }.
void project_to_simplex(std::span<double> q);

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Release-gate invariant suite: partition of unity, gate/Jacobian
/// finite-difference agreement, closed-form density oracle, sampler
/// statistics. `corrupt_gate` deliberately breaks the normalization check
/// (negative control for the checker itself).
std::vector<CheckResult> run_invariant_suite(std::uint64_t seed, bool corrupt_gate);

}  // namespace poupinn
