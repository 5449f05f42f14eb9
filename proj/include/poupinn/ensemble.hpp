#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "poupinn/mlp.hpp"
#include "poupinn/partition.hpp"

namespace poupinn {

/// Gated ensemble of identical local experts: u(x) = sum_j lambda_j(x) U_j(x).
/// The global parameter vector is ball-major; experts whose support excludes
/// x contribute nothing, neither to values nor to parameter sensitivities.
struct EnsembleModel {
  Partition partition;
  MlpSpec mlp_spec;
  std::vector<ParamBlock> params;  // one per ball

  int ball_count() const { return partition.size(); }
  std::size_t per_expert() const { return mlp_spec.param_count(); }
  std::size_t total_params() const { return per_expert() * params.size(); }
  std::size_t param_offset(int ball) const { return per_expert() * ball; }

  /// Copies of / into the ball-major flat vector.
  std::vector<double> flat_params() const;
  void set_flat_params(std::span<const double> theta);
  void add_flat_params(std::span<const double> delta);
};

EnsembleModel make_ensemble(Partition partition, MlpSpec spec, std::uint64_t seed);

std::vector<double> predict(const EnsembleModel& model, std::span<const double> x);

Bundle predict_bundle(const EnsembleModel& model, std::span<const double> x);

/// One sparse Jacobian row: for each active ball, the cotangent applied to
/// that expert's parameter sensitivities. Column indices are strictly
/// increasing (balls visited in index order, ball-major layout).
struct SparseRow {
  std::vector<std::int32_t> cols;
  std::vector<double> vals;
  void clear() {
    cols.clear();
    vals.clear();
  }
};

void sparse_param_row(const EnsembleModel& model, std::span<const double> x,
                      const Bundle& cotangent, SparseRow& out);

}  // namespace poupinn
