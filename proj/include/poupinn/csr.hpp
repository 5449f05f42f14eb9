#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace poupinn {

/// Compressed sparse row matrix. Column indices are strictly increasing
/// within each row; entries are structural (values may be zero).
struct SparseMatrixCSR {
  std::int64_t n_rows = 0;
  std::int64_t n_cols = 0;
  std::vector<std::int64_t> row_ptr;  // size n_rows + 1
  std::vector<std::int32_t> col_idx;
  std::vector<double> values;

  std::int64_t nnz() const { return static_cast<std::int64_t>(col_idx.size()); }
  double fill_fraction() const {
    return n_rows && n_cols
               ? static_cast<double>(nnz()) / (static_cast<double>(n_rows) * n_cols)
               : 0.0;
  }
  std::size_t storage_bytes() const {
    return row_ptr.size() * sizeof(std::int64_t) +
           col_idx.size() * sizeof(std::int32_t) + values.size() * sizeof(double);
  }

  void check_invariants() const;

  /// y = A x
  void multiply(std::span<const double> x, std::span<double> y) const;
  /// y = A^T x
  void multiply_transpose(std::span<const double> x, std::span<double> y) const;

  std::vector<double> to_dense() const;  // row-major n_rows * n_cols
};

/// Row-by-row builder; rows are appended in order with sorted columns.
class CsrBuilder {
 public:
  CsrBuilder(std::int64_t n_rows, std::int64_t n_cols);
  void set_row(std::int64_t row, std::span<const std::int32_t> cols,
               std::span<const double> vals);
  SparseMatrixCSR finish();

 private:
  SparseMatrixCSR m_;
  std::vector<std::vector<std::int32_t>> row_cols_;
  std::vector<std::vector<double>> row_vals_;
};

/// Matrix Market (coordinate real general) text dump for offline inspection.
void write_matrix_market(const SparseMatrixCSR& matrix, const std::string& path);

}  // namespace poupinn
