#include "poupinn/csr.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "poupinn/errors.hpp"

namespace poupinn {

void SparseMatrixCSR::check_invariants() const {
  if (row_ptr.size() != static_cast<std::size_t>(n_rows) + 1)
    throw Error("csr: row_ptr size mismatch");
  if (row_ptr.front() != 0 || row_ptr.back() != nnz())
    throw Error("csr: row_ptr endpoints invalid");
  for (std::int64_t r = 0; r < n_rows; ++r) {
    if (row_ptr[r] > row_ptr[r + 1]) throw Error("csr: row_ptr not monotone");
    for (std::int64_t k = row_ptr[r] + 1; k < row_ptr[r + 1]; ++k)
      if (col_idx[k - 1] >= col_idx[k])
        throw Error("csr: columns not strictly increasing in row " + std::to_string(r));
  }
  for (std::int32_t c : col_idx)
    if (c < 0 || c >= n_cols) throw Error("csr: column index out of range");
  if (values.size() != col_idx.size()) throw Error("csr: values/col_idx size mismatch");
}

void SparseMatrixCSR::multiply(std::span<const double> x, std::span<double> y) const {
  for (std::int64_t r = 0; r < n_rows; ++r) {
    double acc = 0.0;
    for (std::int64_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
      acc += values[k] * x[col_idx[k]];
    y[r] = acc;
  }
}

void SparseMatrixCSR::multiply_transpose(std::span<const double> x,
                                         std::span<double> y) const {
  std::fill(y.begin(), y.end(), 0.0);
  for (std::int64_t r = 0; r < n_rows; ++r) {
    const double xr = x[r];
    if (xr == 0.0) continue;
    for (std::int64_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
      y[col_idx[k]] += values[k] * xr;
  }
}

std::vector<double> SparseMatrixCSR::to_dense() const {
  std::vector<double> dense(static_cast<std::size_t>(n_rows) * n_cols, 0.0);
  for (std::int64_t r = 0; r < n_rows; ++r)
    for (std::int64_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
      dense[static_cast<std::size_t>(r) * n_cols + col_idx[k]] = values[k];
  return dense;
}

CsrBuilder::CsrBuilder(std::int64_t n_rows, std::int64_t n_cols) {
  m_.n_rows = n_rows;
  m_.n_cols = n_cols;
  row_cols_.resize(n_rows);
  row_vals_.resize(n_rows);
}

void CsrBuilder::set_row(std::int64_t row, std::span<const std::int32_t> cols,
                         std::span<const double> vals) {
  row_cols_[row].assign(cols.begin(), cols.end());
  row_vals_[row].assign(vals.begin(), vals.end());
}

SparseMatrixCSR CsrBuilder::finish() {
  m_.row_ptr.assign(static_cast<std::size_t>(m_.n_rows) + 1, 0);
  std::int64_t nnz = 0;
  for (std::int64_t r = 0; r < m_.n_rows; ++r) {
    nnz += static_cast<std::int64_t>(row_cols_[r].size());
    m_.row_ptr[r + 1] = nnz;
  }
  m_.col_idx.reserve(nnz);
  m_.values.reserve(nnz);
  for (std::int64_t r = 0; r < m_.n_rows; ++r) {
    m_.col_idx.insert(m_.col_idx.end(), row_cols_[r].begin(), row_cols_[r].end());
    m_.values.insert(m_.values.end(), row_vals_[r].begin(), row_vals_[r].end());
  }
  m_.check_invariants();
  row_cols_.clear();
  row_vals_.clear();
  return std::move(m_);
}

void write_matrix_market(const SparseMatrixCSR& matrix, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << matrix.n_rows << " " << matrix.n_cols << " " << matrix.nnz() << "\n";
  char buf[64];
  for (std::int64_t r = 0; r < matrix.n_rows; ++r)
    for (std::int64_t k = matrix.row_ptr[r]; k < matrix.row_ptr[r + 1]; ++k) {
      std::snprintf(buf, sizeof buf, "%lld %d %.17g\n",
                    static_cast<long long>(r + 1), matrix.col_idx[k] + 1,
                    matrix.values[k]);
      out << buf;
    }
}

}  // namespace poupinn
