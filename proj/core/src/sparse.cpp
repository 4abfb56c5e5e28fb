#include "trustrec/sparse.hpp"

#include <algorithm>
#include <cassert>
#include <stdexcept>

namespace trustrec {

double CsrMatrix::at(std::size_t r, std::uint32_t c) const {
  const auto cols = row_cols(r);
  const auto it = std::lower_bound(cols.begin(), cols.end(), c);
  if (it == cols.end() || *it != c) return 0.0;
  return val[row_ptr[r] + static_cast<std::size_t>(it - cols.begin())];
}

std::vector<double> CsrMatrix::multiply(std::span<const double> x) const {
  assert(x.size() == num_cols);
  std::vector<double> y(num_rows, 0.0);
  for (std::size_t r = 0; r < num_rows; ++r) {
    double acc = 0.0;
    for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) acc += val[k] * x[col[k]];
    y[r] = acc;
  }
  return y;
}

std::vector<double> CsrMatrix::multiply_transposed(std::span<const double> x) const {
  assert(x.size() == num_rows);
  std::vector<double> y(num_cols, 0.0);
  for (std::size_t r = 0; r < num_rows; ++r) {
    const double xr = x[r];
    for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) y[col[k]] += val[k] * xr;
  }
  return y;
}

std::vector<double> CsrMatrix::row_sums() const {
  std::vector<double> s(num_rows, 0.0);
  for (std::size_t r = 0; r < num_rows; ++r)
    for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) s[r] += val[k];
  return s;
}

std::vector<double> CsrMatrix::col_sums() const {
  std::vector<double> s(num_cols, 0.0);
  for (std::size_t k = 0; k < col.size(); ++k) s[col[k]] += val[k];
  return s;
}

Matrix<double> CsrMatrix::to_dense() const {
  Matrix<double> d(num_rows, num_cols);
  for (std::size_t r = 0; r < num_rows; ++r)
    for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) d(r, col[k]) = val[k];
  return d;
}

CsrBuilder::CsrBuilder(std::size_t num_rows, std::size_t num_cols) {
  m_.num_rows = num_rows;
  m_.num_cols = num_cols;
  m_.row_ptr.reserve(num_rows + 1);
}

void CsrBuilder::push(std::uint32_t c, double v) {
  if (c >= m_.num_cols) throw std::out_of_range("csr column index out of range");
  if (m_.row_ptr.back() != m_.col.size() && m_.col.back() >= c)
    throw std::invalid_argument("csr columns must be strictly increasing within a row");
  m_.col.push_back(c);
  m_.val.push_back(v);
}

void CsrBuilder::end_row() { m_.row_ptr.push_back(m_.col.size()); }

CsrMatrix CsrBuilder::finish() {
  if (m_.row_ptr.size() != m_.num_rows + 1) throw std::logic_error("csr builder finished with missing rows");
  return std::move(m_);
}

}  // namespace trustrec
