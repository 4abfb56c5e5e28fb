#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <type_traits>
#include <vector>

#include "trustrec/matrix.hpp"

namespace trustrec {

// Compressed sparse rows with double values. Column indices inside a row
// are strictly increasing.
struct CsrMatrix {
  std::size_t num_rows = 0;
  std::size_t num_cols = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::uint32_t> col;
  std::vector<double> val;

  std::size_t nnz() const { return col.size(); }
  std::size_t row_begin(std::size_t r) const { return row_ptr[r]; }
  std::size_t row_end(std::size_t r) const { return row_ptr[r + 1]; }
  std::span<const std::uint32_t> row_cols(std::size_t r) const {
    return {col.data() + row_ptr[r], row_ptr[r + 1] - row_ptr[r]};
  }
  std::span<const double> row_vals(std::size_t r) const {
    return {val.data() + row_ptr[r], row_ptr[r + 1] - row_ptr[r]};
  }

  // Value at (r, c), or 0 when outside the pattern.
  double at(std::size_t r, std::uint32_t c) const;

  // y = A x
  std::vector<double> multiply(std::span<const double> x) const;
  // y = A^T x
  std::vector<double> multiply_transposed(std::span<const double> x) const;

  std::vector<double> row_sums() const;
  std::vector<double> col_sums() const;

  Matrix<double> to_dense() const;
};

// Row-wise builder: append rows in order, columns sorted within each row.
class CsrBuilder {
 public:
  CsrBuilder(std::size_t num_rows, std::size_t num_cols);
  void push(std::uint32_t c, double v);
  void end_row();
  CsrMatrix finish();

 private:
  CsrMatrix m_;
};

// acc[0..d) += w * src[0..d); the buffers never overlap.
template <typename T>
inline void axpy_row(std::size_t d, double w, const T* __restrict src, double* __restrict acc) {
  for (std::size_t c = 0; c < d; ++c) acc[c] += w * static_cast<double>(src[c]);
}

// out = A * in (dense block, row-major). `in.rows()` must equal A's column count.
template <typename T>
void csr_times_dense(const CsrMatrix& a, const Matrix<T>& in, Matrix<T>& out) {
  out = Matrix<T>(a.num_rows, in.cols());
  const std::size_t d = in.cols();
  std::vector<double> scratch(std::is_same_v<T, double> ? 0 : d);
  for (std::size_t r = 0; r < a.num_rows; ++r) {
    double* acc = nullptr;
    if constexpr (std::is_same_v<T, double>) {
      acc = out.row(r).data();
    } else {
      acc = scratch.data();
      std::fill(scratch.begin(), scratch.end(), 0.0);
    }
    for (std::size_t k = a.row_ptr[r]; k < a.row_ptr[r + 1]; ++k) axpy_row(d, a.val[k], in.row(a.col[k]).data(), acc);
    if constexpr (!std::is_same_v<T, double>) {
      auto dst = out.row(r);
      for (std::size_t c = 0; c < d; ++c) dst[c] = static_cast<T>(acc[c]);
    }
  }
}

// out = A^T * in
template <typename T>
void csr_transposed_times_dense(const CsrMatrix& a, const Matrix<T>& in, Matrix<T>& out) {
  const std::size_t d = in.cols();
  Matrix<double> acc(a.num_cols, d);
  for (std::size_t r = 0; r < a.num_rows; ++r) {
    const auto src = in.row(r);
    for (std::size_t k = a.row_ptr[r]; k < a.row_ptr[r + 1]; ++k) {
      const double w = a.val[k];
      auto dst = acc.row(a.col[k]);
      for (std::size_t c = 0; c < d; ++c) dst[c] += w * static_cast<double>(src[c]);
    }
  }
  out = acc.cast<T>();
}

}  // namespace trustrec
