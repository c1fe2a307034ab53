#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

namespace pqt {

// Dense row-major 2-D array of full-precision reals.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix from(std::size_t rows, std::size_t cols, std::vector<double> data) {
    if (data.size() != rows * cols)
      throw std::invalid_argument("Matrix::from: data length does not match shape");
    Matrix m;
    m.rows_ = rows;
    m.cols_ = cols;
    m.data_ = std::move(data);
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& at(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double at(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  double* row_ptr(std::size_t i) { return data_.data() + i * cols_; }
  const double* row_ptr(std::size_t i) const { return data_.data() + i * cols_; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  Matrix transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t.at(j, i) = at(i, j);
    return t;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

// Per-block scalar grid of shape ceil(rows/b_l) x ceil(cols/b_l).
struct BlockGrid {
  std::size_t block_rows = 0;
  std::size_t block_cols = 0;
  std::size_t block_size = 32;  // b_l
  std::vector<double> values;

  BlockGrid() = default;
  BlockGrid(std::size_t brows, std::size_t bcols, std::size_t b_l, double fill = 0.0)
      : block_rows(brows), block_cols(bcols), block_size(b_l), values(brows * bcols, fill) {
    if (b_l < 1) throw std::invalid_argument("BlockGrid: block size must be >= 1");
  }

  static BlockGrid for_matrix(std::size_t rows, std::size_t cols, std::size_t b_l,
                              double fill = 0.0) {
    return BlockGrid(ceil_div(rows, b_l), ceil_div(cols, b_l), b_l, fill);
  }

  double& at(std::size_t bi, std::size_t bj) { return values[bi * block_cols + bj]; }
  double at(std::size_t bi, std::size_t bj) const { return values[bi * block_cols + bj]; }

  std::size_t size() const { return values.size(); }

  bool same_shape(const BlockGrid& o) const {
    return block_rows == o.block_rows && block_cols == o.block_cols && block_size == o.block_size;
  }

  bool matches_matrix(std::size_t rows, std::size_t cols) const {
    return block_rows == ceil_div(rows, block_size) && block_cols == ceil_div(cols, block_size);
  }
};

}  // namespace pqt
