#include "pqt/blockwise.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pqt {

BlockGrid block_absmax(const Matrix& w, std::size_t b_l) {
  if (w.rows() < 1 || w.cols() < 1) throw std::invalid_argument("block_absmax: empty matrix");
  BlockGrid grid = BlockGrid::for_matrix(w.rows(), w.cols(), b_l, 0.0);
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const std::size_t bi = i / b_l;
    for (std::size_t j = 0; j < w.cols(); ++j) {
      double& g = grid.at(bi, j / b_l);
      g = std::max(g, std::fabs(w.at(i, j)));
    }
  }
  return grid;
}

Matrix broadcast_blocks(const BlockGrid& grid, std::size_t rows, std::size_t cols) {
  if (!grid.matches_matrix(rows, cols))
    throw std::invalid_argument("broadcast_blocks: grid shape does not match matrix shape");
  Matrix out(rows, cols);
  const std::size_t b_l = grid.block_size;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out.at(i, j) = grid.at(i / b_l, j / b_l);
  return out;
}

namespace {

double round_half_away(double x) {
  return x >= 0.0 ? std::floor(x + 0.5) : std::ceil(x - 0.5);
}

// Quantizes the group of elements addressed by (index, fixed) through `get`.
template <typename GetRef>
void quant_group(std::size_t len, int int_bits, GetRef get) {
  const double qmax = static_cast<double>((1 << (int_bits - 1)) - 1);
  double absmax = 0.0;
  for (std::size_t k = 0; k < len; ++k) absmax = std::max(absmax, std::fabs(get(k)));
  if (absmax == 0.0) return;  // all-zero group passes through
  const double scale = absmax / qmax;
  for (std::size_t k = 0; k < len; ++k) get(k) = round_half_away(get(k) / scale) * scale;
}

}  // namespace

Matrix fake_quant_vectorwise(const Matrix& w, Axis axis, std::size_t block, int int_bits) {
  if (int_bits < 2) throw std::invalid_argument("fake_quant_vectorwise: int_bits must be >= 2");
  Matrix out = w;
  if (axis == Axis::Row) {
    for (std::size_t i = 0; i < w.rows(); ++i)
      for (std::size_t j0 = 0; j0 < w.cols(); j0 += block) {
        const std::size_t len = std::min(block, w.cols() - j0);
        quant_group(len, int_bits, [&](std::size_t k) -> double& { return out.at(i, j0 + k); });
      }
  } else {
    for (std::size_t j = 0; j < w.cols(); ++j)
      for (std::size_t i0 = 0; i0 < w.rows(); i0 += block) {
        const std::size_t len = std::min(block, w.rows() - i0);
        quant_group(len, int_bits, [&](std::size_t k) -> double& { return out.at(i0 + k, j); });
      }
  }
  return out;
}

Matrix fake_quant_squareblock(const Matrix& w, std::size_t b_l, int int_bits) {
  if (int_bits < 2) throw std::invalid_argument("fake_quant_squareblock: int_bits must be >= 2");
  const double qmax = static_cast<double>((1 << (int_bits - 1)) - 1);
  const BlockGrid absmax = block_absmax(w, b_l);
  Matrix out(w.rows(), w.cols());
  for (std::size_t i = 0; i < w.rows(); ++i)
    for (std::size_t j = 0; j < w.cols(); ++j) {
      const double m = absmax.at(i / b_l, j / b_l);
      if (m == 0.0) {
        out.at(i, j) = w.at(i, j);
        continue;
      }
      const double scale = m / qmax;
      out.at(i, j) = round_half_away(w.at(i, j) / scale) * scale;
    }
  return out;
}

Matrix apply_quantizer(const Matrix& w, const QuantizerConfig& q) {
  switch (q.kind) {
    case QuantizerConfig::Kind::VectorRow:
      return fake_quant_vectorwise(w, Axis::Row, q.block, q.int_bits);
    case QuantizerConfig::Kind::VectorCol:
      return fake_quant_vectorwise(w, Axis::Col, q.block, q.int_bits);
    case QuantizerConfig::Kind::SquareBlock:
      return fake_quant_squareblock(w, q.block, q.int_bits);
  }
  throw std::logic_error("apply_quantizer: unreachable");
}

double transpose_discrepancy(const Matrix& w, const QuantizerConfig& q) {
  const Matrix a = apply_quantizer(w, q).transposed();
  const Matrix b = apply_quantizer(w.transposed(), q);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::fabs(a.data()[i] - b.data()[i]));
  return worst;
}

}  // namespace pqt
