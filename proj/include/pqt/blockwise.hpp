#pragma once

#include "pqt/matrix.hpp"

namespace pqt {

// Square-blockwise absolute maximum; edge blocks are partial.
BlockGrid block_absmax(const Matrix& w, std::size_t b_l);

// Each element receives its block's value.
Matrix broadcast_blocks(const BlockGrid& grid, std::size_t rows, std::size_t cols);

enum class Axis { Row, Col };

// Fake quantization with one scale per length-`block` vector along `axis`.
// scale = absmax / (2^(int_bits-1) - 1); rounding is half-away-from-zero;
// all-zero groups pass through unchanged.
Matrix fake_quant_vectorwise(const Matrix& w, Axis axis, std::size_t block, int int_bits);

// Same, with the scale shared per b_l x b_l square block.
Matrix fake_quant_squareblock(const Matrix& w, std::size_t b_l, int int_bits);

struct QuantizerConfig {
  enum class Kind { VectorRow, VectorCol, SquareBlock };
  Kind kind = Kind::SquareBlock;
  std::size_t block = 32;
  int int_bits = 4;
};

Matrix apply_quantizer(const Matrix& w, const QuantizerConfig& q);

// max |quant(W)^T - quant(W^T)| elementwise.
double transpose_discrepancy(const Matrix& w, const QuantizerConfig& q);

}  // namespace pqt
