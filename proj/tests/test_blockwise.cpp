#include <cmath>
#include <vector>

#include "doctest.h"
#include "pqt/blockwise.hpp"
#include "pqt/prng.hpp"

using namespace pqt;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, NormalStream& g) {
  Matrix m(r, c);
  for (double& v : m.data()) v = g.next();
  return m;
}

double round_half_away_ref(double x) {
  return x >= 0.0 ? std::floor(x + 0.5) : std::ceil(x - 0.5);
}

// Scalar-loop oracle for one quantization group.
void oracle_group(std::vector<double*>& elems, int int_bits) {
  const double qmax = static_cast<double>((1 << (int_bits - 1)) - 1);
  double absmax = 0.0;
  for (double* p : elems) absmax = std::max(absmax, std::fabs(*p));
  if (absmax == 0.0) return;
  for (double* p : elems) *p = round_half_away_ref(*p / (absmax / qmax)) * (absmax / qmax);
}

Matrix oracle_vectorwise(const Matrix& w, Axis axis, std::size_t block, int int_bits) {
  Matrix out = w;
  std::vector<double*> grp;
  if (axis == Axis::Row) {
    for (std::size_t i = 0; i < w.rows(); ++i)
      for (std::size_t j0 = 0; j0 < w.cols(); j0 += block) {
        grp.clear();
        for (std::size_t j = j0; j < std::min(j0 + block, w.cols()); ++j)
          grp.push_back(&out.at(i, j));
        oracle_group(grp, int_bits);
      }
  } else {
    for (std::size_t j = 0; j < w.cols(); ++j)
      for (std::size_t i0 = 0; i0 < w.rows(); i0 += block) {
        grp.clear();
        for (std::size_t i = i0; i < std::min(i0 + block, w.rows()); ++i)
          grp.push_back(&out.at(i, j));
        oracle_group(grp, int_bits);
      }
  }
  return out;
}

}  // namespace

TEST_SUITE("blockwise") {

TEST_CASE("block_absmax matches a naive scan on an edge-block shape") {
  NormalStream g(StreamKey{41, 0, 0, 0});
  const Matrix w = random_matrix(33, 33, g);
  const std::size_t b_l = 8;
  const BlockGrid grid = block_absmax(w, b_l);
  CHECK(grid.block_rows == 5);
  CHECK(grid.block_cols == 5);
  for (std::size_t bi = 0; bi < grid.block_rows; ++bi)
    for (std::size_t bj = 0; bj < grid.block_cols; ++bj) {
      double m = 0.0;
      for (std::size_t i = bi * b_l; i < std::min((bi + 1) * b_l, w.rows()); ++i)
        for (std::size_t j = bj * b_l; j < std::min((bj + 1) * b_l, w.cols()); ++j)
          m = std::max(m, std::fabs(w.at(i, j)));
      CHECK(grid.at(bi, bj) == m);
    }
}

TEST_CASE("broadcast_blocks assigns each element its block value") {
  NormalStream g(StreamKey{41, 1, 0, 0});
  const Matrix w = random_matrix(20, 13, g);
  const BlockGrid grid = block_absmax(w, 6);
  const Matrix b = broadcast_blocks(grid, 20, 13);
  for (std::size_t i = 0; i < 20; ++i)
    for (std::size_t j = 0; j < 13; ++j) CHECK(b.at(i, j) == grid.at(i / 6, j / 6));
  CHECK_THROWS(broadcast_blocks(grid, 25, 13));  // 5 block rows, grid has 4
}

TEST_CASE("fake quant matches the scalar oracle and is idempotent") {
  NormalStream g(StreamKey{41, 3, 0, 0});
  BitStream dims(StreamKey{41, 4, 0, 0});
  for (int t = 0; t < 200; ++t) {
    const std::size_t r = 1 + dims.next_u32() % 12;
    const std::size_t c = 1 + dims.next_u32() % 12;
    const std::size_t block = 1 + dims.next_u32() % 5;
    const int bits = 2 + static_cast<int>(dims.next_u32() % 7);
    const Matrix w = random_matrix(r, c, g);
    for (Axis axis : {Axis::Row, Axis::Col}) {
      const Matrix got = fake_quant_vectorwise(w, axis, block, bits);
      const Matrix want = oracle_vectorwise(w, axis, block, bits);
      for (std::size_t i = 0; i < got.size(); ++i) CHECK(got.data()[i] == want.data()[i]);
      // idempotent: the block max is exactly representable, so the grid is stable
      const Matrix twice = fake_quant_vectorwise(got, axis, block, bits);
      for (std::size_t i = 0; i < got.size(); ++i)
        CHECK(twice.data()[i] == doctest::Approx(got.data()[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("row quant of W equals transposed column quant of W^T") {
  NormalStream g(StreamKey{41, 5, 0, 0});
  BitStream dims(StreamKey{41, 6, 0, 0});
  for (int t = 0; t < 100; ++t) {
    const std::size_t r = 1 + dims.next_u32() % 10;
    const std::size_t c = 1 + dims.next_u32() % 10;
    const Matrix w = random_matrix(r, c, g);
    const Matrix a = fake_quant_vectorwise(w, Axis::Row, 3, 4);
    const Matrix b = fake_quant_vectorwise(w.transposed(), Axis::Col, 3, 4).transposed();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.data()[i] == b.data()[i]);
  }
}

TEST_CASE("square-block quantization commutes with transpose exactly") {
  NormalStream g(StreamKey{41, 7, 0, 0});
  BitStream dims(StreamKey{41, 8, 0, 0});
  QuantizerConfig q;
  q.kind = QuantizerConfig::Kind::SquareBlock;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t r = 1 + dims.next_u32() % 40;
    const std::size_t c = 1 + dims.next_u32() % 40;
    q.block = 1 + dims.next_u32() % 9;
    q.int_bits = 2 + static_cast<int>(dims.next_u32() % 7);
    const Matrix w = random_matrix(r, c, g);
    CHECK(transpose_discrepancy(w, q) == 0.0);
  }
}

TEST_CASE("vector-wise quantization does not commute with transpose") {
  // 4x4, block 2, 4-bit integers: the configuration of the printed demo.
  NormalStream g(StreamKey{7, 0xDE30u, 0, 0});
  const Matrix w = random_matrix(4, 4, g);
  QuantizerConfig q;
  q.kind = QuantizerConfig::Kind::VectorRow;
  q.block = 2;
  q.int_bits = 4;
  const double d = transpose_discrepancy(w, q);
  CHECK(d > 0.0);
  CHECK(d < 1.0);  // bounded by one quantization step at these magnitudes

  // pinned hand case: rows scale together, columns do not
  Matrix h(2, 2);
  h.at(0, 0) = 1.0; h.at(0, 1) = 0.4;
  h.at(1, 0) = 0.1; h.at(1, 1) = 0.9;
  CHECK(transpose_discrepancy(h, q) > 0.0);
}

TEST_CASE("spike and zero grids") {
  Matrix w(8, 8, 0.0);
  w.at(3, 5) = 2.5;
  const Matrix q = fake_quant_squareblock(w, 4, 4);
  CHECK(q.at(3, 5) == 2.5);  // block max is always exact
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j)
      if (i != 3 || j != 5) CHECK(q.at(i, j) == 0.0);

  // all-zero matrix passes through untouched
  const Matrix z(5, 5, 0.0);
  const Matrix qz = fake_quant_squareblock(z, 2, 4);
  for (double v : qz.data()) CHECK(v == 0.0);
}

TEST_CASE("int_bits = 2 collapses to sign times absmax") {
  Matrix w(1, 4);
  w.at(0, 0) = 0.9; w.at(0, 1) = -0.7; w.at(0, 2) = 0.2; w.at(0, 3) = -0.1;
  const Matrix q = fake_quant_vectorwise(w, Axis::Row, 4, 2);
  // qmax = 1: every element rounds to -absmax, 0, or absmax
  for (double v : q.data()) CHECK((v == 0.9 || v == -0.9 || v == 0.0));
  CHECK(q.at(0, 0) == 0.9);
  CHECK(q.at(0, 1) == -0.9);
  CHECK(q.at(0, 2) == 0.0);
  CHECK(q.at(0, 3) == 0.0);
  CHECK_THROWS(fake_quant_vectorwise(w, Axis::Row, 4, 1));
  CHECK_THROWS(fake_quant_squareblock(w, 2, 1));
}

TEST_CASE("apply_quantizer dispatches on kind") {
  NormalStream g(StreamKey{41, 9, 0, 0});
  const Matrix w = random_matrix(6, 6, g);
  QuantizerConfig q;
  q.block = 3;
  q.int_bits = 4;
  q.kind = QuantizerConfig::Kind::VectorRow;
  CHECK(apply_quantizer(w, q).data() == fake_quant_vectorwise(w, Axis::Row, 3, 4).data());
  q.kind = QuantizerConfig::Kind::VectorCol;
  CHECK(apply_quantizer(w, q).data() == fake_quant_vectorwise(w, Axis::Col, 3, 4).data());
  q.kind = QuantizerConfig::Kind::SquareBlock;
  CHECK(apply_quantizer(w, q).data() == fake_quant_squareblock(w, 3, 4).data());
}

}  // TEST_SUITE
