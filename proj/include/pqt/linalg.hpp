#pragma once

#include "pqt/matrix.hpp"

namespace pqt {

// C += or = A(MxK) * B(KxN), ikj loop order.
void matmul_into(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate);

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimensions disagree");
  Matrix c(a.rows(), b.cols(), 0.0);
  matmul_into(a, b, c, false);
  return c;
}

// C = A(MxN) * B(KxN)^T -> (MxK); row-dot form.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

// C = A(MxK)^T * B(MxN) -> (KxN).
Matrix matmul_tn(const Matrix& a, const Matrix& b);

}  // namespace pqt
