#include "pqt/linalg.hpp"

#include <stdexcept>

namespace pqt {

void matmul_into(const Matrix& a, const Matrix& b, Matrix& c, bool accumulate) {
  const std::size_t M = a.rows(), K = a.cols(), N = b.cols();
  if (b.rows() != K || c.rows() != M || c.cols() != N)
    throw std::invalid_argument("matmul_into: shape mismatch");
  if (!accumulate)
    for (double& v : c.data()) v = 0.0;
  for (std::size_t i = 0; i < M; ++i) {
    double* __restrict crow = c.row_ptr(i);
    const double* __restrict arow = a.row_ptr(i);
    for (std::size_t k = 0; k < K; ++k) {
      const double av = arow[k];
      const double* __restrict brow = b.row_ptr(k);
      for (std::size_t j = 0; j < N; ++j) crow[j] += av * brow[j];
    }
  }
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  const std::size_t M = a.rows(), N = a.cols(), K = b.rows();
  if (b.cols() != N) throw std::invalid_argument("matmul_nt: shape mismatch");
  Matrix c(M, K, 0.0);
  for (std::size_t i = 0; i < M; ++i) {
    const double* __restrict arow = a.row_ptr(i);
    double* __restrict crow = c.row_ptr(i);
    for (std::size_t k = 0; k < K; ++k) {
      const double* __restrict brow = b.row_ptr(k);
      double acc = 0.0;
      for (std::size_t j = 0; j < N; ++j) acc += arow[j] * brow[j];
      crow[k] = acc;
    }
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  const std::size_t M = a.rows(), K = a.cols(), N = b.cols();
  if (b.rows() != M) throw std::invalid_argument("matmul_tn: shape mismatch");
  Matrix c(K, N, 0.0);
  for (std::size_t m = 0; m < M; ++m) {
    const double* __restrict arow = a.row_ptr(m);
    const double* __restrict brow = b.row_ptr(m);
    for (std::size_t k = 0; k < K; ++k) {
      const double av = arow[k];
      double* __restrict crow = c.row_ptr(k);
      for (std::size_t j = 0; j < N; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

}  // namespace pqt
