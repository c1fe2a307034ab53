#pragma once

#include <string>
#include <string_view>

#include "pqt/matrix.hpp"

namespace pqt {

// An emulated floating-point format with e exponent bits and m mantissa bits.
// Subnormals are always supported; overflow saturates to a signed infinity
// sentinel. Rounding is round-to-nearest, ties-to-even.
struct FpFormat {
  int exponent_bits = 8;
  int mantissa_bits = 7;

  FpFormat() = default;
  FpFormat(int e, int m);

  // Parses "e<E>m<M>" strings, e.g. "e8m7".
  static FpFormat parse(std::string_view spec);
  std::string to_string() const;

  int bias() const { return (1 << (exponent_bits - 1)) - 1; }
  int min_normal_exp() const { return 1 - bias(); }
  int max_exp() const { return bias(); }
  double max_finite() const;
  double min_subnormal() const;
  double min_normal() const;

  bool operator==(const FpFormat&) const = default;
};

// Nearest representable value in fmt (RNE). Total on finite inputs; NaN passes
// through; magnitudes above max_finite() map to signed infinity.
double cast_fp(double x, const FpFormat& fmt);

// 2^(floor(log2|x|) - m), clamped below at the subnormal step. Errors on x = 0.
double ulp(double x, const FpFormat& fmt);

// Entry (i,j) is 1.0 iff R_ij != 0 and cast_fp(w_hat_ij) == cast_fp(w_ij),
// i.e. the PQN was silenced by casting.
Matrix underflow_mask(const Matrix& w, const Matrix& w_hat, const Matrix& R, const FpFormat& fmt);

// cast_fp(w + pqn) - cast_fp(w), elementwise: the noise actually seen forward.
Matrix effective_pqn(const Matrix& w, const Matrix& pqn, const FpFormat& fmt);

// Exclusive upper bound m + 2 + tau on b_t for underflow-free PQN.
int max_bt_bound(const FpFormat& fmt, int tau);

// Sufficient exponent bits for w and w_hat respectively.
struct ExponentCutoff {
  int w_exponent_bits;
  int what_exponent_bits;
};
ExponentCutoff exponent_cutoff(double b_t, int tau);

// 2^(floor(tau + 2 - b_t + log2(max_abs_w)) - m). Elements at or below this
// magnitude may be masked to zero when R != 0.
double small_w_threshold(double max_abs_w, double b_t, int tau, const FpFormat& fmt);

}  // namespace pqt
