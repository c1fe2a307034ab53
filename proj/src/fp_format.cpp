#include "pqt/fp_format.hpp"

#include <cfenv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace pqt {

FpFormat::FpFormat(int e, int m) : exponent_bits(e), mantissa_bits(m) {
  if (e < 2) throw std::invalid_argument("FpFormat: exponent_bits must be >= 2");
  if (m < 0) throw std::invalid_argument("FpFormat: mantissa_bits must be >= 0");
  if (e > 11 || m > 52) throw std::invalid_argument("FpFormat: wider than double");
}

FpFormat FpFormat::parse(std::string_view spec) {
  int e = 0, m = 0;
  char tail = 0;
  std::string s(spec);
  if (std::sscanf(s.c_str(), "e%dm%d%c", &e, &m, &tail) != 2)
    throw std::invalid_argument("FpFormat: expected \"e<E>m<M>\", got \"" + s + "\"");
  return FpFormat(e, m);
}

std::string FpFormat::to_string() const {
  return "e" + std::to_string(exponent_bits) + "m" + std::to_string(mantissa_bits);
}

double FpFormat::max_finite() const {
  // (2 - 2^-m) * 2^max_exp
  return std::ldexp(2.0 - std::ldexp(1.0, -mantissa_bits), max_exp());
}

double FpFormat::min_subnormal() const { return std::ldexp(1.0, min_normal_exp() - mantissa_bits); }

double FpFormat::min_normal() const { return std::ldexp(1.0, min_normal_exp()); }

double cast_fp(double x, const FpFormat& fmt) {
  if (std::isnan(x) || std::isinf(x) || x == 0.0) return x;
  const double ax = std::fabs(x);
  if (ax > fmt.max_finite())
    return std::copysign(std::numeric_limits<double>::infinity(), x);
  int e = std::ilogb(ax);  // floor(log2|x|), exact
  if (e < fmt.min_normal_exp()) e = fmt.min_normal_exp();
  const double step = std::ldexp(1.0, e - fmt.mantissa_bits);
  // x/step is exact (power-of-two scaling); nearbyint under the default
  // FE_TONEAREST mode gives ties-to-even on exact midpoints.
  const double q = std::nearbyint(x / step);
  return q * step;
}

double ulp(double x, const FpFormat& fmt) {
  if (x == 0.0) throw std::invalid_argument("ulp: undefined at zero");
  if (!std::isfinite(x)) throw std::invalid_argument("ulp: requires finite x");
  const int e = std::ilogb(std::fabs(x));
  double u = std::ldexp(1.0, e - fmt.mantissa_bits);
  const double sub = fmt.min_subnormal();
  return u < sub ? sub : u;
}

Matrix underflow_mask(const Matrix& w, const Matrix& w_hat, const Matrix& R,
                      const FpFormat& fmt) {
  if (!w.same_shape(w_hat) || !w.same_shape(R))
    throw std::invalid_argument("underflow_mask: shape mismatch");
  Matrix mask(w.rows(), w.cols(), 0.0);
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (R.data()[i] != 0.0 && cast_fp(w_hat.data()[i], fmt) == cast_fp(w.data()[i], fmt))
      mask.data()[i] = 1.0;
  }
  return mask;
}

Matrix effective_pqn(const Matrix& w, const Matrix& pqn, const FpFormat& fmt) {
  if (!w.same_shape(pqn)) throw std::invalid_argument("effective_pqn: shape mismatch");
  Matrix out(w.rows(), w.cols());
  for (std::size_t i = 0; i < w.size(); ++i)
    out.data()[i] = cast_fp(w.data()[i] + pqn.data()[i], fmt) - cast_fp(w.data()[i], fmt);
  return out;
}

int max_bt_bound(const FpFormat& fmt, int tau) { return fmt.mantissa_bits + 2 + tau; }

ExponentCutoff exponent_cutoff(double b_t, int tau) {
  const double a = -tau + b_t + 1;
  if (a < 1.0) throw std::domain_error("exponent_cutoff: requires -tau + b_t + 1 >= 1");
  const double b = -tau + b_t + 3;
  return ExponentCutoff{static_cast<int>(std::ceil(std::log2(a))),
                        static_cast<int>(std::ceil(std::log2(b)))};
}

double small_w_threshold(double max_abs_w, double b_t, int tau, const FpFormat& fmt) {
  if (!(max_abs_w > 0.0)) throw std::invalid_argument("small_w_threshold: max_abs_w must be > 0");
  const double inner = std::floor(tau + 2.0 - b_t + std::log2(max_abs_w));
  return std::ldexp(1.0, static_cast<int>(inner) - fmt.mantissa_bits);
}

}  // namespace pqt
