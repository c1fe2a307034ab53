#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "pqt/fp_format.hpp"
#include "pqt/noise.hpp"
#include "pqt/prng.hpp"

using namespace pqt;

namespace {

double u01(BitStream& s) { return (static_cast<double>(s.next_u32()) + 0.5) * 0x1p-32; }

// Every nonnegative representable value of fmt plus its mantissa parity, for
// an independent nearest-ties-to-even oracle by exhaustive enumeration.
struct Enumerated {
  std::vector<double> values;
  std::vector<int> parity;  // significand integer mod 2
};

Enumerated enumerate_format(const FpFormat& f) {
  Enumerated e;
  e.values.push_back(0.0);
  e.parity.push_back(0);
  const int m = f.mantissa_bits;
  // subnormals: k * 2^(min_normal_exp - m), k = 1 .. 2^m - 1
  for (long k = 1; k < (1L << m); ++k) {
    e.values.push_back(std::ldexp(static_cast<double>(k), f.min_normal_exp() - m));
    e.parity.push_back(static_cast<int>(k & 1));
  }
  // normals: (2^m + frac) * 2^(E - m)
  for (int E = f.min_normal_exp(); E <= f.max_exp(); ++E) {
    for (long frac = 0; frac < (1L << m); ++frac) {
      const long sig = (1L << m) + frac;
      e.values.push_back(std::ldexp(static_cast<double>(sig), E - m));
      e.parity.push_back(static_cast<int>(sig & 1));
    }
  }
  return e;
}

// Nearest value in the enumeration, ties to even significand.
double oracle_nearest(double ax, const Enumerated& e) {
  auto it = std::lower_bound(e.values.begin(), e.values.end(), ax);
  if (it == e.values.end()) return e.values.back();
  std::size_t hi = static_cast<std::size_t>(it - e.values.begin());
  if (e.values[hi] == ax) return ax;
  const std::size_t lo = hi - 1;  // hi >= 1 since values[0] = 0 <= ax
  const double dlo = ax - e.values[lo], dhi = e.values[hi] - ax;
  if (dlo < dhi) return e.values[lo];
  if (dhi < dlo) return e.values[hi];
  return e.parity[lo] == 0 ? e.values[lo] : e.values[hi];
}

}  // namespace

TEST_SUITE("fp_emu") {

TEST_CASE("format parsing and limits") {
  const FpFormat f = FpFormat::parse("e8m7");
  CHECK(f.exponent_bits == 8);
  CHECK(f.mantissa_bits == 7);
  CHECK(f.bias() == 127);
  CHECK(f.max_exp() == 127);
  CHECK(f.min_normal_exp() == -126);
  CHECK(f.max_finite() == std::ldexp(2.0 - 0x1p-7, 127));
  CHECK(f.min_subnormal() == 0x1p-133);
  CHECK(f.min_normal() == 0x1p-126);
  CHECK(f.to_string() == "e8m7");
  CHECK_THROWS(FpFormat::parse("bf16"));
  CHECK_THROWS(FpFormat::parse("e8m7x"));
  CHECK_THROWS(FpFormat(1, 4));
  CHECK_THROWS(FpFormat(12, 4));
  CHECK_THROWS(FpFormat(8, 53));
}

TEST_CASE("cast matches exhaustive nearest-even oracle on small formats") {
  for (const FpFormat f : {FpFormat(3, 2), FpFormat(4, 3), FpFormat(3, 4), FpFormat(5, 2),
                           FpFormat(2, 3), FpFormat(4, 6)}) {
    const Enumerated e = enumerate_format(f);
    // every representable value is a fixed point
    for (double v : e.values) {
      CHECK(cast_fp(v, f) == v);
      CHECK(cast_fp(-v, f) == -v);
    }
    // every adjacent midpoint resolves to the even neighbor, and slightly
    // off-midpoint points resolve to the strictly nearest neighbor
    for (std::size_t i = 0; i + 1 < e.values.size(); ++i) {
      const double lo = e.values[i], hi = e.values[i + 1];
      const double mid = lo + (hi - lo) / 2.0;
      const double expect_mid = e.parity[i] == 0 ? lo : hi;
      CHECK(cast_fp(mid, f) == expect_mid);
      CHECK(cast_fp(-mid, f) == -expect_mid);
      CHECK(cast_fp(std::nextafter(mid, lo), f) == lo);
      CHECK(cast_fp(std::nextafter(mid, hi), f) == hi);
    }
    // random probes across the full range vs the oracle
    BitStream s(StreamKey{99, 7, 0, 0});
    for (int t = 0; t < 20000; ++t) {
      const double span = f.bias() + f.mantissa_bits + 3;
      const double x = std::exp2((u01(s) * 2.0 - 1.0) * span) * (s.next_u32() & 1 ? 1.0 : -1.0);
      const double got = cast_fp(x, f);
      if (std::fabs(x) > f.max_finite()) {
        CHECK(std::isinf(got));
        CHECK(std::signbit(got) == std::signbit(x));
      } else {
        CHECK(got == std::copysign(oracle_nearest(std::fabs(x), e), x));
      }
    }
  }
}

TEST_CASE("cast is idempotent, monotone, odd on wide formats") {
  for (const FpFormat f : {FpFormat(8, 7), FpFormat(5, 10), FpFormat(4, 3), FpFormat(3, 4),
                           FpFormat(3, 2), FpFormat(4, 7)}) {
    BitStream s(StreamKey{3, static_cast<std::uint32_t>(f.exponent_bits * 100 + f.mantissa_bits),
                          0, 0});
    std::vector<double> xs;
    for (int t = 0; t < 100000; ++t) {
      const double span = f.bias() + f.mantissa_bits + 2;
      xs.push_back(std::exp2((u01(s) * 2.0 - 1.0) * span) * (s.next_u32() & 1 ? 1.0 : -1.0));
    }
    std::size_t idem = 0, odd = 0, mono = 0;
    for (double x : xs) {
      const double c = cast_fp(x, f);
      if (std::isfinite(c) && cast_fp(c, f) != c) ++idem;
      if (cast_fp(-x, f) != -c) ++odd;
    }
    std::sort(xs.begin(), xs.end());
    double prev = -std::numeric_limits<double>::infinity();
    for (double x : xs) {
      const double c = cast_fp(x, f);
      if (!(c >= prev)) ++mono;
      prev = c;
    }
    CHECK(idem == 0);
    CHECK(odd == 0);
    CHECK(mono == 0);
  }
}

TEST_CASE("cast hand values in e8m7") {
  const FpFormat f(8, 7);
  CHECK(cast_fp(1.0 + 0x1p-8, f) == 1.0);             // tie at 1 -> even (1.0)
  CHECK(cast_fp(1.0 + 0x1p-8 + 0x1p-12, f) == 1.0 + 0x1p-7);
  CHECK(cast_fp(1.0 + 0x1.8p-7, f) == 1.0 + 0x1p-6);  // tie between odd/even -> even
  CHECK(cast_fp(0.1, f) == doctest::Approx(0.1).epsilon(0x1p-8));
  CHECK(cast_fp(3.14159, f) == doctest::Approx(3.14159).epsilon(0x1p-8));
  CHECK(std::isinf(cast_fp(1e40, f)));
  CHECK(std::isinf(cast_fp(-1e40, f)));
  CHECK(cast_fp(f.max_finite(), f) == f.max_finite());
  CHECK(cast_fp(0x1p-200, f) == 0.0);                  // deep underflow to zero
  CHECK(cast_fp(f.min_subnormal(), f) == f.min_subnormal());
  CHECK(cast_fp(0.6 * f.min_subnormal(), f) == f.min_subnormal());
  CHECK(cast_fp(0.4 * f.min_subnormal(), f) == 0.0);
  CHECK(cast_fp(0.0, f) == 0.0);
  CHECK(std::isnan(cast_fp(std::nan(""), f)));
}

TEST_CASE("identity format e11m52 casts every double to itself") {
  const FpFormat f(11, 52);
  BitStream s(StreamKey{5, 5, 0, 0});
  for (int t = 0; t < 10000; ++t) {
    const double x = (u01(s) * 2.0 - 1.0) * std::exp2((u01(s) * 2.0 - 1.0) * 300.0);
    CHECK(cast_fp(x, f) == x);
  }
}

TEST_CASE("ulp") {
  const FpFormat f(8, 7);
  CHECK(ulp(1.0, f) == 0x1p-7);
  CHECK(ulp(-1.0, f) == 0x1p-7);
  CHECK(ulp(0.75, f) == 0x1p-8);
  CHECK(ulp(2.0, f) == 0x1p-6);
  CHECK(ulp(0x1p-140, f) == f.min_subnormal());  // clamped in the subnormal range
  CHECK_THROWS(ulp(0.0, f));
}

TEST_CASE("underflow_mask flags silenced noise only") {
  const FpFormat f(8, 7);
  Matrix w(1, 3), w_hat(1, 3), R(1, 3);
  // element 0: noise too small to move the cast -> masked
  w.at(0, 0) = 1.0; R.at(0, 0) = 1.0; w_hat.at(0, 0) = 1.0 + 0x1p-10;
  // element 1: noise moves the cast -> not masked
  w.at(0, 1) = 1.0; R.at(0, 1) = 1.0; w_hat.at(0, 1) = 1.0 + 0x1p-6;
  // element 2: zero noise -> never masked
  w.at(0, 2) = 1.0; R.at(0, 2) = 0.0; w_hat.at(0, 2) = 1.0;
  const Matrix mask = underflow_mask(w, w_hat, R, f);
  CHECK(mask.at(0, 0) == 1.0);
  CHECK(mask.at(0, 1) == 0.0);
  CHECK(mask.at(0, 2) == 0.0);
  Matrix bad(2, 2);
  CHECK_THROWS(underflow_mask(w, bad, R, f));
}

TEST_CASE("effective_pqn is the post-cast noise") {
  const FpFormat f(8, 7);
  Matrix w(1, 2), pqn(1, 2);
  w.at(0, 0) = 1.0; pqn.at(0, 0) = 0x1p-6;   // survives: 1 + 2^-6 representable
  w.at(0, 1) = 1.0; pqn.at(0, 1) = 0x1p-10;  // dies in the cast
  const Matrix eff = effective_pqn(w, pqn, f);
  CHECK(eff.at(0, 0) == 0x1p-6);
  CHECK(eff.at(0, 1) == 0.0);
}

TEST_CASE("bitwidth bound and thresholds") {
  CHECK(max_bt_bound(FpFormat(8, 7), 0) == 9);    // b_t < 9
  CHECK(max_bt_bound(FpFormat(8, 7), -4) == 5);   // uniform analog: b_t < 5
  CHECK(max_bt_bound(FpFormat(5, 10), 0) == 12);
  CHECK(small_w_threshold(1.0, 8.0, 0, FpFormat(8, 7)) == 0x1p-13);
  CHECK(small_w_threshold(4.0, 8.0, 0, FpFormat(8, 7)) == 0x1p-11);
  CHECK(small_w_threshold(1.0, 4.0, 0, FpFormat(3, 2)) == 0x1p-4);
  CHECK_THROWS(small_w_threshold(0.0, 8.0, 0, FpFormat(8, 7)));
}

TEST_CASE("exponent cutoff table for b_t 3..13") {
  static const int w_exp[11] = {2, 3, 3, 3, 3, 4, 4, 4, 4, 4, 4};
  static const int what_exp[11] = {3, 3, 3, 4, 4, 4, 4, 4, 4, 4, 4};
  for (int bt = 3; bt <= 13; ++bt) {
    const ExponentCutoff c = exponent_cutoff(bt, 0);
    CHECK(c.w_exponent_bits == w_exp[bt - 3]);
    CHECK(c.what_exponent_bits == what_exp[bt - 3]);
  }
  CHECK_THROWS(exponent_cutoff(0.0, 1));
}

TEST_CASE("underflow-free bound holds at b_t=8 and fails adversarially at b_t=10") {
  const FpFormat f(8, 7);
  const double safe_bt = 8.0, bad_bt = 10.0;
  BitStream s(StreamKey{11, 11, 0, 0});
  std::size_t safe_hits = 0;
  for (std::size_t t = 0; t < 1000; ++t) {
    constexpr std::size_t n = 32;
    Matrix w(1, n), R(1, n), w_hat(1, n);
    const double thr = small_w_threshold(1.0, safe_bt, 0, f);
    const double lo = std::log2(2.0 * thr * 1.0000001);
    for (std::size_t i = 0; i < n; ++i) {
      const double mag = std::exp2(lo - lo * u01(s));
      w.at(0, i) = (s.next_u32() & 1) ? mag : -mag;
    }
    w.at(0, s.next_u32() % n) = 1.0;  // planted block max
    const PackedNoise pn = gen_gauss_bitwise(n, StreamKey{11, 12, t, 0});
    for (std::size_t i = 0; i < n; ++i) {
      R.at(0, i) = pn.symbol(i);
      w_hat.at(0, i) = w.at(0, i) + R.at(0, i) * std::exp2(1.0 - safe_bt);
    }
    const Matrix mask = underflow_mask(w, w_hat, R, f);
    for (double v : mask.data()) safe_hits += v != 0.0;
  }
  CHECK(safe_hits == 0);

  // Constructed violation: w at the block max, |R| = 1, delta = 2^-9 which is
  // below the half-ulp 2^-8 at 1.0, so the cast swallows it.
  Matrix w(1, 32, 1.0), R(1, 32, 0.0), w_hat = w;
  R.at(0, 0) = 1.0;
  w_hat.at(0, 0) = 1.0 + std::exp2(1.0 - bad_bt);
  std::size_t bad_hits = 0;
  const Matrix bad_mask = underflow_mask(w, w_hat, R, f);
  for (double v : bad_mask.data()) bad_hits += v != 0.0;
  CHECK(bad_hits >= 1);
}

}  // TEST_SUITE
