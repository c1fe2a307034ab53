#include "pqt/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "pqt/blockwise.hpp"
#include "pqt/noise.hpp"
#include "pqt/pqt_layer.hpp"

namespace pqt {

namespace {

double u01(BitStream& s) { return (static_cast<double>(s.next_u32()) + 0.5) * 0x1p-32; }

// Random block with a planted absmax of 1 and all other magnitudes
// log-uniform in (2 * small_w_threshold, 1], the regime the underflow-free
// bound covers.
Matrix random_safe_block(const FpFormat& fmt, double b_t, int tau, std::size_t n, BitStream& s) {
  Matrix w(1, n, 0.0);
  const double thr = small_w_threshold(1.0, b_t, tau, fmt);
  const double lo = std::log2(std::min(0.5, 2.0 * thr * 1.0000001));
  for (std::size_t i = 0; i < n; ++i) {
    const double mag = std::exp2(lo + (0.0 - lo) * u01(s));
    w.at(0, i) = (s.next_u32() & 1u) ? mag : -mag;
  }
  w.at(0, s.next_u32() % n) = 1.0;  // planted block max
  return w;
}

std::size_t count_mask_hits(const Matrix& w, const Matrix& R, double b_t, const FpFormat& fmt) {
  Matrix w_hat = w;
  for (std::size_t i = 0; i < w.size(); ++i)
    w_hat.data()[i] = w.data()[i] + R.data()[i] * std::exp2(1.0 - b_t);
  const Matrix mask = underflow_mask(w, w_hat, R, fmt);
  std::size_t hits = 0;
  for (double v : mask.data()) hits += v != 0.0;
  return hits;
}

std::size_t lemma1_hits_gauss(const FpFormat& fmt, double b_t, std::size_t trials,
                              std::uint64_t seed) {
  std::size_t hits = 0;
  constexpr std::size_t n = 32;
  BitStream s(StreamKey{seed, 0x1E41u, 0, 0});
  for (std::size_t t = 0; t < trials; ++t) {
    const Matrix w = random_safe_block(fmt, b_t, 0, n, s);
    const PackedNoise pn = gen_gauss_bitwise(n, StreamKey{seed, 0x1E42u, t, 0});
    Matrix R(1, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) R.at(0, i) = pn.symbol(i);
    hits += count_mask_hits(w, R, b_t, fmt);
  }
  return hits;
}

// Uniform noise snapped to a 2^-4 grid: tau = -4.
std::size_t lemma1_hits_uniform(const FpFormat& fmt, double b_t, std::size_t trials,
                                std::uint64_t seed) {
  std::size_t hits = 0;
  constexpr std::size_t n = 32;
  BitStream s(StreamKey{seed, 0x1E43u, 0, 0});
  for (std::size_t t = 0; t < trials; ++t) {
    const Matrix w = random_safe_block(fmt, b_t, -4, n, s);
    const std::vector<double> u = gen_uniform(n, StreamKey{seed, 0x1E44u, t, 0});
    Matrix R(1, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) R.at(0, i) = std::nearbyint(u[i] * 16.0) / 16.0;
    hits += count_mask_hits(w, R, b_t, fmt);
  }
  return hits;
}

VerifyClaim claim(const std::string& name, bool pass, const std::string& detail) {
  return VerifyClaim{name, pass, detail};
}

std::string counts(std::size_t got, const std::string& what) {
  return std::to_string(got) + " " + what;
}

}  // namespace

VerifyReport verify_lemmas(const FpFormat& fmt, std::size_t trials, std::uint64_t seed) {
  if (trials < 100) throw std::invalid_argument("verify: trials must be >= 100");
  VerifyReport rep;
  BitStream s(StreamKey{seed, 0x1E40u, 0, 0});

  // Cast algebra on random finite values.
  std::size_t idem_fail = 0, mono_fail = 0, odd_fail = 0;
  double prev_x = 0.0, prev_c = 0.0;
  bool have_prev = false;
  std::vector<double> xs;
  xs.reserve(trials);
  for (std::size_t t = 0; t < trials; ++t) {
    const double mag = std::exp2((u01(s) * 2.0 - 1.0) * (fmt.bias() + fmt.mantissa_bits + 2));
    xs.push_back((s.next_u32() & 1u) ? mag : -mag);
  }
  for (double x : xs) {
    const double c = cast_fp(x, fmt);
    if (std::isfinite(c) && cast_fp(c, fmt) != c) ++idem_fail;
    if (cast_fp(-x, fmt) != -c) ++odd_fail;
  }
  std::sort(xs.begin(), xs.end());
  for (double x : xs) {
    const double c = cast_fp(x, fmt);
    if (have_prev && prev_x <= x && !(prev_c <= c)) ++mono_fail;
    prev_x = x;
    prev_c = c;
    have_prev = true;
  }
  rep.claims.push_back(claim("cast idempotent", idem_fail == 0, counts(idem_fail, "failures")));
  rep.claims.push_back(claim("cast monotone", mono_fail == 0, counts(mono_fail, "failures")));
  rep.claims.push_back(claim("cast odd-symmetric", odd_fail == 0, counts(odd_fail, "failures")));

  // Underflow bound: safe bitwidth has zero mask hits; the adversarial
  // bitwidth two above it is guaranteed at least one.
  const int safe_bt = fmt.mantissa_bits + 1;
  const int bad_bt = fmt.mantissa_bits + 3;
  const std::size_t safe_hits = lemma1_hits_gauss(fmt, safe_bt, trials, seed);
  rep.claims.push_back(claim("no mask hits at b_t=" + std::to_string(safe_bt), safe_hits == 0,
                             counts(safe_hits, "hits over " + std::to_string(trials) + " blocks")));
  {
    Matrix w(1, 32, 1.0);
    Matrix R(1, 32, 0.0);
    R.at(0, 0) = 1.0;
    const std::size_t hits = count_mask_hits(w, R, bad_bt, fmt);
    rep.claims.push_back(claim("adversarial mask hit at b_t=" + std::to_string(bad_bt), hits >= 1,
                               counts(hits, "hits")));
  }

  // Uniform-noise analog with tau = -4: bound moves down by 4 bits.
  const int u_safe = fmt.mantissa_bits + 1 - 4;
  const int u_bad = u_safe + 1;
  if (u_safe >= 2) {
    const std::size_t hits0 = lemma1_hits_uniform(fmt, u_safe, trials, seed);
    rep.claims.push_back(
        claim("uniform tau=-4: no mask hits at b_t=" + std::to_string(u_safe), hits0 == 0,
              counts(hits0, "hits over " + std::to_string(trials) + " blocks")));
    Matrix w(1, 32, 1.0);
    Matrix R(1, 32, 0.0);
    R.at(0, 0) = 0.0625;
    const std::size_t hits1 = count_mask_hits(w, R, u_bad, fmt);
    rep.claims.push_back(claim("uniform tau=-4: mask hit at b_t=" + std::to_string(u_bad),
                               hits1 >= 1, counts(hits1, "hits")));
  }

  // Exponent-cutoff table, b_t = 3..13 at tau = 0.
  {
    static const int w_exp[11] = {2, 3, 3, 3, 3, 4, 4, 4, 4, 4, 4};
    static const int what_exp[11] = {3, 3, 3, 4, 4, 4, 4, 4, 4, 4, 4};
    std::size_t mism = 0;
    for (int bt = 3; bt <= 13; ++bt) {
      const ExponentCutoff c = exponent_cutoff(bt, 0);
      if (c.w_exponent_bits != w_exp[bt - 3] || c.what_exponent_bits != what_exp[bt - 3]) ++mism;
    }
    rep.claims.push_back(
        claim("exponent cutoff table b_t 3..13", mism == 0, counts(mism, "mismatching rows")));
  }

  // Sub-threshold masking frequency at e3m2, b_t = 4: matches Pr(R != 0)
  // within 4 sigma; never masks when R = 0.
  {
    const FpFormat small{3, 2};
    const double bt = 4.0;
    const std::size_t N = 1000000;
    const PackedNoise pn = gen_gauss_bitwise(N, StreamKey{seed, 0x1E45u, 0, 0});
    BitStream ws(StreamKey{seed, 0x1E46u, 0, 0});
    std::size_t masked = 0, masked_r0 = 0, nonzero = 0;
    for (std::size_t i = 0; i < N; ++i) {
      const double r = pn.symbol(i);
      // |w| well below the small-weight threshold so cast(w + pqn) lands
      // exactly on cast(pqn) whenever r != 0.
      const double mag = std::exp2(-10.0 - 4.0 * u01(ws));
      const double w = (ws.next_u32() & 1u) ? mag : -mag;
      const double pqn = r * std::exp2(1.0 - bt);
      const double w_hat = w + pqn;
      // Masked: the cast output carries no trace of w, only of the noise.
      const bool m = r != 0.0 && cast_fp(w_hat, small) == cast_fp(pqn, small);
      masked += m;
      if (r == 0.0) {
        masked_r0 += w_hat != w;  // with r = 0 nothing should change at all
      } else {
        ++nonzero;
      }
    }
    const double p = 9285.0 / 32768.0;
    const double sigma = std::sqrt(p * (1.0 - p) * static_cast<double>(N));
    const double dev = std::fabs(static_cast<double>(masked) - p * static_cast<double>(N));
    std::ostringstream d;
    d << masked << " masked of " << N << " (" << nonzero << " nonzero R), |dev| = " << dev
      << ", 4 sigma = " << 4.0 * sigma;
    rep.claims.push_back(claim("sub-threshold masking frequency (e3m2, b_t=4)",
                               dev <= 4.0 * sigma && masked == nonzero, d.str()));
    rep.claims.push_back(
        claim("no masking with zero noise", masked_r0 == 0, counts(masked_r0, "events")));
  }

  return rep;
}

void print_verify_report(std::ostream& os, const VerifyReport& rep) {
  for (const VerifyClaim& c : rep.claims)
    os << (c.pass ? "PASS" : "FAIL") << "  " << c.name << " — " << c.detail << "\n";
  os << (rep.all_pass() ? "all claims passed\n" : "SOME CLAIMS FAILED\n");
}

namespace {

void print_panel(std::ostream& os, const std::string& title, const Matrix& m) {
  os << title << "\n";
  char buf[32];
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%9.4f", m.at(i, j));
      os << buf;
    }
    os << "\n";
  }
  os << "\n";
}

}  // namespace

void demo_consistency(std::ostream& os, std::size_t size, std::size_t block, int int_bits,
                      std::uint64_t seed) {
  if (size < block) throw std::invalid_argument("demo: size must be >= block");
  Matrix w(size, size);
  NormalStream g(StreamKey{seed, 0xDE30u, 0, 0});
  for (double& v : w.data()) v = g.next();

  const Matrix row_q = fake_quant_vectorwise(w, Axis::Row, block, int_bits);
  const Matrix col_q = fake_quant_vectorwise(w, Axis::Col, block, int_bits);
  Matrix diff = row_q;
  double max_diff = 0.0;
  for (std::size_t i = 0; i < diff.size(); ++i) {
    diff.data()[i] -= col_q.data()[i];
    max_diff = std::max(max_diff, std::fabs(diff.data()[i]));
  }

  print_panel(os, "original", w);
  print_panel(os, "row-quantized (scale per row vector)", row_q);
  print_panel(os, "column-quantized (scale per column vector)", col_q);
  print_panel(os, "discrepancy (row - column)", diff);
  os << "max vector-wise discrepancy: " << max_diff << "\n\n";

  const Matrix sq = fake_quant_squareblock(w, block, int_bits);
  const Matrix sq_t = fake_quant_squareblock(w.transposed(), block, int_bits).transposed();
  Matrix sq_diff = sq;
  double sq_max = 0.0;
  for (std::size_t i = 0; i < sq_diff.size(); ++i) {
    sq_diff.data()[i] -= sq_t.data()[i];
    sq_max = std::max(sq_max, std::fabs(sq_diff.data()[i]));
  }
  print_panel(os, "square-block transpose discrepancy (all zeros)", sq_diff);
  os << "max square-block discrepancy: " << sq_max << "\n";
}

}  // namespace pqt
