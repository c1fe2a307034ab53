#include <cmath>
#include <vector>

#include "doctest.h"
#include "pqt/noise.hpp"
#include "pqt/pqt_layer.hpp"
#include "pqt/prng.hpp"

using namespace pqt;

namespace {

double rel_err(double a, double b) {
  const double denom = std::max(1e-8, std::fabs(a) + std::fabs(b));
  return std::fabs(a - b) / denom;
}

Matrix random_matrix(std::size_t r, std::size_t c, NormalStream& g) {
  Matrix m(r, c);
  for (double& v : m.data()) v = g.next();
  return m;
}

double objective(PqtLayerState& state, const PqtConfig& cfg, std::uint64_t step,
                 const Matrix& G) {
  const Matrix& w_hat = sample_weights(state, cfg, step);
  double f = 0.0;
  for (std::size_t i = 0; i < G.size(); ++i) f += G.data()[i] * w_hat.data()[i];
  return f;
}

}  // namespace

TEST_SUITE("pqt_core") {

TEST_CASE("bt_from_bi is the affine interpolation between target and init") {
  PqtConfig cfg;
  cfg.b_init = 6.0;
  cfg.b_target = 4.0;
  BlockGrid bi(1, 3, 4, 0.0);
  bi.values = {1.0, 0.0, 0.5};
  const BlockGrid bt = bt_from_bi(bi, cfg);
  CHECK(bt.values[0] == 6.0);
  CHECK(bt.values[1] == 4.0);
  CHECK(bt.values[2] == 5.0);
}

TEST_CASE("apply_pqn hand oracle on a single 2x2 block") {
  Matrix w(2, 2);
  w.at(0, 0) = 1.0;   w.at(0, 1) = 0.5;
  w.at(1, 0) = -0.25; w.at(1, 1) = 0.125;
  Matrix R(2, 2);
  R.at(0, 0) = 1.0;  R.at(0, 1) = 0.0;
  R.at(1, 0) = -1.0; R.at(1, 1) = 2.0;
  BlockGrid absmax(1, 1, 2, 1.0);
  BlockGrid bt(1, 1, 2, 4.0);
  // step unit = absmax * 2^(1-4) = 1/8
  const Matrix got = apply_pqn(w, R, absmax, bt, nullptr);
  CHECK(got.at(0, 0) == 1.125);
  CHECK(got.at(0, 1) == 0.5);
  CHECK(got.at(1, 0) == -0.375);
  CHECK(got.at(1, 1) == 0.375);
  // all four values are exactly representable in e8m7, so the cast is a no-op
  const FpFormat f(8, 7);
  const Matrix cast_got = apply_pqn(w, R, absmax, bt, &f);
  for (std::size_t i = 0; i < 4; ++i) CHECK(cast_got.data()[i] == got.data()[i]);
  CHECK(got.at(0, 0) - w.at(0, 0) == 0.125);
}

TEST_CASE("zero noise is an exact pass-through before the cast") {
  NormalStream g(StreamKey{51, 0, 0, 0});
  const Matrix w = random_matrix(9, 7, g);
  PqtConfig cfg;
  cfg.b_l = 4;
  cfg.noise_kind = NoiseKind::None;
  cfg.operator_format = FpFormat(11, 52);  // identity cast
  PqtLayerState state = PqtLayerState::init(w, cfg, derive_layer_key(3, 0));
  const Matrix& w_hat = sample_weights(state, cfg, 1);
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(w_hat.data()[i] == w.data()[i]);
}

TEST_CASE("noise matrix is assembled from per-block substreams") {
  PqtConfig cfg;
  cfg.b_l = 4;
  cfg.noise_kind = NoiseKind::GaussBitwise;
  const StreamKey layer = derive_layer_key(77, 3);
  const std::size_t rows = 10, cols = 7;  // 3x2 block grid with partial edges
  const Matrix R = generate_noise_matrix(rows, cols, cfg, layer, 5);
  const std::size_t block_cols = ceil_div(cols, cfg.b_l);
  for (std::size_t bi = 0; bi < ceil_div(rows, cfg.b_l); ++bi)
    for (std::size_t bj = 0; bj < block_cols; ++bj) {
      const std::size_t r0 = bi * cfg.b_l, c0 = bj * cfg.b_l;
      const std::size_t nr = std::min(cfg.b_l, rows - r0), nc = std::min(cfg.b_l, cols - c0);
      const StreamKey key = with_block(with_step(layer, 5), bi * block_cols + bj);
      const PackedNoise pn = gen_gauss_bitwise(nr * nc, key);
      for (std::size_t k = 0; k < nr * nc; ++k)
        CHECK(R.at(r0 + k / nc, c0 + k % nc) == static_cast<double>(pn.symbol(k)));
    }
  // different steps give different draws
  const Matrix R2 = generate_noise_matrix(rows, cols, cfg, layer, 6);
  std::size_t diff = 0;
  for (std::size_t i = 0; i < R.size(); ++i) diff += R.data()[i] != R2.data()[i];
  CHECK(diff > 0);
}

TEST_CASE("backward regenerates the forward noise bitwise") {
  NormalStream g(StreamKey{51, 1, 0, 0});
  PqtConfig cfg;
  cfg.b_l = 8;
  PqtLayerState state = PqtLayerState::init(random_matrix(20, 20, g), cfg,
                                            derive_layer_key(9, 2));
  state.verify_noise = true;  // pqt_backward hard-compares R against the forward copy
  for (std::uint64_t step = 1; step <= 20; ++step) {
    sample_weights(state, cfg, step);
    Matrix G = random_matrix(20, 20, g);
    CHECK_NOTHROW(pqt_backward(G, state, cfg, step));
  }
  // forward/backward step mismatch is a contract violation
  sample_weights(state, cfg, 21);
  Matrix G(20, 20, 1.0);
  CHECK_THROWS(pqt_backward(G, state, cfg, 22));
}

TEST_CASE("analytic gradients match central finite differences") {
  // The cast is disabled via the identity format and the scale grid is frozen,
  // matching the operator's d(absmax)/dw ~ 0 treatment.
  NormalStream g(StreamKey{51, 2, 0, 0});
  BitStream dims(StreamKey{51, 3, 0, 0});
  const double h = 1e-5;
  int instances = 0;
  for (int t = 0; t < 60; ++t) {
    PqtConfig cfg;
    cfg.b_init = 6.0;
    cfg.b_target = 4.0;
    cfg.b_l = 1 + dims.next_u32() % 4;
    cfg.operator_format = FpFormat(11, 52);
    cfg.noise_kind = (t % 3 == 2) ? NoiseKind::Uniform : NoiseKind::GaussBitwise;
    const std::size_t r = 1 + dims.next_u32() % 9, c = 1 + dims.next_u32() % 9;
    PqtLayerState state = PqtLayerState::init(random_matrix(r, c, g), cfg,
                                              derive_layer_key(100 + t, 0));
    for (double& v : state.b_i.values) v = 0.4 + 0.9 * std::fabs(g.next()) / 3.0;
    state.frozen_absmax = block_absmax(state.w, cfg.b_l);
    const Matrix G = random_matrix(r, c, g);
    const std::uint64_t step = 7;

    sample_weights(state, cfg, step);
    const PqtGrads grads = pqt_backward(G, state, cfg, step);

    // d f / d b_i, every block
    for (std::size_t b = 0; b < state.b_i.size(); ++b) {
      const double save = state.b_i.values[b];
      state.b_i.values[b] = save + h;
      const double fp = objective(state, cfg, step, G);
      state.b_i.values[b] = save - h;
      const double fm = objective(state, cfg, step, G);
      state.b_i.values[b] = save;
      const double fd = (fp - fm) / (2.0 * h);
      if (std::fabs(fd) > 1e-10 || std::fabs(grads.grad_bi.values[b]) > 1e-10)
        CHECK(rel_err(fd, grads.grad_bi.values[b]) < 1e-5);
      // chain rule consistency between the two reported grids
      CHECK(grads.grad_bi.values[b] ==
            doctest::Approx(grads.grad_bt.values[b] * (cfg.b_init - cfg.b_target)));
    }

    // d f / d w on a few probed entries
    for (int probe = 0; probe < 3; ++probe) {
      const std::size_t i = dims.next_u32() % r, j = dims.next_u32() % c;
      const double save = state.w.at(i, j);
      state.w.at(i, j) = save + h;
      const double fp = objective(state, cfg, step, G);
      state.w.at(i, j) = save - h;
      const double fm = objective(state, cfg, step, G);
      state.w.at(i, j) = save;
      const double fd = (fp - fm) / (2.0 * h);
      CHECK(rel_err(fd, grads.grad_w.at(i, j)) < 1e-5);
    }
    sample_weights(state, cfg, step);  // restore a clean cache
    ++instances;
  }
  CHECK(instances >= 50);
}

TEST_CASE("bitwidth penalty value and subgradients") {
  PqtConfig cfg;
  cfg.b_target = 4.0;
  cfg.lambda = 2.0;
  BlockGrid bt(1, 2, 4, 0.0);
  bt.values = {5.0, 3.0};
  std::vector<BlockGrid> grads;
  const double total = bitwidth_penalty({bt}, cfg, &grads);
  CHECK(total == 2.0);  // lambda * mean(|1|, |-1|)
  CHECK(grads.size() == 1);
  CHECK(grads[0].values[0] == 1.0);   // lambda * (+1) / 2
  CHECK(grads[0].values[1] == -1.0);  // lambda * (-1) / 2
  cfg.lambda = 0.0;
  CHECK(bitwidth_penalty({bt}, cfg) == 0.0);
  cfg.lambda = -1.0;
  CHECK_THROWS(bitwidth_penalty({bt}, cfg));
}

TEST_CASE("bitwidth report tier percentages") {
  PqtConfig cfg;
  cfg.b_init = 1.0;  // with target 0, b_t equals b_i directly
  cfg.b_target = 0.0;
  cfg.b_l = 2;
  PqtLayerState state = PqtLayerState::init(Matrix(4, 4, 0.5), cfg, derive_layer_key(1, 0));
  state.b_i.values = {4.0, 6.0, 10.0, 13.0};  // one block per tier, equal sizes
  const BitwidthReport rep = bitwidth_report({&state}, {"l0"}, cfg);
  CHECK(rep.tier_le5 == 25.0);
  CHECK(rep.tier_le9 == 25.0);
  CHECK(rep.tier_le12 == 25.0);
  CHECK(rep.tier_gt12 == 25.0);
  CHECK(rep.tier_le5 + rep.tier_le9 + rep.tier_le12 + rep.tier_gt12 == 100.0);
  REQUIRE(rep.layers.size() == 1);
  CHECK(rep.layers[0].mean == doctest::Approx(8.25));
  CHECK(rep.layers[0].min == 4.0);
  CHECK(rep.layers[0].max == 13.0);
}

TEST_CASE("sub-threshold weights anneal to the noise value at the pmf rate") {
  // e3m2 cast, b_t = 4, one planted block max per 32x32 block; all other
  // magnitudes far below the small-weight threshold.
  PqtConfig cfg;
  cfg.b_init = 6.0;
  cfg.b_target = 4.0;
  cfg.b_l = 32;
  cfg.operator_format = FpFormat(3, 2);
  const std::size_t n = 512;
  NormalStream g(StreamKey{51, 4, 0, 0});
  BitStream mags(StreamKey{51, 5, 0, 0});
  Matrix w(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double u = (static_cast<double>(mags.next_u32()) + 0.5) * 0x1p-32;
      const double mag = std::exp2(-10.0 - 4.0 * u);
      w.at(i, j) = (mags.next_u32() & 1u) ? mag : -mag;
    }
  for (std::size_t bi = 0; bi < n / 32; ++bi)
    for (std::size_t bj = 0; bj < n / 32; ++bj) w.at(bi * 32, bj * 32) = 1.0;

  PqtLayerState state = PqtLayerState::init(w, cfg, derive_layer_key(2718, 0));
  for (double& v : state.b_i.values) v = 0.0;  // b_t = b_target = 4
  const std::uint64_t step = 3;
  const Matrix& w_hat = sample_weights(state, cfg, step);
  const Matrix R = generate_noise_matrix(n, n, cfg, state.layer_key, step);

  std::size_t masked = 0, sub = 0, nonzero_r = 0, r0_changed = 0;
  const FpFormat fmt(3, 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (w.at(i, j) == 1.0) continue;  // planted maxima are not sub-threshold
      ++sub;
      const double r = R.at(i, j);
      const double pqn = r * std::exp2(1.0 - 4.0);
      if (r != 0.0) {
        ++nonzero_r;
        if (w_hat.at(i, j) == cast_fp(pqn, fmt)) ++masked;
      } else {
        // R = 0: the pre-cast value is exactly w, nothing to mask
        r0_changed += cast_fp(w.at(i, j), fmt) != w_hat.at(i, j);
      }
    }
  CHECK(r0_changed == 0);
  CHECK(masked == nonzero_r);  // every sub-threshold weight with noise anneals
  const double p = 9285.0 / 32768.0;
  const double sigma = std::sqrt(p * (1.0 - p) * static_cast<double>(sub));
  CHECK(std::fabs(static_cast<double>(masked) - p * static_cast<double>(sub)) <= 4.0 * sigma);
}

TEST_CASE("sampling is bit-deterministic across identical states") {
  NormalStream g(StreamKey{51, 6, 0, 0});
  const Matrix w = random_matrix(33, 17, g);
  PqtConfig cfg;
  cfg.b_l = 16;
  PqtLayerState a = PqtLayerState::init(w, cfg, derive_layer_key(4, 4));
  PqtLayerState b = PqtLayerState::init(w, cfg, derive_layer_key(4, 4));
  const Matrix& wa = sample_weights(a, cfg, 12);
  const Matrix& wb = sample_weights(b, cfg, 12);
  for (std::size_t i = 0; i < wa.size(); ++i) CHECK(wa.data()[i] == wb.data()[i]);
}

}  // TEST_SUITE
