#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pqt/blockwise.hpp"
#include "pqt/fp_format.hpp"
#include "pqt/matrix.hpp"
#include "pqt/noise.hpp"
#include "pqt/prng.hpp"

namespace pqt {

enum class NoiseKind { GaussBitwise, GaussBoxmuller, Uniform, None };

NoiseKind parse_noise_kind(const std::string& name);
const char* noise_kind_name(NoiseKind kind);

struct PqtConfig {
  double b_init = 6.0;
  double b_target = 4.0;
  double lambda = 0.0;
  std::size_t b_l = 32;
  NoiseKind noise_kind = NoiseKind::GaussBitwise;
  FpFormat operator_format{8, 7};
};

struct PqtLayerState {
  Matrix w;
  BlockGrid b_i;  // internal bitwidth parameter, initialized to 1
  StreamKey layer_key;

  // Forward cache: operator-format-cast sampled weights plus the step whose
  // substream regenerates R in backward.
  Matrix w_hat;
  std::uint64_t cached_step = 0;
  bool has_cached = false;

  // Gradient-check support: when set, sample_weights uses this grid instead of
  // recomputing block_absmax(w), matching the operator's d(absmax)/dw ~ 0
  // approximation under finite differencing.
  std::optional<BlockGrid> frozen_absmax;

  // When true, the forward R is kept and compared bitwise against the
  // regenerated R in backward.
  bool verify_noise = false;
  Matrix cached_noise;

  static PqtLayerState init(Matrix w, const PqtConfig& cfg, StreamKey layer_key);
};

// Elementwise affine map b_target + b_i * (b_init - b_target).
BlockGrid bt_from_bi(const BlockGrid& b_i, const PqtConfig& cfg);

// Noise matrix for a (rows x cols) layer at the given step: one substream per
// square block, consumed row-major within the block.
Matrix generate_noise_matrix(std::size_t rows, std::size_t cols, const PqtConfig& cfg,
                             StreamKey layer_key, std::uint64_t step);

// w + R .* broadcast(absmax * 2^(1 - b_t)), optionally cast to fmt.
Matrix apply_pqn(const Matrix& w, const Matrix& R, const BlockGrid& absmax, const BlockGrid& b_t,
                 const FpFormat* cast_to);

// Samples w_hat for this step, caches it, and returns it.
const Matrix& sample_weights(PqtLayerState& state, const PqtConfig& cfg, std::uint64_t step);

struct PqtGrads {
  Matrix grad_w;
  BlockGrid grad_bt;
  BlockGrid grad_bi;
};

// Identity pass-through for w; per-block bitwidth gradient with R regenerated
// from the forward substream. Throws if the forward cache does not match step.
PqtGrads pqt_backward(const Matrix& grad_what, PqtLayerState& state, const PqtConfig& cfg,
                      std::uint64_t step);

// lambda * sum over layers of mean_blocks |b_t - b_target|; per-grid gradients
// written to *grads when non-null.
double bitwidth_penalty(const std::vector<BlockGrid>& bt_grids, const PqtConfig& cfg,
                        std::vector<BlockGrid>* grads = nullptr);

struct LayerBitwidthStats {
  std::string name;
  double mean = 0.0, stddev = 0.0, min = 0.0, max = 0.0;
};

struct BitwidthReport {
  std::vector<LayerBitwidthStats> layers;
  // Parameter-weighted tier shares, in percent.
  double tier_le5 = 0.0, tier_le9 = 0.0, tier_le12 = 0.0, tier_gt12 = 0.0;
};

BitwidthReport bitwidth_report(const std::vector<const PqtLayerState*>& states,
                               const std::vector<std::string>& names, const PqtConfig& cfg);

}  // namespace pqt
