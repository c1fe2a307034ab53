#include "pqt/pqt_layer.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace pqt {

NoiseKind parse_noise_kind(const std::string& name) {
  if (name == "gauss-bitwise") return NoiseKind::GaussBitwise;
  if (name == "gauss-boxmuller") return NoiseKind::GaussBoxmuller;
  if (name == "uniform") return NoiseKind::Uniform;
  if (name == "none") return NoiseKind::None;
  throw std::invalid_argument("unknown noise kind: " + name);
}

const char* noise_kind_name(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::GaussBitwise: return "gauss-bitwise";
    case NoiseKind::GaussBoxmuller: return "gauss-boxmuller";
    case NoiseKind::Uniform: return "uniform";
    case NoiseKind::None: return "none";
  }
  return "?";
}

PqtLayerState PqtLayerState::init(Matrix w, const PqtConfig& cfg, StreamKey layer_key) {
  PqtLayerState s;
  s.b_i = BlockGrid::for_matrix(w.rows(), w.cols(), cfg.b_l, 1.0);
  s.w = std::move(w);
  s.layer_key = layer_key;
  return s;
}

BlockGrid bt_from_bi(const BlockGrid& b_i, const PqtConfig& cfg) {
  BlockGrid bt = b_i;
  for (double& v : bt.values) v = cfg.b_target + v * (cfg.b_init - cfg.b_target);
  return bt;
}

Matrix generate_noise_matrix(std::size_t rows, std::size_t cols, const PqtConfig& cfg,
                             StreamKey layer_key, std::uint64_t step) {
  Matrix R(rows, cols, 0.0);
  if (cfg.noise_kind == NoiseKind::None) return R;
  const std::size_t b_l = cfg.b_l;
  const std::size_t block_rows = ceil_div(rows, b_l);
  const std::size_t block_cols = ceil_div(cols, b_l);
  const StreamKey step_key = with_step(layer_key, step);
  for (std::size_t bi = 0; bi < block_rows; ++bi) {
    for (std::size_t bj = 0; bj < block_cols; ++bj) {
      const std::size_t r0 = bi * b_l, c0 = bj * b_l;
      const std::size_t nr = std::min(b_l, rows - r0), nc = std::min(b_l, cols - c0);
      const std::uint64_t count = nr * nc;
      const StreamKey key = with_block(step_key, bi * block_cols + bj);
      switch (cfg.noise_kind) {
        case NoiseKind::GaussBitwise: {
          const PackedNoise packed = gen_gauss_bitwise(count, key);
          for (std::size_t k = 0; k < count; ++k)
            R.at(r0 + k / nc, c0 + k % nc) = static_cast<double>(packed.symbol(k));
          break;
        }
        case NoiseKind::GaussBoxmuller: {
          const auto symbols = gen_gauss_boxmuller(count, key);
          for (std::size_t k = 0; k < count; ++k)
            R.at(r0 + k / nc, c0 + k % nc) = static_cast<double>(symbols[k]);
          break;
        }
        case NoiseKind::Uniform: {
          const auto vals = gen_uniform(count, key);
          for (std::size_t k = 0; k < count; ++k) R.at(r0 + k / nc, c0 + k % nc) = vals[k];
          break;
        }
        case NoiseKind::None: break;
      }
    }
  }
  return R;
}

Matrix apply_pqn(const Matrix& w, const Matrix& R, const BlockGrid& absmax, const BlockGrid& b_t,
                 const FpFormat* cast_to) {
  if (!w.same_shape(R)) throw std::invalid_argument("apply_pqn: shape mismatch");
  if (!absmax.matches_matrix(w.rows(), w.cols()) || !b_t.matches_matrix(w.rows(), w.cols()))
    throw std::invalid_argument("apply_pqn: grid shape mismatch");
  const std::size_t b_l = absmax.block_size;
  Matrix out(w.rows(), w.cols());
  for (std::size_t i = 0; i < w.rows(); ++i)
    for (std::size_t j = 0; j < w.cols(); ++j) {
      const std::size_t bi = i / b_l, bj = j / b_l;
      const double step_unit = absmax.at(bi, bj) * std::exp2(1.0 - b_t.at(bi, bj));
      const double v = w.at(i, j) + R.at(i, j) * step_unit;
      out.at(i, j) = cast_to ? cast_fp(v, *cast_to) : v;
    }
  return out;
}

const Matrix& sample_weights(PqtLayerState& state, const PqtConfig& cfg, std::uint64_t step) {
  if (!state.b_i.matches_matrix(state.w.rows(), state.w.cols()))
    throw std::invalid_argument("sample_weights: b_i grid does not match weight shape");
  const BlockGrid bt = bt_from_bi(state.b_i, cfg);
  for (double v : bt.values) {
    if (v < 2.0) {
      std::fprintf(stderr, "pqt: warning: block bitwidth b_t = %g < 2\n", v);
      break;
    }
  }
  const BlockGrid absmax =
      state.frozen_absmax ? *state.frozen_absmax : block_absmax(state.w, cfg.b_l);
  Matrix R =
      generate_noise_matrix(state.w.rows(), state.w.cols(), cfg, state.layer_key, step);
  state.w_hat = apply_pqn(state.w, R, absmax, bt, &cfg.operator_format);
  state.cached_step = step;
  state.has_cached = true;
  if (state.verify_noise) state.cached_noise = std::move(R);
  return state.w_hat;
}

PqtGrads pqt_backward(const Matrix& grad_what, PqtLayerState& state, const PqtConfig& cfg,
                      std::uint64_t step) {
  if (!state.has_cached || state.cached_step != step)
    throw std::runtime_error("pqt_backward: no matching forward cache for this step");
  if (!grad_what.same_shape(state.w))
    throw std::invalid_argument("pqt_backward: gradient shape mismatch");

  const Matrix R =
      generate_noise_matrix(state.w.rows(), state.w.cols(), cfg, state.layer_key, step);
  if (state.verify_noise) {
    if (!state.cached_noise.same_shape(R))
      throw std::runtime_error("pqt_backward: noise verification cache missing");
    for (std::size_t i = 0; i < R.size(); ++i)
      if (R.data()[i] != state.cached_noise.data()[i])
        throw std::runtime_error("pqt_backward: regenerated noise differs from forward noise");
  }

  const BlockGrid absmax =
      state.frozen_absmax ? *state.frozen_absmax : block_absmax(state.w, cfg.b_l);
  const BlockGrid bt = bt_from_bi(state.b_i, cfg);

  PqtGrads g;
  g.grad_w = grad_what;  // dL/dw = dL/dw_hat
  g.grad_bt = BlockGrid(bt.block_rows, bt.block_cols, bt.block_size, 0.0);
  const std::size_t b_l = bt.block_size;
  for (std::size_t i = 0; i < state.w.rows(); ++i)
    for (std::size_t j = 0; j < state.w.cols(); ++j)
      g.grad_bt.at(i / b_l, j / b_l) += grad_what.at(i, j) * R.at(i, j);
  constexpr double kLn2 = 0.69314718055994530941723212145818;
  for (std::size_t b = 0; b < g.grad_bt.size(); ++b)
    g.grad_bt.values[b] *= -kLn2 * absmax.values[b] * std::exp2(1.0 - bt.values[b]);

  g.grad_bi = g.grad_bt;
  for (double& v : g.grad_bi.values) v *= (cfg.b_init - cfg.b_target);
  return g;
}

double bitwidth_penalty(const std::vector<BlockGrid>& bt_grids, const PqtConfig& cfg,
                        std::vector<BlockGrid>* grads) {
  if (cfg.lambda < 0.0) throw std::invalid_argument("bitwidth_penalty: lambda must be >= 0");
  if (grads) grads->clear();
  double total = 0.0;
  for (const BlockGrid& bt : bt_grids) {
    const double m = static_cast<double>(bt.size());
    double sum = 0.0;
    for (double v : bt.values) sum += std::fabs(v - cfg.b_target);
    total += sum / m;
    if (grads) {
      BlockGrid g = bt;
      for (double& v : g.values) {
        const double d = v - cfg.b_target;
        v = cfg.lambda * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) / m;
      }
      grads->push_back(std::move(g));
    }
  }
  return cfg.lambda * total;
}

BitwidthReport bitwidth_report(const std::vector<const PqtLayerState*>& states,
                               const std::vector<std::string>& names, const PqtConfig& cfg) {
  BitwidthReport rep;
  double n_le5 = 0, n_le9 = 0, n_le12 = 0, n_gt12 = 0;
  for (std::size_t s = 0; s < states.size(); ++s) {
    const PqtLayerState& st = *states[s];
    const BlockGrid bt = bt_from_bi(st.b_i, cfg);
    LayerBitwidthStats row;
    row.name = s < names.size() ? names[s] : ("layer" + std::to_string(s));
    double sum = 0.0, sumsq = 0.0;
    row.min = bt.values.empty() ? 0.0 : bt.values.front();
    row.max = row.min;
    for (double v : bt.values) {
      sum += v;
      sumsq += v * v;
      row.min = std::min(row.min, v);
      row.max = std::max(row.max, v);
    }
    const double m = static_cast<double>(bt.size());
    row.mean = sum / m;
    const double var = std::max(0.0, sumsq / m - row.mean * row.mean);
    row.stddev = std::sqrt(var);
    rep.layers.push_back(row);

    const std::size_t b_l = bt.block_size;
    for (std::size_t bi = 0; bi < bt.block_rows; ++bi)
      for (std::size_t bj = 0; bj < bt.block_cols; ++bj) {
        const std::size_t nr = std::min(b_l, st.w.rows() - bi * b_l);
        const std::size_t nc = std::min(b_l, st.w.cols() - bj * b_l);
        const double n = static_cast<double>(nr * nc);
        const double v = bt.at(bi, bj);
        if (v <= 5.0)
          n_le5 += n;
        else if (v <= 9.0)
          n_le9 += n;
        else if (v <= 12.0)
          n_le12 += n;
        else
          n_gt12 += n;
      }
  }
  const double total = n_le5 + n_le9 + n_le12 + n_gt12;
  if (total > 0) {
    rep.tier_le5 = 100.0 * n_le5 / total;
    rep.tier_le9 = 100.0 * n_le9 / total;
    rep.tier_le12 = 100.0 * n_le12 / total;
    rep.tier_gt12 = 100.0 * n_gt12 / total;
  }
  return rep;
}

}  // namespace pqt
