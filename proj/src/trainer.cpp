#include "pqt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "pqt/linalg.hpp"

namespace pqt {

namespace {

// Reserved layer-index values for non-layer streams (parameter init uses
// 0xFFFF0001 in model.cpp).
constexpr std::uint32_t kDataLayer = 0xFFFF0002u;
constexpr std::uint32_t kTeacherLayer = 0xFFFF0003u;
constexpr std::uint32_t kEvalLayer = 0xFFFF0004u;
constexpr std::uint64_t kTeacherSeed = 0x5EEDull;
// Sampled-noise evaluation steps live far above any training step.
constexpr std::uint64_t kEvalStepBase = 1ull << 40;

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Teacher {
  Matrix w1{8, 16};
  Matrix w2{16, 1};
};

const Teacher& teacher() {
  static const Teacher t = [] {
    Teacher out;
    NormalStream g(StreamKey{kTeacherSeed, kTeacherLayer, 0, 0});
    for (double& v : out.w1.data()) v = g.next() / std::sqrt(8.0);
    for (double& v : out.w2.data()) v = g.next() / std::sqrt(16.0);
    return out;
  }();
  return t;
}

void regression_batch(NormalStream& g, std::size_t batch, Matrix& x, Matrix& y) {
  x = Matrix(batch, 8);
  for (double& v : x.data()) v = g.next();
  Matrix h = matmul(x, teacher().w1);
  for (double& v : h.data()) v = std::tanh(v);
  y = matmul(h, teacher().w2);
}

void char_train_batch(const CharData& d, std::size_t batch, std::size_t T, BitStream& s,
                      std::vector<int>& toks, std::vector<int>& tgts) {
  if (d.train_len < T + 2) throw std::runtime_error("corpus too small for context length");
  const std::size_t span = d.train_len - T - 1;
  toks.resize(batch * T);
  tgts.resize(batch * T);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t off = s.next_u32() % span;
    for (std::size_t t = 0; t < T; ++t) {
      toks[b * T + t] = d.ids[off + t];
      tgts[b * T + t] = d.ids[off + t + 1];
    }
  }
}

void char_eval_batch(const CharData& d, std::size_t batch, std::size_t T, std::size_t batch_index,
                     std::vector<int>& toks, std::vector<int>& tgts) {
  const std::size_t eval_len = d.ids.size() - d.train_len;
  if (eval_len < T + 2) throw std::runtime_error("empty eval set");
  const std::size_t span = eval_len - T - 1;
  toks.resize(batch * T);
  tgts.resize(batch * T);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t off = d.train_len + ((batch_index * batch + b) * T) % span;
    for (std::size_t t = 0; t < T; ++t) {
      toks[b * T + t] = d.ids[off + t];
      tgts[b * T + t] = d.ids[off + t + 1];
    }
  }
}

struct BtStats {
  bool present = false;
  double mean = 0.0, min = 0.0, max = 0.0;
};

BtStats bt_stats(Model& model) {
  BtStats st;
  double sum = 0.0;
  std::size_t n = 0;
  for (LinearLayer* l : model.pqt_layers()) {
    const BlockGrid bt = bt_from_bi(l->state.b_i, model.config().pqt);
    for (double v : bt.values) {
      if (!st.present) {
        st.min = st.max = v;
        st.present = true;
      }
      st.min = std::min(st.min, v);
      st.max = std::max(st.max, v);
      sum += v;
      ++n;
    }
  }
  if (n) st.mean = sum / static_cast<double>(n);
  return st;
}

void adamw_update(std::vector<Param*>& params, const ModelConfig& cfg, std::size_t step,
                  double lr) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double t = static_cast<double>(step);
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);
  for (Param* p : params) {
    double wd = 0.0;
    if (p->decay == Param::Decay::Weight) wd = cfg.weight_decay;
    else if (p->decay == Param::Decay::Bi) wd = cfg.bi_weight_decay;
    std::vector<double>& x = *p->data;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double g = p->grad[i];
      p->adam_m[i] = b1 * p->adam_m[i] + (1.0 - b1) * g;
      p->adam_v[i] = b2 * p->adam_v[i] + (1.0 - b2) * g * g;
      const double mhat = p->adam_m[i] / c1;
      const double vhat = p->adam_v[i] / c2;
      x[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * x[i]);
    }
  }
}

void add_penalty_grads(Model& model) {
  const PqtConfig& pq = model.config().pqt;
  if (pq.lambda <= 0.0) return;
  std::vector<LinearLayer*> layers = model.pqt_layers();
  if (layers.empty()) return;
  std::vector<BlockGrid> grids;
  grids.reserve(layers.size());
  for (LinearLayer* l : layers) grids.push_back(bt_from_bi(l->state.b_i, pq));
  std::vector<BlockGrid> grads;
  bitwidth_penalty(grids, pq, &grads);
  const double scale = pq.b_init - pq.b_target;  // d b_t / d b_i
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Param& bi = layers[i]->bi_param;
    for (std::size_t j = 0; j < grads[i].values.size(); ++j)
      bi.grad[j] += scale * grads[i].values[j];
  }
}

double current_penalty(Model& model) {
  const PqtConfig& pq = model.config().pqt;
  std::vector<LinearLayer*> layers = model.pqt_layers();
  if (layers.empty()) return 0.0;
  std::vector<BlockGrid> grids;
  for (LinearLayer* l : layers) grids.push_back(bt_from_bi(l->state.b_i, pq));
  return bitwidth_penalty(grids, pq);
}

[[noreturn]] void nan_abort(Model& model, std::size_t step, double loss) {
  std::cerr << "non-finite loss " << loss << " at step " << step << "\n";
  for (LinearLayer* l : model.pqt_layers()) {
    const BlockGrid bt = bt_from_bi(l->state.b_i, model.config().pqt);
    double mn = bt.values.empty() ? 0.0 : bt.values[0], mx = mn, sum = 0.0;
    for (double v : bt.values) {
      mn = std::min(mn, v);
      mx = std::max(mx, v);
      sum += v;
    }
    std::cerr << "  " << l->name << " b_t mean=" << (bt.values.empty() ? 0.0 : sum / bt.size())
              << " min=" << mn << " max=" << mx << "\n";
  }
  throw std::runtime_error("training diverged: non-finite loss at step " + std::to_string(step));
}

}  // namespace

CharData CharData::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("corpus: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

CharData CharData::from_text(const std::string& text) {
  if (text.empty()) throw std::runtime_error("corpus: empty");
  std::set<char> chars(text.begin(), text.end());
  CharData d;
  d.vocab.assign(chars.begin(), chars.end());
  int id_of[256];
  std::fill(std::begin(id_of), std::end(id_of), -1);
  for (std::size_t i = 0; i < d.vocab.size(); ++i)
    id_of[static_cast<unsigned char>(d.vocab[i])] = static_cast<int>(i);
  d.ids.resize(text.size());
  for (std::size_t i = 0; i < text.size(); ++i)
    d.ids[i] = id_of[static_cast<unsigned char>(text[i])];
  d.train_len = text.size() - text.size() / 10;
  return d;
}

double lr_at_step(const ModelConfig& cfg, std::size_t step) {
  if (cfg.warmup_steps > 0 && step <= cfg.warmup_steps)
    return cfg.lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  if (cfg.steps <= cfg.warmup_steps) return cfg.lr;
  const double progress = static_cast<double>(step - cfg.warmup_steps) /
                          static_cast<double>(cfg.steps - cfg.warmup_steps);
  // Cosine decay to 10% of peak.
  return cfg.lr * (0.1 + 0.9 * 0.5 * (1.0 + std::cos(3.141592653589793 * progress)));
}

double evaluate_model(Model& model, const CharData* data, bool deterministic,
                      std::size_t samples) {
  const ModelConfig& cfg = model.config();
  if (samples < 1) throw std::invalid_argument("evaluate_model: samples must be >= 1");
  const std::size_t n_samples = deterministic ? 1 : samples;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t s = 0; s < n_samples; ++s) {
    const std::uint64_t step = kEvalStepBase + s;
    if (cfg.task == Task::CharLm) {
      if (!data) throw std::invalid_argument("evaluate_model: char-lm requires data");
      std::vector<int> toks, tgts;
      for (std::size_t b = 0; b < cfg.eval_batches; ++b) {
        char_eval_batch(*data, cfg.batch, cfg.context, b, toks, tgts);
        Tape tape;
        const auto loss =
            model.forward_char_lm(tape, toks, tgts, cfg.batch, step, deterministic);
        total += tape.value(loss).at(0, 0);
        ++count;
      }
    } else {
      NormalStream g(StreamKey{kTeacherSeed, kEvalLayer, 0, 0});
      Matrix x, y;
      for (std::size_t b = 0; b < cfg.eval_batches; ++b) {
        regression_batch(g, cfg.batch, x, y);
        Tape tape;
        const auto loss = model.forward_regression(tape, x, y, step, deterministic);
        total += tape.value(loss).at(0, 0);
        ++count;
      }
    }
  }
  return total / static_cast<double>(count);
}

Checkpoint snapshot_model(Model& model, std::uint64_t root_seed, std::size_t steps,
                          const CharData* data) {
  Checkpoint ck;
  for (Param* p : model.params()) ck.arrays[p->name] = *p->data;
  for (LinearLayer* l : model.pqt_layers()) {
    const BlockGrid& bi = l->state.b_i;
    ck.arrays[l->name + ".b_i.shape"] = {static_cast<double>(bi.block_rows),
                                         static_cast<double>(bi.block_cols),
                                         static_cast<double>(bi.block_size)};
    ck.arrays[l->name + ".w.shape"] = {static_cast<double>(l->state.w.rows()),
                                       static_cast<double>(l->state.w.cols())};
    ck.put_u64(l->name + ".key.seed", l->state.layer_key.root_seed);
    ck.put_u64(l->name + ".key.layer", l->state.layer_key.layer_index);
  }
  const PqtConfig& pq = model.config().pqt;
  ck.arrays["meta.pqt"] = {pq.b_init, pq.b_target};
  ck.put_u64("meta.seed", root_seed);
  ck.put_u64("meta.steps", steps);
  if (data) ck.blobs["meta.vocab"] = data->vocab;
  return ck;
}

void restore_model(Model& model, const Checkpoint& ck) {
  for (Param* p : model.params()) {
    const std::vector<double>& src = ck.array(p->name);
    if (src.size() != p->data->size())
      throw std::runtime_error("checkpoint: size mismatch for " + p->name);
    *p->data = src;
  }
}

double evaluate_checkpoint(const std::string& ckpt_path, const ModelConfig& cfg,
                           bool deterministic, std::size_t samples) {
  const Checkpoint ck = Checkpoint::load(ckpt_path);
  const std::uint64_t seed = ck.get_u64("meta.seed");
  CharData data;
  const CharData* dptr = nullptr;
  std::size_t vocab = 1;
  if (cfg.task == Task::CharLm) {
    data = CharData::load(cfg.corpus_path);
    if (ck.blobs.count("meta.vocab") && ck.blob("meta.vocab") != data.vocab)
      throw std::runtime_error("checkpoint vocabulary does not match corpus");
    vocab = data.vocab.size();
    dptr = &data;
  }
  Model model = Model::build(cfg, seed, vocab);
  model.wire();
  restore_model(model, ck);
  return evaluate_model(model, dptr, deterministic, samples);
}

void write_bitwidth_csv(Model& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << "layer_name,block_row,block_col,b_t\n";
  for (LinearLayer* l : model.pqt_layers()) {
    const BlockGrid bt = bt_from_bi(l->state.b_i, model.config().pqt);
    for (std::size_t i = 0; i < bt.block_rows; ++i)
      for (std::size_t j = 0; j < bt.block_cols; ++j)
        out << l->name << ',' << i << ',' << j << ',' << fmt_g(bt.at(i, j)) << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

TrainResult train_run(const ModelConfig& cfg, std::uint64_t root_seed,
                      const std::string& out_dir) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);

  CharData data;
  const CharData* dptr = nullptr;
  std::size_t vocab = 1;
  if (cfg.task == Task::CharLm) {
    data = CharData::load(cfg.corpus_path);
    vocab = data.vocab.size();
    dptr = &data;
  }

  Model model = Model::build(cfg, root_seed, vocab);
  model.wire();
  std::vector<Param*> params = model.params();

  TrainResult res;
  res.steps = cfg.steps;
  res.loss_csv_path = out_dir + "/loss.csv";
  res.bitwidth_csv_path = out_dir + "/bitwidth.csv";
  res.checkpoint_path = out_dir + "/model.pqtc";

  std::ofstream csv(res.loss_csv_path, std::ios::binary);
  if (!csv) throw std::runtime_error("cannot open for write: " + res.loss_csv_path);
  csv << "step,tokens,train_loss,eval_loss,lr,penalty,mean_bt,min_bt,max_bt\n";

  BitStream data_stream(StreamKey{root_seed, kDataLayer, 0, 0});
  NormalStream reg_stream(StreamKey{root_seed, kDataLayer, 1, 0});
  std::vector<int> toks, tgts;
  Matrix x, y;
  const std::size_t tokens_per_step =
      cfg.task == Task::CharLm ? cfg.batch * cfg.context : cfg.batch;

  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    for (Param* p : params) p->ensure_state();
    Tape tape;
    Tape::NodeId loss;
    if (cfg.task == Task::CharLm) {
      char_train_batch(data, cfg.batch, cfg.context, data_stream, toks, tgts);
      loss = model.forward_char_lm(tape, toks, tgts, cfg.batch, step, false);
    } else {
      regression_batch(reg_stream, cfg.batch, x, y);
      loss = model.forward_regression(tape, x, y, step, false);
    }
    const double train_loss = tape.value(loss).at(0, 0);
    if (!std::isfinite(train_loss)) nan_abort(model, step, train_loss);
    if (step == 1) res.initial_train_loss = train_loss;
    res.final_train_loss = train_loss;

    tape.backward(loss);
    add_penalty_grads(model);
    const double lr = lr_at_step(cfg, step);
    adamw_update(params, cfg, step, lr);

    const double pen = current_penalty(model);
    const BtStats bt = bt_stats(model);
    std::string eval_cell;
    if ((cfg.eval_every > 0 && step % cfg.eval_every == 0) || step == cfg.steps) {
      res.final_eval_loss = evaluate_model(model, dptr, true, 1);
      eval_cell = fmt_g(res.final_eval_loss);
    }
    csv << step << ',' << step * tokens_per_step << ',' << fmt_g(train_loss) << ',' << eval_cell
        << ',' << fmt_g(lr) << ',' << fmt_g(pen) << ',';
    if (bt.present)
      csv << fmt_g(bt.mean) << ',' << fmt_g(bt.min) << ',' << fmt_g(bt.max) << '\n';
    else
      csv << ",,\n";
  }
  csv.close();
  if (!csv) throw std::runtime_error("write failed: " + res.loss_csv_path);

  write_bitwidth_csv(model, res.bitwidth_csv_path);
  snapshot_model(model, root_seed, cfg.steps, dptr).save(res.checkpoint_path);
  return res;
}

}  // namespace pqt
