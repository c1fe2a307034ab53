#include "pqt/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace pqt {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

using NormalGen = NormalStream;

void fill_normal(Matrix& m, NormalGen& gen, double std) {
  for (double& v : m.data()) v = gen.next() * std;
}

Param make_param(const std::string& name, std::vector<double>* data, std::size_t rows,
                 std::size_t cols, Param::Decay decay) {
  Param p;
  p.name = name;
  p.data = data;
  p.rows = rows;
  p.cols = cols;
  p.decay = decay;
  return p;
}

}  // namespace

ModelConfig ModelConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str(), path);
}

ModelConfig ModelConfig::parse_text(const std::string& text, const std::string& origin) {
  ModelConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "task") {
        if (value == "synthetic-regression") cfg.task = Task::SyntheticRegression;
        else if (value == "char-lm") cfg.task = Task::CharLm;
        else throw std::invalid_argument("unknown task: " + value);
      } else if (key == "model") {
        if (value == "mlp") cfg.model = ModelKind::Mlp;
        else if (value == "tiny-transformer") cfg.model = ModelKind::TinyTransformer;
        else throw std::invalid_argument("unknown model: " + value);
      } else if (key == "layers") cfg.layers = std::stoul(value);
      else if (key == "width") cfg.width = std::stoul(value);
      else if (key == "heads") cfg.heads = std::stoul(value);
      else if (key == "context") cfg.context = std::stoul(value);
      else if (key == "method") cfg.set_method(value);
      else if (key == "apply") cfg.set_apply(value);
      else if (key == "steps") cfg.steps = std::stoul(value);
      else if (key == "batch") cfg.batch = std::stoul(value);
      else if (key == "lr") cfg.lr = std::stod(value);
      else if (key == "warmup_steps") cfg.warmup_steps = std::stoul(value);
      else if (key == "weight_decay") cfg.weight_decay = std::stod(value);
      else if (key == "bi_weight_decay") cfg.bi_weight_decay = std::stod(value);
      else if (key == "eval_every") cfg.eval_every = std::stoul(value);
      else if (key == "eval_batches") cfg.eval_batches = std::stoul(value);
      else if (key == "corpus") cfg.corpus_path = value;
      else if (key == "verify_noise") cfg.verify_noise = (value == "1" || value == "true");
      else if (key == "b_init") cfg.pqt.b_init = std::stod(value);
      else if (key == "b_target") cfg.pqt.b_target = std::stod(value);
      else if (key == "lambda") cfg.pqt.lambda = std::stod(value);
      else if (key == "block_size") cfg.pqt.b_l = std::stoul(value);
      else if (key == "noise") cfg.pqt.noise_kind = parse_noise_kind(value);
      else if (key == "operator_format") cfg.pqt.operator_format = FpFormat::parse(value);
      else throw std::invalid_argument("unknown key: " + key);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

void ModelConfig::set_method(const std::string& name) {
  if (name == "baseline") method = Method::Baseline;
  else if (name == "gaussws") method = Method::GaussWS;
  else if (name == "diffq") method = Method::DiffQ;
  else throw std::invalid_argument("unknown method: " + name);
  if (method == Method::DiffQ) pqt.noise_kind = NoiseKind::Uniform;
}

void ModelConfig::set_apply(const std::string& spec) {
  apply_set.clear();
  if (spec == "all") {
    apply_set.insert("all");
    return;
  }
  if (spec == "od") {  // shorthand for out,down
    apply_set.insert("out");
    apply_set.insert("down");
    return;
  }
  std::istringstream ss(spec);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part = trim(part);
    if (part.empty()) continue;
    if (part != "qkv" && part != "out" && part != "up" && part != "down")
      throw std::invalid_argument("unknown apply part: " + part);
    apply_set.insert(part);
  }
  if (apply_set.empty()) throw std::invalid_argument("empty apply set");
}

void ModelConfig::validate() const {
  if (method != Method::Baseline && apply_set.empty())
    throw std::invalid_argument("config: apply set must be nonempty when method != baseline");
  if (!(pqt.b_init >= pqt.b_target) || !(pqt.b_target > 0.0))
    throw std::invalid_argument("config: requires b_init >= b_target > 0");
  if (model == ModelKind::TinyTransformer && cfg_heads_divides(width, heads) == false)
    throw std::invalid_argument("config: heads must divide width");
  if (task == Task::CharLm && corpus_path.empty())
    throw std::invalid_argument("config: char-lm task requires corpus");
  if (batch < 1 || steps < 1) throw std::invalid_argument("config: batch and steps must be >= 1");
}

bool cfg_heads_divides(std::size_t width, std::size_t heads) {
  return heads >= 1 && width % heads == 0;
}

namespace {

bool layer_applies(const ModelConfig& cfg, const std::string& role) {
  if (cfg.method == Method::Baseline) return false;
  return cfg.apply_set.count("all") > 0 || cfg.apply_set.count(role) > 0;
}

LinearLayer make_linear(const std::string& name, const std::string& role, std::size_t in,
                        std::size_t out, bool with_bias, const ModelConfig& cfg,
                        std::uint64_t root_seed, std::uint32_t& layer_counter, NormalGen& gen) {
  LinearLayer l;
  l.name = name;
  Matrix w(in, out);
  fill_normal(w, gen, 0.02);
  l.pqt_enabled = layer_applies(cfg, role);
  l.state = PqtLayerState::init(std::move(w), cfg.pqt, derive_layer_key(root_seed, layer_counter));
  l.state.verify_noise = cfg.verify_noise;
  ++layer_counter;
  if (with_bias) l.bias = Matrix(1, out, 0.0);
  return l;
}

void wire_linear(LinearLayer& l) {
  l.w_param = make_param(l.name + ".w", &l.state.w.data(), l.state.w.rows(), l.state.w.cols(),
                         Param::Decay::Weight);
  if (l.bias.size() > 0)
    l.b_param = make_param(l.name + ".b", &l.bias.data(), 1, l.bias.cols(), Param::Decay::None);
  l.bi_param = make_param(l.name + ".b_i", &l.state.b_i.values, l.state.b_i.block_rows,
                          l.state.b_i.block_cols, Param::Decay::Bi);
}

NormLayer make_norm(std::size_t d) {
  NormLayer n;
  n.gain = Matrix(1, d, 1.0);
  n.bias = Matrix(1, d, 0.0);
  return n;
}

void wire_norm(NormLayer& n, const std::string& name) {
  n.g_param = make_param(name + ".g", &n.gain.data(), 1, n.gain.cols(), Param::Decay::None);
  n.b_param = make_param(name + ".b", &n.bias.data(), 1, n.bias.cols(), Param::Decay::None);
}

}  // namespace

Model Model::build(const ModelConfig& cfg, std::uint64_t root_seed, std::size_t vocab_size) {
  Model m;
  m.cfg_ = cfg;
  m.vocab_size_ = vocab_size;
  // Initialization stream is independent of method/apply so that all methods
  // share the same starting point under a fixed seed.
  NormalGen gen(StreamKey{root_seed, 0xFFFF0001u, 0, 0});
  std::uint32_t layer_counter = 0;

  if (cfg.model == ModelKind::Mlp) {
    const std::size_t in_dim = 8, out_dim = 1;
    std::size_t prev = in_dim;
    for (std::size_t i = 0; i < cfg.layers; ++i) {
      const std::string name = "fc" + std::to_string(i);
      m.mlp_layers.push_back(make_linear(name, "all", prev, cfg.width, true, cfg, root_seed,
                                         layer_counter, gen));
      prev = cfg.width;
    }
    m.mlp_layers.push_back(
        make_linear("head", "all", prev, out_dim, true, cfg, root_seed, layer_counter, gen));
    // Scale MLP inits by fan-in for a sane starting loss.
    for (auto& l : m.mlp_layers) {
      const double s = 1.0 / std::sqrt(static_cast<double>(l.state.w.rows()));
      for (double& v : l.state.w.data()) v *= s / 0.02;
    }
  } else {
    const std::size_t d = cfg.width;
    m.wte = Matrix(vocab_size, d);
    m.wpe = Matrix(cfg.context, d);
    m.head = Matrix(d, vocab_size);
    fill_normal(m.wte, gen, 0.02);
    fill_normal(m.wpe, gen, 0.02);
    fill_normal(m.head, gen, 0.02);
    m.lnf = make_norm(d);
    for (std::size_t b = 0; b < cfg.layers; ++b) {
      const std::string prefix = "blk" + std::to_string(b) + ".";
      TransformerBlock blk;
      blk.ln1 = make_norm(d);
      blk.ln2 = make_norm(d);
      blk.qkv = make_linear(prefix + "qkv", "qkv", d, 3 * d, true, cfg, root_seed, layer_counter,
                            gen);
      blk.out = make_linear(prefix + "out", "out", d, d, true, cfg, root_seed, layer_counter, gen);
      blk.up = make_linear(prefix + "up", "up", d, 4 * d, true, cfg, root_seed, layer_counter, gen);
      blk.down = make_linear(prefix + "down", "down", 4 * d, d, true, cfg, root_seed,
                             layer_counter, gen);
      m.blocks.push_back(std::move(blk));
    }
  }
  return m;
}

void Model::wire() {
  if (cfg_.model == ModelKind::Mlp) {
    for (auto& l : mlp_layers) wire_linear(l);
  } else {
    wte_param = make_param("wte", &wte.data(), wte.rows(), wte.cols(), Param::Decay::None);
    wpe_param = make_param("wpe", &wpe.data(), wpe.rows(), wpe.cols(), Param::Decay::None);
    head_param = make_param("head", &head.data(), head.rows(), head.cols(), Param::Decay::Weight);
    wire_norm(lnf, "lnf");
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const std::string prefix = "blk" + std::to_string(b) + ".";
      wire_norm(blocks[b].ln1, prefix + "ln1");
      wire_norm(blocks[b].ln2, prefix + "ln2");
      wire_linear(blocks[b].qkv);
      wire_linear(blocks[b].out);
      wire_linear(blocks[b].up);
      wire_linear(blocks[b].down);
    }
  }
}

Tape::NodeId Model::linear(Tape& tape, Tape::NodeId input, LinearLayer& layer, std::uint64_t step,
                           bool deterministic) {
  Tape::NodeId w;
  if (layer.pqt_enabled && !deterministic) {
    w = tape.pqt_weight(layer.state, cfg_.pqt, step, layer.w_param, layer.bi_param);
  } else if (layer.pqt_enabled) {
    // Deterministic evaluation: R = 0, so w_hat = cast(w).
    Matrix w_hat = layer.state.w;
    for (double& v : w_hat.data()) v = cast_fp(v, cfg_.pqt.operator_format);
    w = tape.constant(std::move(w_hat));
  } else {
    w = tape.param(layer.w_param);
  }
  Tape::NodeId y = tape.matmul(input, w);
  if (layer.bias.size() > 0) y = tape.add_bias(y, tape.param(layer.b_param));
  return y;
}

Tape::NodeId Model::forward_char_lm(Tape& tape, const std::vector<int>& tokens,
                                    const std::vector<int>& targets, std::size_t batch,
                                    std::uint64_t step, bool deterministic) {
  const std::size_t T = cfg_.context;
  if (tokens.size() != batch * T || targets.size() != tokens.size())
    throw std::invalid_argument("forward_char_lm: batch shape mismatch");
  Tape::NodeId tok = tape.embedding(wte_param, tokens);
  std::vector<int> pos_ids(tokens.size());
  for (std::size_t i = 0; i < pos_ids.size(); ++i) pos_ids[i] = static_cast<int>(i % T);
  Tape::NodeId pos = tape.embedding(wpe_param, pos_ids);
  Tape::NodeId x = tape.add(tok, pos);
  for (auto& blk : blocks) {
    Tape::NodeId h = tape.layernorm(x, tape.param(blk.ln1.g_param), tape.param(blk.ln1.b_param));
    h = linear(tape, h, blk.qkv, step, deterministic);
    h = tape.causal_attention(h, cfg_.heads, batch, T);
    h = linear(tape, h, blk.out, step, deterministic);
    x = tape.add(x, h);
    h = tape.layernorm(x, tape.param(blk.ln2.g_param), tape.param(blk.ln2.b_param));
    h = linear(tape, h, blk.up, step, deterministic);
    h = tape.gelu(h);
    h = linear(tape, h, blk.down, step, deterministic);
    x = tape.add(x, h);
  }
  x = tape.layernorm(x, tape.param(lnf.g_param), tape.param(lnf.b_param));
  Tape::NodeId logits = tape.matmul(x, tape.param(head_param));
  return tape.cross_entropy(logits, targets);
}

Tape::NodeId Model::forward_regression(Tape& tape, const Matrix& x, const Matrix& y,
                                       std::uint64_t step, bool deterministic) {
  Tape::NodeId h = tape.constant(x);
  for (std::size_t i = 0; i + 1 < mlp_layers.size(); ++i) {
    h = linear(tape, h, mlp_layers[i], step, deterministic);
    h = tape.tanh_act(h);
  }
  h = linear(tape, h, mlp_layers.back(), step, deterministic);
  return tape.mse(h, y);
}

std::vector<Param*> Model::params() {
  std::vector<Param*> out;
  auto add_linear = [&](LinearLayer& l) {
    out.push_back(&l.w_param);
    if (l.bias.size() > 0) out.push_back(&l.b_param);
    if (l.pqt_enabled) out.push_back(&l.bi_param);
  };
  if (cfg_.model == ModelKind::Mlp) {
    for (auto& l : mlp_layers) add_linear(l);
  } else {
    out.push_back(&wte_param);
    out.push_back(&wpe_param);
    for (auto& blk : blocks) {
      out.push_back(&blk.ln1.g_param);
      out.push_back(&blk.ln1.b_param);
      add_linear(blk.qkv);
      add_linear(blk.out);
      out.push_back(&blk.ln2.g_param);
      out.push_back(&blk.ln2.b_param);
      add_linear(blk.up);
      add_linear(blk.down);
    }
    out.push_back(&lnf.g_param);
    out.push_back(&lnf.b_param);
    out.push_back(&head_param);
  }
  return out;
}

std::vector<LinearLayer*> Model::all_linear_layers() {
  std::vector<LinearLayer*> out;
  if (cfg_.model == ModelKind::Mlp) {
    for (auto& l : mlp_layers) out.push_back(&l);
  } else {
    for (auto& blk : blocks) {
      out.push_back(&blk.qkv);
      out.push_back(&blk.out);
      out.push_back(&blk.up);
      out.push_back(&blk.down);
    }
  }
  return out;
}

std::vector<LinearLayer*> Model::pqt_layers() {
  std::vector<LinearLayer*> out;
  for (LinearLayer* l : all_linear_layers())
    if (l->pqt_enabled) out.push_back(l);
  return out;
}

void Model::freeze_pqt_scales() {
  for (LinearLayer* l : pqt_layers())
    l->state.frozen_absmax = block_absmax(l->state.w, cfg_.pqt.b_l);
}

void Model::unfreeze_pqt_scales() {
  for (LinearLayer* l : pqt_layers()) l->state.frozen_absmax.reset();
}

}  // namespace pqt
