#pragma once

#include <cstdint>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "pqt/pqt_layer.hpp"
#include "pqt/tape.hpp"

namespace pqt {

enum class Task { SyntheticRegression, CharLm };
enum class ModelKind { Mlp, TinyTransformer };
enum class Method { Baseline, GaussWS, DiffQ };

struct ModelConfig {
  Task task = Task::SyntheticRegression;
  ModelKind model = ModelKind::Mlp;
  std::size_t layers = 2;    // transformer blocks / MLP hidden layers
  std::size_t width = 64;    // embedding width / hidden width
  std::size_t heads = 4;
  std::size_t context = 64;
  Method method = Method::Baseline;
  std::set<std::string> apply_set;  // subset of {qkv,out,up,down}; "all" for MLP

  std::size_t steps = 500;
  std::size_t batch = 4;
  double lr = 3e-4;
  std::size_t warmup_steps = 100;
  double weight_decay = 0.1;
  double bi_weight_decay = 0.1;
  std::size_t eval_every = 0;  // 0: only at the end
  std::size_t eval_batches = 16;
  std::string corpus_path;
  bool verify_noise = false;

  PqtConfig pqt;

  // Parses flat "key = value" text; unknown keys are errors.
  static ModelConfig parse_file(const std::string& path);
  static ModelConfig parse_text(const std::string& text, const std::string& origin = "<config>");

  void set_method(const std::string& name);
  void set_apply(const std::string& spec);  // "all", "od", or comma list
  void validate() const;
};

// One linear layer; the weight lives in `state.w` whether or not PQT is
// applied to it.
struct LinearLayer {
  std::string name;
  bool pqt_enabled = false;
  PqtLayerState state;
  Matrix bias;  // 1 x out; empty when absent
  Param w_param, b_param, bi_param;
};

struct NormLayer {
  Matrix gain, bias;  // 1 x d
  Param g_param, b_param;
};

struct TransformerBlock {
  NormLayer ln1, ln2;
  LinearLayer qkv, out, up, down;
};

bool cfg_heads_divides(std::size_t width, std::size_t heads);

class Model {
 public:
  static Model build(const ModelConfig& cfg, std::uint64_t root_seed, std::size_t vocab_size);

  // Binds Param pointers to the tensors. Must be called once the Model sits at
  // its final address; the Model must not be moved afterwards.
  void wire();

  // Forward pass to the task loss node; PQT layers sample at `step`.
  // When `deterministic` is set, PQT layers run with R = 0 (cast only).
  Tape::NodeId forward_char_lm(Tape& tape, const std::vector<int>& tokens,
                               const std::vector<int>& targets, std::size_t batch,
                               std::uint64_t step, bool deterministic);
  Tape::NodeId forward_regression(Tape& tape, const Matrix& x, const Matrix& y,
                                  std::uint64_t step, bool deterministic);

  std::vector<Param*> params();
  std::vector<LinearLayer*> pqt_layers();
  std::vector<LinearLayer*> all_linear_layers();

  // Freezes per-layer absmax grids at the current weights (finite-difference
  // harness support); clear() restores normal operation.
  void freeze_pqt_scales();
  void unfreeze_pqt_scales();

  const ModelConfig& config() const { return cfg_; }
  std::size_t vocab_size() const { return vocab_size_; }

  // Transformer parameters.
  Matrix wte, wpe, head;
  Param wte_param, wpe_param, head_param;
  NormLayer lnf;
  std::vector<TransformerBlock> blocks;

  // MLP parameters.
  std::vector<LinearLayer> mlp_layers;

 private:
  Tape::NodeId linear(Tape& tape, Tape::NodeId input, LinearLayer& layer, std::uint64_t step,
                      bool deterministic);

  ModelConfig cfg_;
  std::size_t vocab_size_ = 0;
};

}  // namespace pqt
