#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pqt/checkpoint.hpp"
#include "pqt/model.hpp"

namespace pqt {

// Character corpus split 90/10 into train/eval id streams.
struct CharData {
  std::vector<int> ids;
  std::string vocab;          // sorted unique bytes
  std::size_t train_len = 0;  // ids[0, train_len) train, rest eval

  static CharData load(const std::string& path);
  static CharData from_text(const std::string& text);
};

struct TrainResult {
  double initial_train_loss = 0.0;
  double final_train_loss = 0.0;
  double final_eval_loss = 0.0;
  std::size_t steps = 0;
  std::string loss_csv_path, bitwidth_csv_path, checkpoint_path;
};

// Full training run; writes loss.csv, bitwidth.csv, model.pqtc under out_dir.
// Deterministic given (cfg, root_seed). Throws on NaN loss after dumping
// per-layer bitwidth diagnostics to stderr.
TrainResult train_run(const ModelConfig& cfg, std::uint64_t root_seed, const std::string& out_dir);

// Forward-only mean loss over the held-out slice. deterministic=true runs PQT
// layers with R = 0; otherwise averages `samples` sampled-noise passes.
double evaluate_model(Model& model, const CharData* data, bool deterministic = true,
                      std::size_t samples = 1);

// Rebuilds the model recorded in the checkpoint and evaluates it.
double evaluate_checkpoint(const std::string& ckpt_path, const ModelConfig& cfg,
                           bool deterministic = true, std::size_t samples = 1);

// Checkpoint <-> model tensor transfer (by parameter name).
Checkpoint snapshot_model(Model& model, std::uint64_t root_seed, std::size_t steps,
                          const CharData* data);
void restore_model(Model& model, const Checkpoint& ck);

// Writes layer_name,block_row,block_col,b_t rows for every PQT layer.
void write_bitwidth_csv(Model& model, const std::string& path);

double lr_at_step(const ModelConfig& cfg, std::size_t step);

}  // namespace pqt
