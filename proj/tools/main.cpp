// Command-line front end; talks to the library exclusively through the C API.
#include <cstdint>
#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "pqt.h"

namespace {

int report(pqt_status st) {
  if (st == PQT_OK) return 0;
  std::fprintf(stderr, "error: %s\n", pqt_last_error());
  return static_cast<int>(st);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pseudo-quantization training toolkit"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::string out_dir = ".";
  std::size_t threads = 1;
  app.add_option("--seed", seed, "root RNG seed")->capture_default_str();
  app.add_option("--out-dir", out_dir, "output directory")->capture_default_str();
  app.add_option("--threads", threads, "worker threads where supported")->capture_default_str();

  // train
  auto* train = app.add_subcommand("train", "run a training job from a config file");
  std::string config_path, method_override, apply_override;
  train->add_option("--config", config_path, "flat key = value config file")->required();
  train->add_option("--method", method_override, "override: baseline|gaussws|diffq");
  train->add_option("--apply", apply_override, "override: all|od|comma list of qkv,out,up,down");

  // bench-noise
  auto* bench = app.add_subcommand("bench-noise", "noise-generator throughput benchmark");
  std::uint64_t elements = 1ull << 24;
  std::size_t iters = 9;
  bench->add_option("--elements", elements, "elements per repetition (>= 2^16)")
      ->capture_default_str();
  bench->add_option("--iters", iters, "timed repetitions (>= 5)")->capture_default_str();

  // verify-lemmas
  auto* verify = app.add_subcommand("verify-lemmas", "run the numeric property suite");
  std::string format_spec = "e8m7";
  std::size_t trials = 1000;
  verify->add_option("--format", format_spec, "operator format, e.g. e8m7")
      ->capture_default_str();
  verify->add_option("--trials", trials, "trials per property (>= 100)")->capture_default_str();

  // demo-consistency
  auto* demo = app.add_subcommand("demo-consistency",
                                  "print quantization transpose-consistency panels");
  std::size_t size = 4, block = 2;
  int int_bits = 4;
  demo->add_option("--size", size, "matrix size")->capture_default_str();
  demo->add_option("--block", block, "vector/block length")->capture_default_str();
  demo->add_option("--int-bits", int_bits, "integer bitwidth")->capture_default_str();

  // analyze-bitwidth
  auto* analyze = app.add_subcommand("analyze-bitwidth",
                                     "bitwidth CSV and tier summary from a checkpoint");
  std::string ckpt_path, out_csv;
  analyze->add_option("--checkpoint", ckpt_path, "model.pqtc path")->required();
  analyze->add_option("--csv", out_csv, "output CSV path (default: stdout)");

  CLI11_PARSE(app, argc, argv);

  if (train->parsed())
    return report(pqt_train(config_path.c_str(), seed, out_dir.c_str(),
                            method_override.empty() ? nullptr : method_override.c_str(),
                            apply_override.empty() ? nullptr : apply_override.c_str()));
  if (bench->parsed())
    return report(pqt_bench_noise(elements, iters, threads, seed, out_dir.c_str()));
  if (verify->parsed()) return report(pqt_verify_lemmas(format_spec.c_str(), trials, seed));
  if (demo->parsed()) return report(pqt_demo_consistency(size, block, int_bits, seed));
  if (analyze->parsed())
    return report(
        pqt_analyze_bitwidth(ckpt_path.c_str(), out_csv.empty() ? nullptr : out_csv.c_str()));
  return 1;
}
