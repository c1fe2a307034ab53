#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "pqt.h"

namespace {

std::string tmp_dir(const std::string& tag) {
  const auto d = std::filesystem::temp_directory_path() / ("pqt_capi_" + tag);
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d.string();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("capi") {

TEST_CASE("format parse and cast") {
  pqt_format f{};
  CHECK(pqt_format_parse("e8m7", &f) == PQT_OK);
  CHECK(f.exponent_bits == 8);
  CHECK(f.mantissa_bits == 7);
  CHECK(pqt_format_parse("nonsense", &f) == PQT_ERR_INVALID_ARGUMENT);
  CHECK(std::strlen(pqt_last_error()) > 0);
  CHECK(pqt_format_parse(nullptr, &f) == PQT_ERR_INVALID_ARGUMENT);

  pqt_format bf16{8, 7};
  double out = 0.0;
  CHECK(pqt_cast(1.0 + 0x1p-8, bf16, &out) == PQT_OK);
  CHECK(out == 1.0);
  CHECK(pqt_cast(0.0, bf16, nullptr) == PQT_ERR_INVALID_ARGUMENT);

  CHECK(pqt_ulp(1.0, bf16, &out) == PQT_OK);
  CHECK(out == 0x1p-7);
  CHECK(pqt_ulp(0.0, bf16, &out) == PQT_ERR_INVALID_ARGUMENT);

  int bound = 0;
  CHECK(pqt_max_bt_bound(bf16, 0, &bound) == PQT_OK);
  CHECK(bound == 9);

  int we = 0, whe = 0;
  CHECK(pqt_exponent_cutoff(8.0, 0, &we, &whe) == PQT_OK);
  CHECK(we == 4);
  CHECK(whe == 4);
  CHECK(pqt_exponent_cutoff(0.0, 1, &we, &whe) == PQT_ERR_INVALID_ARGUMENT);

  CHECK(pqt_small_w_threshold(1.0, 8.0, 0, bf16, &out) == PQT_OK);
  CHECK(out == 0x1p-13);
}

TEST_CASE("noise handle lifecycle") {
  pqt_noise* n = nullptr;
  REQUIRE(pqt_noise_generate("gauss-bitwise", 1000, 12, 3, 4, &n) == PQT_OK);
  REQUIRE(n != nullptr);
  uint64_t count = 0;
  CHECK(pqt_noise_count(n, &count) == PQT_OK);
  CHECK(count == 1000);
  std::vector<int8_t> syms(1000);
  CHECK(pqt_noise_unpack(n, 0, 1000, syms.data()) == PQT_OK);
  for (int8_t s : syms) CHECK((s >= -2 && s <= 2));
  CHECK(pqt_noise_unpack(n, 990, 20, syms.data()) == PQT_ERR_INVALID_ARGUMENT);

  const std::string d = tmp_dir("noise");
  CHECK(pqt_noise_save(n, (d + "/n.pqn").c_str()) == PQT_OK);
  pqt_noise* back = nullptr;
  REQUIRE(pqt_noise_load((d + "/n.pqn").c_str(), &back) == PQT_OK);
  CHECK(pqt_noise_count(back, &count) == PQT_OK);
  CHECK(count == 1000);
  std::vector<int8_t> syms2(1000);
  CHECK(pqt_noise_unpack(back, 0, 1000, syms2.data()) == PQT_OK);
  CHECK(syms == syms2);
  pqt_noise_free(n);
  pqt_noise_free(back);

  CHECK(pqt_noise_generate("warp-drive", 10, 0, 0, 0, &n) == PQT_ERR_INVALID_ARGUMENT);
  CHECK(pqt_noise_load((d + "/absent.pqn").c_str(), &back) == PQT_ERR_IO);
}

TEST_CASE("train command writes artifacts and honors overrides") {
  const std::string d = tmp_dir("train");
  const std::string cfg_path = d + "/cfg.txt";
  {
    std::ofstream f(cfg_path);
    f << "task = synthetic-regression\nmodel = mlp\nlayers = 2\nwidth = 8\n"
         "method = baseline\nsteps = 40\nbatch = 8\nlr = 3e-3\nwarmup_steps = 10\n"
         "eval_batches = 2\nblock_size = 4\n";
  }
  CHECK(pqt_train(cfg_path.c_str(), 5, (d + "/run_a").c_str(), "gaussws", "all") == PQT_OK);
  CHECK(std::filesystem::exists(d + "/run_a/loss.csv"));
  CHECK(std::filesystem::exists(d + "/run_a/bitwidth.csv"));
  CHECK(std::filesystem::exists(d + "/run_a/model.pqtc"));

  // same invocation twice -> identical bytes
  CHECK(pqt_train(cfg_path.c_str(), 5, (d + "/run_b").c_str(), "gaussws", "all") == PQT_OK);
  CHECK(read_file(d + "/run_a/loss.csv") == read_file(d + "/run_b/loss.csv"));

  CHECK(pqt_train((d + "/missing.cfg").c_str(), 5, d.c_str(), nullptr, nullptr) == PQT_ERR_IO);
  CHECK(pqt_train(cfg_path.c_str(), 5, d.c_str(), "hover", nullptr) ==
        PQT_ERR_INVALID_ARGUMENT);

  // analyze the produced checkpoint
  const std::string csv = d + "/bw.csv";
  CHECK(pqt_analyze_bitwidth((d + "/run_a/model.pqtc").c_str(), csv.c_str()) == PQT_OK);
  const std::string body = read_file(csv);
  CHECK(body.rfind("layer_name,block_row,block_col,b_t\n", 0) == 0);
  CHECK(pqt_analyze_bitwidth((d + "/absent.pqtc").c_str(), nullptr) == PQT_ERR_IO);
}

TEST_CASE("verify and demo commands") {
  CHECK(pqt_verify_lemmas("e8m7", 150, 3) == PQT_OK);
  CHECK(pqt_verify_lemmas("e8m7", 3, 3) == PQT_ERR_INVALID_ARGUMENT);  // too few trials
  CHECK(pqt_demo_consistency(4, 2, 4, 7) == PQT_OK);
  CHECK(pqt_demo_consistency(2, 4, 4, 7) == PQT_ERR_INVALID_ARGUMENT);  // size < block
  CHECK(std::string(pqt_version()).size() > 0);
}

}  // TEST_SUITE
