#include "pqt.h"

#include <cstring>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <new>
#include <sstream>
#include <stdexcept>
#include <string>

#include "pqt/bench.hpp"
#include "pqt/checkpoint.hpp"
#include "pqt/fp_format.hpp"
#include "pqt/noise.hpp"
#include "pqt/trainer.hpp"
#include "pqt/verify.hpp"

namespace {

thread_local std::string g_last_error;

pqt_status fail(pqt_status code, const std::string& msg) {
  g_last_error = msg;
  return code;
}

pqt_status classify(const std::exception& e) {
  const std::string msg = e.what();
  if (dynamic_cast<const std::invalid_argument*>(&e) ||
      dynamic_cast<const std::domain_error*>(&e) || dynamic_cast<const std::out_of_range*>(&e))
    return fail(PQT_ERR_INVALID_ARGUMENT, msg);
  if (msg.find("diverged") != std::string::npos || msg.find("non-finite") != std::string::npos)
    return fail(PQT_ERR_NUMERIC, msg);
  for (const char* k : {"open", "read", "write", "truncated", "missing", "corpus", "checkpoint",
                        "magic", "version"})
    if (msg.find(k) != std::string::npos) return fail(PQT_ERR_IO, msg);
  return fail(PQT_ERR_INTERNAL, msg);
}

template <typename Fn>
pqt_status guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const std::bad_alloc&) {
    return fail(PQT_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return classify(e);
  } catch (...) {
    return fail(PQT_ERR_INTERNAL, "unknown error");
  }
}

pqt::FpFormat to_fmt(pqt_format f) { return pqt::FpFormat(f.exponent_bits, f.mantissa_bits); }

}  // namespace

struct pqt_noise {
  pqt::PackedNoise packed;
};

extern "C" {

const char* pqt_last_error(void) { return g_last_error.c_str(); }

const char* pqt_version(void) { return "1.0.0"; }

pqt_status pqt_format_parse(const char* spec, pqt_format* out) {
  return guarded([&]() -> pqt_status {
    if (!spec || !out) return fail(PQT_ERR_INVALID_ARGUMENT, "null argument");
    const pqt::FpFormat f = pqt::FpFormat::parse(spec);
    out->exponent_bits = f.exponent_bits;
    out->mantissa_bits = f.mantissa_bits;
    return PQT_OK;
  });
}

pqt_status pqt_cast(double x, pqt_format fmt, double* out) {
  return guarded([&]() -> pqt_status {
    if (!out) return fail(PQT_ERR_INVALID_ARGUMENT, "null output");
    *out = pqt::cast_fp(x, to_fmt(fmt));
    return PQT_OK;
  });
}

pqt_status pqt_ulp(double x, pqt_format fmt, double* out) {
  return guarded([&]() -> pqt_status {
    if (!out) return fail(PQT_ERR_INVALID_ARGUMENT, "null output");
    *out = pqt::ulp(x, to_fmt(fmt));
    return PQT_OK;
  });
}

pqt_status pqt_max_bt_bound(pqt_format fmt, int tau, int* out) {
  return guarded([&]() -> pqt_status {
    if (!out) return fail(PQT_ERR_INVALID_ARGUMENT, "null output");
    *out = pqt::max_bt_bound(to_fmt(fmt), tau);
    return PQT_OK;
  });
}

pqt_status pqt_exponent_cutoff(double b_t, int tau, int* w_exponent_bits,
                               int* what_exponent_bits) {
  return guarded([&]() -> pqt_status {
    if (!w_exponent_bits || !what_exponent_bits)
      return fail(PQT_ERR_INVALID_ARGUMENT, "null output");
    const pqt::ExponentCutoff c = pqt::exponent_cutoff(b_t, tau);
    *w_exponent_bits = c.w_exponent_bits;
    *what_exponent_bits = c.what_exponent_bits;
    return PQT_OK;
  });
}

pqt_status pqt_small_w_threshold(double max_abs_w, double b_t, int tau, pqt_format fmt,
                                 double* out) {
  return guarded([&]() -> pqt_status {
    if (!out) return fail(PQT_ERR_INVALID_ARGUMENT, "null output");
    *out = pqt::small_w_threshold(max_abs_w, b_t, tau, to_fmt(fmt));
    return PQT_OK;
  });
}

pqt_status pqt_noise_generate(const char* kind, uint64_t count, uint64_t seed, uint32_t layer,
                              uint64_t step, pqt_noise** out) {
  return guarded([&]() -> pqt_status {
    if (!kind || !out) return fail(PQT_ERR_INVALID_ARGUMENT, "null argument");
    if (std::strcmp(kind, "gauss-bitwise") != 0)
      return fail(PQT_ERR_INVALID_ARGUMENT, std::string("unsupported packed kind: ") + kind);
    auto* handle = new pqt_noise{
        pqt::gen_gauss_bitwise(count, pqt::StreamKey{seed, layer, step, 0})};
    *out = handle;
    return PQT_OK;
  });
}

pqt_status pqt_noise_count(const pqt_noise* n, uint64_t* out) {
  if (!n || !out) return fail(PQT_ERR_INVALID_ARGUMENT, "null argument");
  *out = n->packed.count();
  return PQT_OK;
}

pqt_status pqt_noise_unpack(const pqt_noise* n, uint64_t start, uint64_t len, int8_t* out) {
  return guarded([&]() -> pqt_status {
    if (!n || !out) return fail(PQT_ERR_INVALID_ARGUMENT, "null argument");
    const std::vector<std::int8_t> syms = n->packed.unpack(start, len);
    std::memcpy(out, syms.data(), syms.size());
    return PQT_OK;
  });
}

pqt_status pqt_noise_save(const pqt_noise* n, const char* path) {
  return guarded([&]() -> pqt_status {
    if (!n || !path) return fail(PQT_ERR_INVALID_ARGUMENT, "null argument");
    std::ofstream out(path, std::ios::binary);
    if (!out) return fail(PQT_ERR_IO, std::string("cannot open for write: ") + path);
    n->packed.serialize(out);
    if (!out) return fail(PQT_ERR_IO, std::string("write failed: ") + path);
    return PQT_OK;
  });
}

pqt_status pqt_noise_load(const char* path, pqt_noise** out) {
  return guarded([&]() -> pqt_status {
    if (!path || !out) return fail(PQT_ERR_INVALID_ARGUMENT, "null argument");
    std::ifstream in(path, std::ios::binary);
    if (!in) return fail(PQT_ERR_IO, std::string("cannot open: ") + path);
    *out = new pqt_noise{pqt::PackedNoise::deserialize(in)};
    return PQT_OK;
  });
}

void pqt_noise_free(pqt_noise* n) { delete n; }

pqt_status pqt_train(const char* config_path, uint64_t seed, const char* out_dir,
                     const char* method_override, const char* apply_override) {
  return guarded([&]() -> pqt_status {
    if (!config_path || !out_dir) return fail(PQT_ERR_INVALID_ARGUMENT, "null argument");
    pqt::ModelConfig cfg = pqt::ModelConfig::parse_file(config_path);
    if (method_override) cfg.set_method(method_override);
    if (apply_override) cfg.set_apply(apply_override);
    cfg.validate();
    const pqt::TrainResult res = pqt::train_run(cfg, seed, out_dir);
    std::cout << "steps " << res.steps << "  train_loss " << res.final_train_loss
              << "  eval_loss " << res.final_eval_loss << "\n"
              << "wrote " << res.loss_csv_path << ", " << res.bitwidth_csv_path << ", "
              << res.checkpoint_path << "\n";
    return PQT_OK;
  });
}

pqt_status pqt_bench_noise(uint64_t elements, size_t iters, size_t threads, uint64_t seed,
                           const char* out_dir) {
  return guarded([&]() -> pqt_status {
    const auto results = pqt::bench_noise(elements, iters, threads, seed);
    pqt::print_bench_table(std::cout, results);
    if (out_dir) pqt::write_bench_csv(std::string(out_dir) + "/bench.csv", results);
    return PQT_OK;
  });
}

pqt_status pqt_verify_lemmas(const char* format_spec, size_t trials, uint64_t seed) {
  return guarded([&]() -> pqt_status {
    const pqt::FpFormat fmt = pqt::FpFormat::parse(format_spec ? format_spec : "e8m7");
    const pqt::VerifyReport rep = pqt::verify_lemmas(fmt, trials, seed);
    pqt::print_verify_report(std::cout, rep);
    if (!rep.all_pass()) return fail(PQT_ERR_NUMERIC, "one or more claims failed");
    return PQT_OK;
  });
}

pqt_status pqt_demo_consistency(size_t size, size_t block, int int_bits, uint64_t seed) {
  return guarded([&]() -> pqt_status {
    pqt::demo_consistency(std::cout, size, block, int_bits, seed);
    return PQT_OK;
  });
}

pqt_status pqt_analyze_bitwidth(const char* checkpoint_path, const char* out_csv) {
  return guarded([&]() -> pqt_status {
    if (!checkpoint_path) return fail(PQT_ERR_INVALID_ARGUMENT, "null checkpoint path");
    const pqt::Checkpoint ck = pqt::Checkpoint::load(checkpoint_path);
    const std::vector<double>& meta = ck.array("meta.pqt");
    if (meta.size() != 2) return fail(PQT_ERR_IO, "checkpoint: malformed meta.pqt");
    const double b_init = meta[0], b_target = meta[1];

    struct LayerInfo {
      std::string name;
      const std::vector<double>* bi;
      std::size_t brows, bcols, bsize, rows, cols;
    };
    std::vector<LayerInfo> layers;
    for (const auto& [name, values] : ck.arrays) {
      const std::string suffix = ".b_i";
      if (name.size() <= suffix.size() ||
          name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0)
        continue;
      const std::string base = name.substr(0, name.size() - suffix.size());
      const std::vector<double>& shape = ck.array(base + ".b_i.shape");
      const std::vector<double>& wshape = ck.array(base + ".w.shape");
      if (shape.size() != 3 || wshape.size() != 2)
        return fail(PQT_ERR_IO, "checkpoint: malformed shape entry for " + base);
      layers.push_back(LayerInfo{base, &values, static_cast<std::size_t>(shape[0]),
                                 static_cast<std::size_t>(shape[1]),
                                 static_cast<std::size_t>(shape[2]),
                                 static_cast<std::size_t>(wshape[0]),
                                 static_cast<std::size_t>(wshape[1])});
    }
    if (layers.empty()) return fail(PQT_ERR_IO, "checkpoint: no b_i entries found");

    std::ostringstream csv;
    csv << "layer_name,block_row,block_col,b_t\n";
    double n_le5 = 0, n_le9 = 0, n_le12 = 0, n_gt12 = 0;
    char buf[64];
    for (const LayerInfo& l : layers) {
      double sum = 0.0, mn = 0.0, mx = 0.0;
      bool first = true;
      for (std::size_t i = 0; i < l.brows; ++i) {
        for (std::size_t j = 0; j < l.bcols; ++j) {
          const double bi = (*l.bi)[i * l.bcols + j];
          const double bt = b_target + bi * (b_init - b_target);
          std::snprintf(buf, sizeof buf, "%.17g", bt);
          csv << l.name << ',' << i << ',' << j << ',' << buf << '\n';
          const std::size_t nr = std::min(l.bsize, l.rows - i * l.bsize);
          const std::size_t nc = std::min(l.bsize, l.cols - j * l.bsize);
          const double n = static_cast<double>(nr * nc);
          if (bt <= 5.0) n_le5 += n;
          else if (bt <= 9.0) n_le9 += n;
          else if (bt <= 12.0) n_le12 += n;
          else n_gt12 += n;
          sum += bt;
          mn = first ? bt : std::min(mn, bt);
          mx = first ? bt : std::max(mx, bt);
          first = false;
        }
      }
      std::cout << l.name << "  blocks " << l.brows * l.bcols << "  mean b_t "
                << sum / static_cast<double>(l.brows * l.bcols) << "  min " << mn << "  max " << mx
                << "\n";
    }
    const double total = n_le5 + n_le9 + n_le12 + n_gt12;
    std::cout << "tiers (parameter-weighted): <=5: " << 100.0 * n_le5 / total
              << "%  (5,9]: " << 100.0 * n_le9 / total << "%  (9,12]: " << 100.0 * n_le12 / total
              << "%  >12: " << 100.0 * n_gt12 / total << "%\n";
    if (out_csv) {
      std::ofstream f(out_csv, std::ios::binary);
      if (!f) return fail(PQT_ERR_IO, std::string("cannot open for write: ") + out_csv);
      f << csv.str();
      if (!f) return fail(PQT_ERR_IO, std::string("write failed: ") + out_csv);
    } else {
      std::cout << csv.str();
    }
    return PQT_OK;
  });
}

}  // extern "C"
