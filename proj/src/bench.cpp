#include "pqt/bench.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <functional>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "pqt/noise.hpp"

namespace pqt {

namespace {

using Generator = std::function<void(std::uint64_t count, StreamKey key)>;

// Runs the generator once over `count` elements split across threads; each
// chunk gets its own block substream so results stay deterministic.
void run_split(const Generator& gen, std::uint64_t count, StreamKey key, std::size_t threads) {
  if (threads <= 1) {
    gen(count, key);
    return;
  }
  const std::uint64_t chunk = (count + threads - 1) / threads;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::uint64_t lo = t * chunk;
    if (lo >= count) break;
    const std::uint64_t n = std::min(chunk, count - lo);
    pool.emplace_back([&gen, n, key, t] { gen(n, with_block(key, t + 1)); });
  }
  for (auto& th : pool) th.join();
}

BenchResult bench_one(const std::string& name, const Generator& gen, std::uint64_t elements,
                      std::size_t iters, std::size_t threads, StreamKey key) {
  run_split(gen, elements, key, threads);  // warm-up, untimed
  std::vector<double> geps;
  geps.reserve(iters);
  for (std::size_t i = 0; i < iters; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    run_split(gen, elements, key, threads);
    const auto t1 = std::chrono::steady_clock::now();
    const double sec = std::chrono::duration<double>(t1 - t0).count();
    geps.push_back(static_cast<double>(elements) / sec / 1e9);
  }
  std::sort(geps.begin(), geps.end());
  BenchResult r;
  r.name = name;
  r.elements = elements;
  r.reps = iters;
  r.min_geps = geps.front();
  r.max_geps = geps.back();
  r.median_geps = iters % 2 ? geps[iters / 2] : 0.5 * (geps[iters / 2 - 1] + geps[iters / 2]);
  return r;
}

}  // namespace

std::vector<BenchResult> bench_noise(std::uint64_t elements, std::size_t iters,
                                     std::size_t threads, std::uint64_t seed) {
  if (elements < (1ull << 16)) throw std::invalid_argument("bench: elements must be >= 2^16");
  if (iters < 5) throw std::invalid_argument("bench: repetitions must be >= 5");
  if (threads < 1) threads = 1;
  const StreamKey key{seed, 0xBE7Cu, 0, 0};
  std::vector<BenchResult> out;
  out.push_back(bench_one(
      "gauss-bitwise", [](std::uint64_t n, StreamKey k) { gen_gauss_bitwise(n, k); }, elements,
      iters, threads, key));
  out.push_back(bench_one(
      "gauss-boxmuller", [](std::uint64_t n, StreamKey k) { gen_gauss_boxmuller(n, k); }, elements,
      iters, threads, key));
  out.push_back(bench_one(
      "uniform", [](std::uint64_t n, StreamKey k) { gen_uniform(n, k); }, elements, iters, threads,
      key));
  return out;
}

void print_bench_table(std::ostream& os, const std::vector<BenchResult>& results) {
  os << "generator          elements      reps  median Ge/s     min Ge/s     max Ge/s\n";
  char buf[160];
  for (const BenchResult& r : results) {
    std::snprintf(buf, sizeof buf, "%-16s %10llu %9zu %12.4f %12.4f %12.4f\n", r.name.c_str(),
                  static_cast<unsigned long long>(r.elements), r.reps, r.median_geps, r.min_geps,
                  r.max_geps);
    os << buf;
  }
}

void write_bench_csv(const std::string& path, const std::vector<BenchResult>& results) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << "generator,elements,reps,median_geps,min_geps,max_geps\n";
  char buf[160];
  for (const BenchResult& r : results) {
    std::snprintf(buf, sizeof buf, "%s,%llu,%zu,%.6f,%.6f,%.6f\n", r.name.c_str(),
                  static_cast<unsigned long long>(r.elements), r.reps, r.median_geps, r.min_geps,
                  r.max_geps);
    out << buf;
  }
}

}  // namespace pqt
