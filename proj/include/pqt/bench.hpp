#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace pqt {

struct BenchResult {
  std::string name;
  std::uint64_t elements = 0;
  std::size_t reps = 0;
  double median_geps = 0.0;  // 10^9 elements / second
  double min_geps = 0.0;
  double max_geps = 0.0;
};

// Times each noise generator on `elements` draws, `iters` timed repetitions
// after one warm-up. `threads` splits generation across substreams.
std::vector<BenchResult> bench_noise(std::uint64_t elements, std::size_t iters,
                                     std::size_t threads, std::uint64_t seed);

void print_bench_table(std::ostream& os, const std::vector<BenchResult>& results);
void write_bench_csv(const std::string& path, const std::vector<BenchResult>& results);

}  // namespace pqt
