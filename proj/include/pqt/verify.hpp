#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "pqt/fp_format.hpp"

namespace pqt {

struct VerifyClaim {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct VerifyReport {
  std::vector<VerifyClaim> claims;
  bool all_pass() const {
    for (const auto& c : claims)
      if (!c.pass) return false;
    return true;
  }
};

// Property suite over the cast, the underflow bound, the exponent-cutoff
// table, and the sub-threshold masking frequency. trials >= 100.
VerifyReport verify_lemmas(const FpFormat& fmt, std::size_t trials, std::uint64_t seed);

void print_verify_report(std::ostream& os, const VerifyReport& report);

// Prints original / row-quantized / column-quantized / discrepancy panels and
// the square-block zero-discrepancy panel for a seeded Gaussian matrix.
void demo_consistency(std::ostream& os, std::size_t size, std::size_t block, int int_bits,
                      std::uint64_t seed);

}  // namespace pqt
