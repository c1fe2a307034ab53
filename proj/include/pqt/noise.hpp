#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "pqt/prng.hpp"

namespace pqt {

struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

// Exact target PMF of the bitwise rounded-Gaussian approximation.
struct NoisePmf {
  Rational p_plus2, p_plus1, p_zero, p_minus1, p_minus2;
};

NoisePmf pmf_exact();

// 4-bit sign-mantissa symbols in {-2,-1,0,+1,+2}, 8 per 32-bit word.
// Nibble layout: bit 3 = sign, bits 1..0 = magnitude, bit 2 reserved zero.
class PackedNoise {
 public:
  PackedNoise() = default;
  PackedNoise(std::vector<std::uint32_t> words, std::uint64_t count, StreamKey key);

  static PackedNoise pack(const std::vector<std::int8_t>& symbols, StreamKey key = {});

  std::uint64_t count() const { return count_; }
  const StreamKey& key() const { return key_; }
  const std::vector<std::uint32_t>& words() const { return words_; }

  // Decodes symbol i; sign with magnitude 0 canonicalizes to 0.
  std::int8_t symbol(std::uint64_t i) const {
    const std::uint32_t nib = (words_[i >> 3] >> ((i & 7u) * 4u)) & 0xFu;
    const std::int8_t mag = static_cast<std::int8_t>(nib & 3u);
    return (nib & 8u) ? static_cast<std::int8_t>(-mag) : mag;
  }

  std::vector<std::int8_t> unpack(std::uint64_t start, std::uint64_t len) const;
  std::vector<std::int8_t> unpack_all() const { return unpack(0, count_); }

  // Little-endian words preceded by a 16-byte header: magic "PQN1",
  // u32 version = 1, u64 count.
  void serialize(std::ostream& os) const;
  static PackedNoise deserialize(std::istream& is);

 private:
  std::vector<std::uint32_t> words_;
  std::uint64_t count_ = 0;
  StreamKey key_;
};

// Draws count i.i.d. symbols from pmf_exact() using only bitwise operations on
// PRNG bits; 16 bits per element, two elements per 32-bit draw.
PackedNoise gen_gauss_bitwise(std::uint64_t count, StreamKey key);

// Exact rounded Gaussian floor(N(0,1)/2 + 1/2) via Box-Muller; full support.
std::vector<std::int8_t> gen_gauss_boxmuller(std::uint64_t count, StreamKey key);

// i.i.d. uniforms strictly inside (-0.5, 0.5).
std::vector<double> gen_uniform(std::uint64_t count, StreamKey key);

// Tallies for auditing the generation code paths.
struct NoiseOpCounters {
  std::uint64_t transcendental = 0;
  std::uint64_t divisions = 0;
  void reset() { transcendental = divisions = 0; }
};
NoiseOpCounters& noise_op_counters();

}  // namespace pqt
