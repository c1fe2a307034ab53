#include "pqt/noise.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace pqt {

NoisePmf pmf_exact() {
  // Pr(|R|=2) = 3/1024; Pr(|R|=1) = (9/32)(1 - 3/1024); the rest is zero.
  NoisePmf p;
  p.p_plus2 = p.p_minus2 = Rational{3, 2048};
  p.p_plus1 = p.p_minus1 = Rational{9189, 65536};
  p.p_zero = Rational{23483, 32768};
  return p;
}

PackedNoise::PackedNoise(std::vector<std::uint32_t> words, std::uint64_t count, StreamKey key)
    : words_(std::move(words)), count_(count), key_(key) {
  if (words_.size() != (count_ + 7) / 8)
    throw std::invalid_argument("PackedNoise: word count does not match element count");
}

PackedNoise PackedNoise::pack(const std::vector<std::int8_t>& symbols, StreamKey key) {
  std::vector<std::uint32_t> words((symbols.size() + 7) / 8, 0u);
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    const int v = symbols[i];
    if (v < -2 || v > 2) throw std::invalid_argument("PackedNoise::pack: symbol out of range");
    const std::uint32_t nib = (v < 0 ? 8u : 0u) | static_cast<std::uint32_t>(v < 0 ? -v : v);
    words[i >> 3] |= nib << ((i & 7u) * 4u);
  }
  return PackedNoise(std::move(words), symbols.size(), key);
}

std::vector<std::int8_t> PackedNoise::unpack(std::uint64_t start, std::uint64_t len) const {
  if (start + len > count_) throw std::out_of_range("PackedNoise::unpack: slice out of range");
  std::vector<std::int8_t> out(len);
  for (std::uint64_t i = 0; i < len; ++i) out[i] = symbol(start + i);
  return out;
}

namespace {
constexpr char kMagic[4] = {'P', 'Q', 'N', '1'};

template <typename T>
void write_le(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!is) throw std::runtime_error("PackedNoise: truncated stream");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
  return v;
}
}  // namespace

void PackedNoise::serialize(std::ostream& os) const {
  os.write(kMagic, 4);
  write_le<std::uint32_t>(os, 1u);
  write_le<std::uint64_t>(os, count_);
  for (std::uint32_t w : words_) write_le<std::uint32_t>(os, w);
}

PackedNoise PackedNoise::deserialize(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("PackedNoise: bad magic");
  const auto version = read_le<std::uint32_t>(is);
  if (version != 1u) throw std::runtime_error("PackedNoise: unsupported version");
  const auto count = read_le<std::uint64_t>(is);
  std::vector<std::uint32_t> words((count + 7) / 8);
  for (auto& w : words) w = read_le<std::uint32_t>(is);
  return PackedNoise(std::move(words), count, StreamKey{});
}

PackedNoise gen_gauss_bitwise(std::uint64_t count, StreamKey key) {
  std::vector<std::uint32_t> words((count + 7) / 8, 0u);
  BitStream stream(key);
  std::uint32_t pending = 0;
  for (std::uint64_t i = 0; i < count; ++i) {
    // 16 bits per element: bit 0 sign, bits 1..10 the |R|=2 event,
    // bits 11..15 the |R|=1 event. No FP math, no division.
    std::uint32_t b;
    if ((i & 1u) == 0) {
      pending = stream.next_u32();
      b = pending & 0xFFFFu;
    } else {
      b = pending >> 16;
    }
    const std::uint32_t m2 = ((b >> 1) | (b >> 2)) & (b >> 3) & (b >> 4) & (b >> 5) & (b >> 6) &
                             (b >> 7) & (b >> 8) & (b >> 9) & (b >> 10) & 1u;
    const std::uint32_t m1 = ((b >> 11) | (b >> 12)) & ((b >> 13) | (b >> 14)) & (b >> 15) & 1u;
    const std::uint32_t mag = (m2 << 1) | (m1 & ~m2);
    const std::uint32_t nib = ((b & 1u) << 3) | mag;
    words[i >> 3] |= nib << ((i & 7u) * 4u);
  }
  return PackedNoise(std::move(words), count, key);
}

std::vector<std::int8_t> gen_gauss_boxmuller(std::uint64_t count, StreamKey key) {
  std::vector<std::int8_t> out(count);
  BitStream stream(key);
  auto& ctr = noise_op_counters();
  constexpr double kInv32 = 0x1p-32;
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  for (std::uint64_t i = 0; i < count; i += 2) {
    const double u1 = (static_cast<double>(stream.next_u32()) + 1.0) * kInv32;  // (0, 1]
    const double u2 = (static_cast<double>(stream.next_u32()) + 0.5) * kInv32;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double z0 = r * std::cos(kTwoPi * u2);
    ctr.transcendental += 3;  // sqrt, log, cos
    out[i] = static_cast<std::int8_t>(std::lrint(0.5 * z0));
    if (i + 1 < count) {
      const double z1 = r * std::sin(kTwoPi * u2);
      ctr.transcendental += 1;
      out[i + 1] = static_cast<std::int8_t>(std::lrint(0.5 * z1));
    }
  }
  return out;
}

std::vector<double> gen_uniform(std::uint64_t count, StreamKey key) {
  std::vector<double> out(count);
  BitStream stream(key);
  constexpr double kInv32 = 0x1p-32;
  for (std::uint64_t i = 0; i < count; ++i)
    out[i] = (static_cast<double>(stream.next_u32()) + 0.5) * kInv32 - 0.5;
  return out;
}

NoiseOpCounters& noise_op_counters() {
  thread_local NoiseOpCounters counters;
  return counters;
}

}  // namespace pqt
