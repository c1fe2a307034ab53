#pragma once

#include <cmath>
#include <cstdint>

namespace pqt {

// Substream address: (root_seed, layer, step, block) fully determines the
// generated bit stream, so forward and backward of the same training step can
// regenerate identical noise without storing it.
struct StreamKey {
  std::uint64_t root_seed = 0;
  std::uint32_t layer_index = 0;
  std::uint64_t step = 0;
  std::uint64_t block_index = 0;

  bool operator==(const StreamKey&) const = default;
};

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

// splitmix64 finalizer (Steele, Lea, Flood 2014).
inline std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ull;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebull;
  z ^= z >> 31;
  return z;
}

inline std::uint64_t key_state(const StreamKey& k) {
  std::uint64_t h = mix64(k.root_seed + kGolden);
  h = mix64(h ^ (static_cast<std::uint64_t>(k.layer_index) + kGolden));
  h = mix64(h ^ (k.step + kGolden));
  h = mix64(h ^ (k.block_index + kGolden));
  return h;
}

// Counter-based stream: each counter value yields 32 fresh bits, so streams are
// value-like and cheaply copyable. No shared state.
class BitStream {
 public:
  explicit BitStream(const StreamKey& key) : key_(key), state_(key_state(key)) {}

  std::uint32_t next_u32() {
    const std::uint64_t v = mix64(state_ ^ (counter_ * kGolden + kGolden));
    ++counter_;
    return static_cast<std::uint32_t>(v >> 32);
  }

  std::uint64_t counter() const { return counter_; }
  const StreamKey& key() const { return key_; }

 private:
  StreamKey key_;
  std::uint64_t state_;
  std::uint64_t counter_ = 0;
};

// Box-Muller over a BitStream; for initialization and synthetic data, not for
// the PQN noise path (which has its own generators).
class NormalStream {
 public:
  explicit NormalStream(const StreamKey& key) : stream_(key) {}

  double next() {
    if (have_) {
      have_ = false;
      return spare_;
    }
    const double u1 = (static_cast<double>(stream_.next_u32()) + 1.0) * 0x1p-32;
    const double u2 = (static_cast<double>(stream_.next_u32()) + 0.5) * 0x1p-32;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586 * u2;
    spare_ = r * std::sin(a);
    have_ = true;
    return r * std::cos(a);
  }

 private:
  BitStream stream_;
  bool have_ = false;
  double spare_ = 0.0;
};

inline StreamKey derive_layer_key(std::uint64_t root_seed, std::uint32_t layer_index) {
  return StreamKey{root_seed, layer_index, 0, 0};
}

inline StreamKey advance_step(StreamKey key) {
  ++key.step;
  return key;
}

inline StreamKey with_step(StreamKey key, std::uint64_t step) {
  key.step = step;
  return key;
}

inline StreamKey with_block(StreamKey key, std::uint64_t block_index) {
  key.block_index = block_index;
  return key;
}

}  // namespace pqt
