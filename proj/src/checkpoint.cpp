#include "pqt/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace pqt {

namespace {

constexpr char kMagic[4] = {'P', 'Q', 'T', 'C'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_name(std::ostream& out, const std::string& name) {
  write_u32(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
}

std::string read_name(std::istream& in) {
  const std::uint32_t len = read_u32(in);
  if (len > (1u << 20)) throw std::runtime_error("checkpoint: unreasonable name length");
  std::string name(len, '\0');
  in.read(name.data(), len);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return name;
}

}  // namespace

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open for write: " + path);
  out.write(kMagic, 4);
  write_u32(out, kVersion);
  write_u32(out, static_cast<std::uint32_t>(arrays.size()));
  write_u32(out, static_cast<std::uint32_t>(blobs.size()));
  for (const auto& [name, values] : arrays) {
    write_name(out, name);
    write_u64(out, values.size());
    for (double v : values) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, 8);
      write_u64(out, bits);
    }
  }
  for (const auto& [name, bytes] : blobs) {
    write_name(out, name);
    write_u64(out, bytes.size());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic: " + path);
  const std::uint32_t version = read_u32(in);
  if (version != kVersion) throw std::runtime_error("checkpoint: unsupported version");
  const std::uint32_t n_arrays = read_u32(in);
  const std::uint32_t n_blobs = read_u32(in);
  Checkpoint ck;
  for (std::uint32_t i = 0; i < n_arrays; ++i) {
    std::string name = read_name(in);
    const std::uint64_t count = read_u64(in);
    std::vector<double> values(count);
    for (std::uint64_t k = 0; k < count; ++k) {
      const std::uint64_t bits = read_u64(in);
      double v;
      std::memcpy(&v, &bits, 8);
      values[k] = v;
    }
    ck.arrays.emplace(std::move(name), std::move(values));
  }
  for (std::uint32_t i = 0; i < n_blobs; ++i) {
    std::string name = read_name(in);
    const std::uint64_t count = read_u64(in);
    std::string bytes(count, '\0');
    in.read(bytes.data(), static_cast<std::streamsize>(count));
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    ck.blobs.emplace(std::move(name), std::move(bytes));
  }
  return ck;
}

const std::vector<double>& Checkpoint::array(const std::string& name) const {
  auto it = arrays.find(name);
  if (it == arrays.end()) throw std::runtime_error("checkpoint: missing array: " + name);
  return it->second;
}

const std::string& Checkpoint::blob(const std::string& name) const {
  auto it = blobs.find(name);
  if (it == blobs.end()) throw std::runtime_error("checkpoint: missing blob: " + name);
  return it->second;
}

void Checkpoint::put_u64(const std::string& name, std::uint64_t v) {
  std::string bytes(8, '\0');
  for (int i = 0; i < 8; ++i) bytes[static_cast<std::size_t>(i)] = static_cast<char>(v >> (8 * i));
  blobs[name] = bytes;
}

std::uint64_t Checkpoint::get_u64(const std::string& name) const {
  const std::string& bytes = blob(name);
  if (bytes.size() != 8) throw std::runtime_error("checkpoint: bad u64 blob: " + name);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[static_cast<std::size_t>(i)]))
         << (8 * i);
  return v;
}

}  // namespace pqt
