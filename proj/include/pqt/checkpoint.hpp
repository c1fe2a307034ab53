#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace pqt {

// Flat named-tensor container with a small binary on-disk format
// ("PQTC" magic, little-endian payloads).
struct Checkpoint {
  std::map<std::string, std::vector<double>> arrays;
  std::map<std::string, std::string> blobs;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  const std::vector<double>& array(const std::string& name) const;
  const std::string& blob(const std::string& name) const;

  void put_u64(const std::string& name, std::uint64_t v);
  std::uint64_t get_u64(const std::string& name) const;
};

}  // namespace pqt
