#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tandem/coding.hpp"

namespace tandem {

// Hash of a key, computed once and probed against any number of filters.
struct BloomHash {
  uint64_t value = 0;

  static BloomHash Of(std::string_view key) { return BloomHash{Hash64(key)}; }
};

inline constexpr int kBloomBitsPerKey = 10;
inline constexpr int kBloomProbes = 7;

class BloomFilterBuilder {
 public:
  void Add(BloomHash h) { hashes_.push_back(h.value); }
  size_t size() const { return hashes_.size(); }
  // Layout: probes_u8 followed by the bit array. Empty string when no keys.
  std::string Finish() const;

 private:
  std::vector<uint64_t> hashes_;
};

class BloomFilter {
 public:
  BloomFilter() = default;
  explicit BloomFilter(std::string data) : data_(std::move(data)) {}

  bool MayContain(BloomHash h) const;
  bool empty() const { return data_.size() <= 1; }
  const std::string& data() const { return data_; }

 private:
  std::string data_;
};

}  // namespace tandem
