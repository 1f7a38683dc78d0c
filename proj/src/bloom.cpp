#include "tandem/bloom.hpp"

#include <algorithm>

namespace tandem {

namespace {

inline uint64_t SecondHash(uint64_t h) { return ((h >> 32) | (h << 32)) | 1; }

}  // namespace

std::string BloomFilterBuilder::Finish() const {
  if (hashes_.empty()) return {};
  uint64_t bits = std::max<uint64_t>(64, hashes_.size() * kBloomBitsPerKey);
  uint64_t bytes = (bits + 7) / 8;
  bits = bytes * 8;
  std::string out(1 + bytes, '\0');
  out[0] = static_cast<char>(kBloomProbes);
  auto* array = reinterpret_cast<unsigned char*>(out.data() + 1);
  for (uint64_t h : hashes_) {
    uint64_t a = h;
    const uint64_t b = SecondHash(h);
    for (int i = 0; i < kBloomProbes; ++i) {
      uint64_t bit = a % bits;
      array[bit / 8] |= static_cast<unsigned char>(1u << (bit % 8));
      a += b;
    }
  }
  return out;
}

bool BloomFilter::MayContain(BloomHash h) const {
  if (data_.size() <= 1) return false;
  const int probes = static_cast<unsigned char>(data_[0]);
  const uint64_t bits = (data_.size() - 1) * 8;
  const auto* array = reinterpret_cast<const unsigned char*>(data_.data() + 1);
  uint64_t a = h.value;
  const uint64_t b = SecondHash(h.value);
  for (int i = 0; i < probes; ++i) {
    uint64_t bit = a % bits;
    if ((array[bit / 8] & (1u << (bit % 8))) == 0) return false;
    a += b;
  }
  return true;
}

}  // namespace tandem
