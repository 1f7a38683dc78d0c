#pragma once

#include <boost/crc.hpp>

#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

namespace tandem {

inline void PutBE32(std::string* dst, uint32_t v) {
  char buf[4];
  for (int i = 3; i >= 0; --i) {
    buf[i] = static_cast<char>(v & 0xff);
    v >>= 8;
  }
  dst->append(buf, 4);
}

inline void PutBE64(std::string* dst, uint64_t v) {
  char buf[8];
  for (int i = 7; i >= 0; --i) {
    buf[i] = static_cast<char>(v & 0xff);
    v >>= 8;
  }
  dst->append(buf, 8);
}

inline void PutBE16(std::string* dst, uint16_t v) {
  dst->push_back(static_cast<char>(v >> 8));
  dst->push_back(static_cast<char>(v & 0xff));
}

inline uint32_t DecodeBE32(const char* p) {
  const auto* u = reinterpret_cast<const unsigned char*>(p);
  return (uint32_t{u[0]} << 24) | (uint32_t{u[1]} << 16) | (uint32_t{u[2]} << 8) | uint32_t{u[3]};
}

inline uint64_t DecodeBE64(const char* p) {
  return (uint64_t{DecodeBE32(p)} << 32) | DecodeBE32(p + 4);
}

inline uint16_t DecodeBE16(const char* p) {
  const auto* u = reinterpret_cast<const unsigned char*>(p);
  return static_cast<uint16_t>((u[0] << 8) | u[1]);
}

inline std::string EncodeBE64(uint64_t v) {
  std::string s;
  PutBE64(&s, v);
  return s;
}

// Cursor over an encoded buffer. Every Get* returns false on underflow and
// leaves the cursor in an unspecified position.
class Decoder {
 public:
  explicit Decoder(std::string_view in) : in_(in) {}

  bool GetU8(uint8_t* v) {
    if (in_.empty()) return false;
    *v = static_cast<uint8_t>(in_[0]);
    in_.remove_prefix(1);
    return true;
  }
  bool GetBE16(uint16_t* v) {
    if (in_.size() < 2) return false;
    *v = DecodeBE16(in_.data());
    in_.remove_prefix(2);
    return true;
  }
  bool GetBE32(uint32_t* v) {
    if (in_.size() < 4) return false;
    *v = DecodeBE32(in_.data());
    in_.remove_prefix(4);
    return true;
  }
  bool GetBE64(uint64_t* v) {
    if (in_.size() < 8) return false;
    *v = DecodeBE64(in_.data());
    in_.remove_prefix(8);
    return true;
  }
  bool GetBytes(size_t n, std::string_view* out) {
    if (in_.size() < n) return false;
    *out = in_.substr(0, n);
    in_.remove_prefix(n);
    return true;
  }
  // u32 length prefix followed by bytes.
  bool GetLengthPrefixed(std::string_view* out) {
    uint32_t n;
    return GetBE32(&n) && GetBytes(n, out);
  }

  bool empty() const { return in_.empty(); }
  size_t remaining() const { return in_.size(); }
  std::string_view rest() const { return in_; }

 private:
  std::string_view in_;
};

inline void PutLengthPrefixed(std::string* dst, std::string_view s) {
  PutBE32(dst, static_cast<uint32_t>(s.size()));
  dst->append(s);
}

// CRC-32C (Castagnoli).
using Crc32cEngine = boost::crc_optimal<32, 0x1EDC6F41, 0xFFFFFFFF, 0xFFFFFFFF, true, true>;

inline uint32_t Crc32c(std::string_view data) {
  Crc32cEngine crc;
  crc.process_bytes(data.data(), data.size());
  return crc.checksum();
}

// 64-bit hash used by Bloom filters. Stable across runs and platforms.
inline uint64_t Hash64(std::string_view data, uint64_t seed = 0x9E3779B97F4A7C15ULL) {
  uint64_t h = seed ^ (data.size() * 0xC6A4A7935BD1E995ULL);
  const char* p = data.data();
  size_t n = data.size();
  while (n >= 8) {
    uint64_t k;
    std::memcpy(&k, p, 8);
    k *= 0xC6A4A7935BD1E995ULL;
    k ^= k >> 47;
    k *= 0xC6A4A7935BD1E995ULL;
    h ^= k;
    h *= 0xC6A4A7935BD1E995ULL;
    p += 8;
    n -= 8;
  }
  uint64_t tail = 0;
  for (size_t i = 0; i < n; ++i) tail |= uint64_t{static_cast<unsigned char>(p[i])} << (8 * i);
  h ^= tail;
  h *= 0xC6A4A7935BD1E995ULL;
  // fmix64
  h ^= h >> 33;
  h *= 0xFF51AFD7ED558CCDULL;
  h ^= h >> 33;
  h *= 0xC4CEB9FE1A85EC53ULL;
  h ^= h >> 33;
  return h;
}

}  // namespace tandem
