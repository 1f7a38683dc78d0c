#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "tandem/coding.hpp"
#include "tandem/kvs.hpp"

namespace tandem {

using SeqNum = uint64_t;
inline constexpr SeqNum kNoSeq = 0;
inline constexpr SeqNum kMaxSeq = ~SeqNum{0};

// Storage mode of one indexed version.
enum class EntryKind : uint8_t { kDirect = 0, kVersioned = 1, kTombstone = 2 };

inline const char* KindName(EntryKind kind) {
  switch (kind) {
    case EntryKind::kDirect: return "direct";
    case EntryKind::kVersioned: return "versioned";
    case EntryKind::kTombstone: return "tombstone";
  }
  return "?";
}

// One version of a key as indexed by the LSM. Never carries a value.
struct LsmEntry {
  std::string key;
  SeqNum sn = kNoSeq;
  EntryKind kind = EntryKind::kDirect;

  friend bool operator==(const LsmEntry&, const LsmEntry&) = default;
};

// Namespaces inside the shared log store.
inline constexpr char kDirectTag = 'D';
inline constexpr char kVersionedTag = 'V';
inline constexpr char kBlockTag = 'F';
inline constexpr char kSuperTag = 'S';

inline constexpr size_t kMaxUserKeyBytes = kMaxStoreKeyBytes - 9;
inline constexpr size_t kMaxUserValueBytes = kMaxStoreValueBytes - 8;

inline std::string DirectKey(std::string_view user_key) {
  std::string k;
  k.reserve(user_key.size() + 1);
  k.push_back(kDirectTag);
  k.append(user_key);
  return k;
}

inline std::string VersionedKey(std::string_view user_key, SeqNum sn) {
  std::string k;
  k.reserve(user_key.size() + 9);
  k.push_back(kVersionedTag);
  k.append(user_key);
  PutBE64(&k, sn);
  return k;
}

// Direct values carry the sequence number of the version they hold.
inline std::string DirectValue(SeqNum sn, std::string_view value) {
  std::string v;
  v.reserve(value.size() + 8);
  PutBE64(&v, sn);
  v.append(value);
  return v;
}

inline bool ParseDirectValue(std::string_view stored, SeqNum* sn, std::string_view* value) {
  if (stored.size() < 8) return false;
  *sn = DecodeBE64(stored.data());
  *value = stored.substr(8);
  return true;
}

// Splits a store key from one of the value namespaces.
struct ParsedStoreKey {
  char tag = 0;
  std::string_view user_key;
  SeqNum sn = kNoSeq;  // versioned only
};

inline bool ParseStoreKey(std::string_view key, ParsedStoreKey* out) {
  if (key.empty()) return false;
  out->tag = key[0];
  if (out->tag == kDirectTag) {
    out->user_key = key.substr(1);
    out->sn = kNoSeq;
    return !out->user_key.empty();
  }
  if (out->tag == kVersionedTag) {
    if (key.size() < 10) return false;
    out->user_key = key.substr(1, key.size() - 9);
    out->sn = DecodeBE64(key.data() + key.size() - 8);
    return true;
  }
  return false;
}

}  // namespace tandem
