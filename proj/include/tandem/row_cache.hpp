#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <list>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>

#include "tandem/coding.hpp"
#include "tandem/format.hpp"

namespace tandem {

// LRU cache of the newest version of user keys. A cached entry with no
// value records a deletion.
class RowCache {
 public:
  struct Entry {
    SeqNum sn = kNoSeq;
    std::optional<std::string> value;
  };

  explicit RowCache(uint64_t capacity_bytes) : capacity_(capacity_bytes) {}

  bool enabled() const { return capacity_ > 0; }

  std::optional<Entry> Lookup(std::string_view key);

  // Write-through from the commit path. Caller holds the commit lock, so
  // sns arrive in increasing order per key.
  void OnWrite(std::string_view key, SeqNum sn, std::optional<std::string_view> value);

  // Fill after a read that started when the clock was `read_start`. Skipped
  // if any write to a key of the same stripe committed after read_start, or
  // if the cache already holds a version at least as new.
  void Fill(std::string_view key, SeqNum read_start, const Entry& found);

  uint64_t bytes() const;
  size_t size() const;

 private:
  static constexpr size_t kStripes = 4096;
  using Lru = std::list<std::string>;
  struct Slot {
    Entry entry;
    Lru::iterator lru;
  };

  static size_t StripeOf(std::string_view key) { return Hash64(key) % kStripes; }
  static uint64_t Cost(std::string_view key, const Entry& e) {
    return key.size() + (e.value ? e.value->size() : 0) + 64;
  }
  void InsertLocked(std::string_view key, Entry entry);
  void EvictLocked();

  uint64_t capacity_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, Slot> map_;
  Lru lru_;  // front = most recent
  uint64_t bytes_ = 0;
  std::array<std::atomic<SeqNum>, kStripes> last_write_{};
};

}  // namespace tandem
