#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "tandem/format.hpp"

namespace tandem {

enum class MemOp : uint8_t { kPut = 0, kDelete = 1 };

struct MemEntry {
  SeqNum sn = kNoSeq;
  MemOp op = MemOp::kPut;
  std::string value;
};

// Sorted write buffer. Holds values until flushed. Within a key, versions
// are kept in ascending sn order; inserts must carry increasing sns.
class Memtable {
 public:
  explicit Memtable(uint64_t wal_number = 0) : wal_number_(wal_number) {}

  void Insert(std::string_view key, SeqNum sn, MemOp op, std::string_view value);

  // Newest version of the key.
  std::optional<MemEntry> Get(std::string_view key) const;
  // Newest version with entry.sn < sn.
  std::optional<MemEntry> GetBefore(std::string_view key, SeqNum sn) const;

  // Visits keys in [from, to] ascending; `versions` is ascending by sn.
  void VisitRange(std::string_view from, const std::optional<std::string>& to,
                  const std::function<void(const std::string& key, const std::vector<MemEntry>& versions)>& fn) const;
  void VisitAll(const std::function<void(const std::string& key, const std::vector<MemEntry>& versions)>& fn) const {
    VisitRange({}, std::nullopt, fn);
  }

  size_t ApproximateBytes() const { return bytes_.load(std::memory_order_relaxed); }
  size_t entry_count() const;
  bool empty() const { return entry_count() == 0; }
  SeqNum max_sn() const;
  uint64_t wal_number() const { return wal_number_; }

 private:
  uint64_t wal_number_;
  mutable std::shared_mutex mu_;
  std::map<std::string, std::vector<MemEntry>, std::less<>> table_;
  size_t entries_ = 0;
  SeqNum max_sn_ = kNoSeq;
  std::atomic<size_t> bytes_{0};
};

}  // namespace tandem
