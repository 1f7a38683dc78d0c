#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include "tandem/env.hpp"
#include "tandem/status.hpp"

namespace tandem {

inline constexpr size_t kMaxStoreKeyBytes = 1024;
inline constexpr size_t kMaxStoreValueBytes = 1 << 20;

struct KvsOptions {
  uint64_t segment_bytes = 4 << 20;
  // Writes are staged here and reach the Env (one append + sync) when the
  // buffer fills or on Sync(). 0 makes every record its own durable write.
  size_t arrival_buffer_bytes = 64 << 10;
  // A segment is collectable once dead/(live+dead) reaches this fraction.
  double gc_dead_fraction = 0.5;
  // Collect in a background thread whenever a segment is sealed.
  bool background_gc = false;
};

struct KvsStats {
  uint64_t puts = 0;
  uint64_t gets = 0;
  uint64_t deletes = 0;
  uint64_t gc_bytes_moved = 0;
  uint64_t overwrite_hint_misses = 0;
};

struct SegmentInfo {
  uint64_t id = 0;
  uint64_t live_bytes = 0;
  uint64_t dead_bytes = 0;
  bool sealed = false;
};

// Unordered, log-structured key-value store: append-only segments, an
// in-memory hash index holding full keys, and copy-forward garbage
// collection. Segment format:
//   header:  "KVT1" segment_id_be64
//   record:  key_len_be32 val_len_be32 (0xFFFFFFFF = delete) key value crc32c
class LogStore {
 public:
  using Sink = std::function<void(std::string_view key, std::string_view value)>;

  static Result<std::unique_ptr<LogStore>> Open(Env* env, const KvsOptions& options);
  ~LogStore();

  LogStore(const LogStore&) = delete;
  LogStore& operator=(const LogStore&) = delete;

  // overwrite_hint asserts that the key already has a slot in the index.
  // A wrong hint only costs a counter increment.
  Status Put(std::string_view key, std::string_view value, bool overwrite_hint);
  // NotFound when absent.
  Status Get(std::string_view key, std::string* value);
  bool Contains(std::string_view key);
  // Deleting an absent key is a no-op. *existed reports whether it was live.
  Status Delete(std::string_view key, bool* existed = nullptr);
  // Atomically deletes the key if it is live and pred(value) holds.
  Status DeleteIf(std::string_view key, const std::function<bool(std::string_view)>& pred,
                  bool* deleted = nullptr);

  // Emits every live record once, in segment order.
  Result<uint64_t> ScanUnordered(const Sink& sink);

  // Rewrites every collectable segment; returns dead payload bytes dropped.
  Result<uint64_t> Gc();
  Status Sync();
  Status Close();

  KvsStats stats() const;
  std::vector<SegmentInfo> Segments() const;
  size_t live_records() const;

 private:
  struct IndexEntry {
    uint64_t segment = 0;
    uint64_t offset = 0;
    uint32_t record_size = 0;
    bool tombstone = false;
  };
  struct Segment {
    uint64_t size = 0;  // valid bytes including header
    uint64_t live_bytes = 0;
    uint64_t dead_bytes = 0;
    bool sealed = false;
  };
  struct StringHash {
    using is_transparent = void;
    size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
  };
  using Index = std::unordered_map<std::string, IndexEntry, StringHash, std::equal_to<>>;

  LogStore(Env* env, const KvsOptions& options) : env_(env), options_(options) {}

  Status Recover();
  Status StartSegmentLocked(uint64_t id);
  Status AppendRecordLocked(std::string_view key, const std::string_view* value, IndexEntry* out);
  Status FlushBufferLocked();
  Status SealActiveLocked();
  void MarkDeadLocked(const std::string& key, const IndexEntry& e);
  Status ReadRecordLocked(const IndexEntry& e, std::string* value) const;
  Result<std::string> SegmentBytesLocked(uint64_t id) const;
  Result<uint64_t> GcLocked();
  void BackgroundLoop();
  Status CheckOpen() const;

  static std::string SegmentName(uint64_t id);

  Env* env_;
  KvsOptions options_;

  mutable std::shared_mutex mu_;
  bool closed_ = false;
  Index index_;
  std::unordered_map<std::string, uint32_t, StringHash, std::equal_to<>> dead_puts_;
  std::map<uint64_t, Segment> segments_;
  uint64_t active_id_ = 0;
  std::string active_data_;  // full contents of the active segment
  size_t active_flushed_ = 0;
  int scans_in_progress_ = 0;

  std::atomic<uint64_t> puts_{0}, gets_{0}, deletes_{0}, gc_bytes_moved_{0}, hint_misses_{0};

  std::mutex bg_mu_;
  std::condition_variable bg_cv_;
  bool bg_pending_ = false;
  bool bg_stop_ = false;
  std::thread bg_thread_;
};

}  // namespace tandem
