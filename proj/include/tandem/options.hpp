#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <string_view>

#include "tandem/kvs.hpp"
#include "tandem/level_set.hpp"
#include "tandem/status.hpp"

namespace tandem {

struct EngineConfig {
  // Every flush writes versioned and gets never bypass the LSM.
  bool nodirect = false;
  int iterator_workers = 4;  // 1..64
  uint64_t row_cache_bytes = 0;
  bool sync_wal = false;
  // Flush and compaction run only on explicit calls.
  bool deterministic = false;

  uint64_t memtable_bytes = 1 << 20;
  LsmOptions lsm;
  KvsOptions kvs;
  int readahead_workers = 4;

  Status Validate() const;
};

// Parses `key = value` lines; '#' starts a comment. Unknown keys and bad
// values are InvalidArgument.
Status ParseConfig(std::string_view text, EngineConfig* config);
Status LoadConfigFile(const std::string& path, EngineConfig* config);

struct EngineCountersSnapshot {
  uint64_t kvs_value_reads = 0;
  uint64_t sst_block_reads = 0;
  uint64_t bloom_checks = 0;
  uint64_t bloom_false_positives = 0;
  uint64_t renames = 0;
  uint64_t direct_writes = 0;
  uint64_t versioned_writes = 0;
  uint64_t fallback_reads = 0;
  uint64_t puts = 0;
  uint64_t deletes = 0;
  uint64_t gets = 0;
  uint64_t row_cache_hits = 0;
  uint64_t flushes = 0;
  uint64_t compactions = 0;

  uint64_t kvs_value_writes() const { return direct_writes + versioned_writes + renames; }
  EngineCountersSnapshot operator-(const EngineCountersSnapshot& o) const;
  std::string ToJson() const;
};

struct EngineCounters {
  std::atomic<uint64_t> kvs_value_reads{0};
  std::atomic<uint64_t> sst_block_reads{0};
  std::atomic<uint64_t> bloom_checks{0};
  std::atomic<uint64_t> bloom_false_positives{0};
  std::atomic<uint64_t> renames{0};
  std::atomic<uint64_t> direct_writes{0};
  std::atomic<uint64_t> versioned_writes{0};
  std::atomic<uint64_t> fallback_reads{0};
  std::atomic<uint64_t> puts{0};
  std::atomic<uint64_t> deletes{0};
  std::atomic<uint64_t> gets{0};
  std::atomic<uint64_t> row_cache_hits{0};
  std::atomic<uint64_t> flushes{0};
  std::atomic<uint64_t> compactions{0};

  EngineCountersSnapshot Snapshot() const;
};

}  // namespace tandem
