#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "tandem/env.hpp"
#include "tandem/format.hpp"
#include "tandem/kvfs.hpp"
#include "tandem/kvs.hpp"
#include "tandem/level_set.hpp"
#include "tandem/manifest.hpp"
#include "tandem/memtable.hpp"
#include "tandem/options.hpp"
#include "tandem/row_cache.hpp"
#include "tandem/status.hpp"
#include "tandem/wal.hpp"

namespace tandem {

struct DbOptions {
  EngineConfig config;
  // Storage backing: `env` when set (not owned), else a directory at `path`.
  Env* env = nullptr;
  std::string path;
  bool create_if_missing = true;
};

struct Snapshot {
  SeqNum sn = kNoSeq;
};

struct Checkpoint {
  SeqNum sn = kNoSeq;
  std::string dir;
};

struct RecoveryReport {
  uint64_t wal_records_replayed = 0;
  uint64_t orphans_deleted = 0;
  SeqNum clock_before = kNoSeq;
  SeqNum clock_after = kNoSeq;
  uint64_t checkpoints_reinstalled = 0;
  uint64_t garbage_files_deleted = 0;
  bool created = false;

  std::string ToJson() const;
};

struct BackupReport {
  uint64_t files_copied = 0;
  uint64_t records_copied = 0;
  uint64_t records_skipped = 0;  // sn at or after the checkpoint
  uint64_t trimmed = 0;
  uint64_t filled_in = 0;  // values missed by the scan because of a concurrent rename
};

enum class CommitKind { kFlush, kCompaction };

// One visible version produced by a range read.
struct VisibleEntry {
  std::string key;
  SeqNum sn = kNoSeq;
  EntryKind kind = EntryKind::kDirect;
  std::optional<std::string> mem_value;  // set when the version is still in a memtable
};

class Db {
 public:
  using KV = std::pair<std::string, std::string>;

  static Result<std::unique_ptr<Db>> Open(const DbOptions& options, RecoveryReport* report = nullptr);
  ~Db();

  Db(const Db&) = delete;
  Db& operator=(const Db&) = delete;

  Status Put(std::string_view key, std::string_view value);
  Status Delete(std::string_view key);
  Result<std::optional<std::string>> Get(std::string_view key);
  Result<std::optional<std::string>> GetAt(std::string_view key, Snapshot snapshot);

  Result<Snapshot> CreateSnapshot();
  Status ReleaseSnapshot(Snapshot snapshot);
  std::vector<SeqNum> ActiveSnapshots() const;

  // Keys in [from, to] (to unbounded when nullopt), latest version before
  // the snapshot. workers == 0 uses the configured default.
  Result<std::vector<KV>> IterateAt(std::string_view from, const std::optional<std::string>& to, Snapshot snapshot,
                                    int workers = 0);
  Result<std::vector<KV>> Iterate(std::string_view from, const std::optional<std::string>& to, int workers = 0);

  // Direct writing of version sn is safe at `level`: no active snapshot
  // precedes sn, and no file deeper than `level` (any existing L0 file
  // when level == 0) has the key in its Bloom filter. No I/O.
  bool IsDirectModeSafe(std::string_view key, SeqNum sn, int level) const;

  // Rotates the active memtable and flushes every immutable one, oldest first.
  Status FlushNow();
  // Runs one picked compaction; false when nothing qualifies.
  Result<bool> CompactOnce();
  Status CompactUntilQuiescent();
  // Flushes, then merges every level down into the deepest one.
  Status CompactRange();
  // Background mode: blocks until no flush or compaction is pending.
  Status WaitForIdle();

  // Checkpoints (read-only, persisted snapshot plus a pinned file list).
  Result<Checkpoint> CreateCheckpoint(const std::string& dir);
  Status DropCheckpoint(const Checkpoint& checkpoint);
  std::vector<Checkpoint> Checkpoints() const;
  Result<std::optional<std::string>> CheckpointGet(const Checkpoint& checkpoint, std::string_view key);
  Result<std::vector<KV>> CheckpointIterate(const Checkpoint& checkpoint, std::string_view from,
                                            const std::optional<std::string>& to, int workers = 0);
  // Streams the checkpoint into an empty store on `target`, then opens it.
  Result<std::unique_ptr<Db>> Backup(const Checkpoint& checkpoint, Env* target, const EngineConfig& config,
                                     BackupReport* report = nullptr);

  // Versions visible at the snapshot in [from, to], without values.
  Status VisibleAt(std::string_view from, const std::optional<std::string>& to, Snapshot snapshot,
                   std::vector<VisibleEntry>* out);

  // Invoked after every flush or compaction commit, on the committing thread.
  void SetCommitHook(std::function<void(CommitKind)> hook);

  EngineCountersSnapshot counters() const { return counters_.Snapshot(); }
  SeqNum clock() const { return clock_.load(); }
  std::shared_ptr<const LevelSet> current() const;
  // The current file set followed by every checkpoint's pinned set.
  std::vector<std::shared_ptr<const LevelSet>> PinnedFileSets() const;
  size_t imm_count() const;
  LogStore* kvs() { return kvs_.get(); }
  Kvfs* kvfs() { return kvfs_.get(); }
  const EngineConfig& config() const { return config_; }

  Status SyncWal();
  Status Close();

 private:
  struct Imm {
    std::shared_ptr<Memtable> mem;
    std::shared_ptr<WalWriter> wal;
  };
  struct ReadView {
    std::vector<std::shared_ptr<Memtable>> mems;  // newest first
    std::shared_ptr<const LevelSet> files;
  };
  struct CheckpointRecord {
    Checkpoint handle;
    std::shared_ptr<const LevelSet> files;
  };

  explicit Db(const DbOptions& options);

  Status Recover(RecoveryReport* report);
  Status StartWal(std::shared_ptr<WalWriter>* out);
  Status Write(std::string_view key, MemOp op, std::string_view value);
  Status RotateLocked();
  Status CheckUsable() const;

  ReadView CaptureView() const;
  Result<std::optional<std::string>> GetAtView(const ReadView& view, std::string_view key, SeqNum snapshot);
  Status CollectVisible(const ReadView& view, std::string_view from, const std::optional<std::string>& to,
                        SeqNum snapshot, std::vector<VisibleEntry>* out);
  // Value of a visible version; NotFound if the store has lost it.
  Result<std::string> FetchValue(const VisibleEntry& entry, SeqNum snapshot);
  Result<std::vector<KV>> FetchAll(std::vector<VisibleEntry> entries, SeqNum snapshot, int workers);
  bool SnapshotActive(SeqNum sn) const;
  std::vector<SeqNum> SortedSnapshots() const;

  static bool DirectSafe(const LevelSet& files, const std::vector<SeqNum>& snapshots, std::string_view key,
                         SeqNum sn, int level);
  bool OverwriteHint(std::string_view key);

  // Flush and compaction; callers hold work_mu_.
  Status FlushOldestLocked();
  Status FlushAllLocked();
  Status RunCompactionLocked(const CompactionJob& job);
  Status CompactionDelete(const LsmEntry& e);
  Status InstallFile(uint64_t id, int level, SstFilePtr* out);
  void RetireFiles(const std::vector<SstFilePtr>& files);
  void PurgeObsoleteFiles();
  void NotifyCommit(CommitKind kind);

  void BackgroundLoop();
  void MaybeScheduleWork();

  Status WriteCheckpointList(const std::string& dir, const LevelSet& files);
  Result<std::shared_ptr<const LevelSet>> ReadCheckpointList(const std::string& dir,
                                                              std::map<uint64_t, SstFilePtr>* opened);

  DbOptions options_;
  EngineConfig config_;
  std::unique_ptr<Env> owned_env_;
  Env* env_ = nullptr;
  std::unique_ptr<LogStore> kvs_;
  std::unique_ptr<Kvfs> kvfs_;
  std::unique_ptr<Manifest> manifest_;
  CompactionPicker picker_;
  RowCache row_cache_;
  EngineCounters counters_;

  // Serializes sn assignment, WAL append and memtable insert.
  std::mutex commit_mu_;
  std::atomic<SeqNum> clock_{kNoSeq};
  std::shared_ptr<Memtable> mem_;
  std::shared_ptr<WalWriter> wal_;

  // Guards the published read state.
  mutable std::mutex state_mu_;
  std::deque<Imm> imm_;  // oldest first
  std::shared_ptr<const LevelSet> files_;
  std::vector<std::pair<std::weak_ptr<const SstFile>, uint64_t>> obsolete_;

  mutable std::mutex snap_mu_;
  std::multiset<SeqNum> snapshots_;
  std::map<std::string, CheckpointRecord> checkpoints_;

  // Serializes flushes and compactions.
  std::recursive_mutex work_mu_;
  std::atomic<uint64_t> next_file_{1};
  std::vector<bool> hint_filter_;
  std::function<void(CommitKind)> commit_hook_;

  mutable std::mutex bg_mu_;
  std::condition_variable bg_cv_;
  std::condition_variable idle_cv_;
  bool bg_stop_ = false;
  bool bg_busy_ = false;
  bool bg_kick_ = false;
  Status bg_error_;
  std::thread bg_thread_;

  std::atomic<bool> closed_{false};
};

}  // namespace tandem
