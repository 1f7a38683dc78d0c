#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tandem/kvs.hpp"
#include "tandem/status.hpp"

namespace tandem {

using ExtentId = uint32_t;

enum class FileKind : uint8_t { kSst = 1, kWal = 2, kManifest = 3 };

inline constexpr size_t BlockSizeFor(FileKind kind) {
  return kind == FileKind::kSst ? 4096 : 32768;
}

// 'F' extent_be32 block_be32
std::string BlockKey(ExtentId extent, uint32_t block);

struct KvfsEdit {
  enum class Tag : uint8_t { kCreate = 0x10, kDelete = 0x11, kSeal = 0x12 };
  Tag tag = Tag::kCreate;
  std::string name;
  ExtentId extent = 0;  // create
  FileKind kind = FileKind::kSst;  // create
  uint64_t length = 0;  // seal
};

// Persists directory edits. Log() returns once the edit is durable.
class MetadataLog {
 public:
  virtual ~MetadataLog() = default;
  virtual Status LogKvfsEdit(const KvfsEdit& edit) = 0;
};

struct KvfsFileInfo {
  std::string name;
  ExtentId extent = 0;
  FileKind kind = FileKind::kSst;
  uint64_t length = 0;
  bool sealed = false;
};

class Kvfs;

// Write-once appender. Full blocks go to the store as soon as they fill;
// the partial tail block is written by Sync() and rewritten in place by
// later syncs.
class KvfsWriter {
 public:
  Status Append(std::string_view data);
  Status Sync();
  uint64_t length() const { return length_; }
  const std::string& name() const { return name_; }
  ExtentId extent() const { return extent_; }

 private:
  friend class Kvfs;
  KvfsWriter(Kvfs* fs, std::string name, ExtentId extent, size_t block_size)
      : fs_(fs), name_(std::move(name)), extent_(extent), block_size_(block_size) {}
  Status PutBlock(uint32_t index, std::string_view data);

  Kvfs* fs_;
  std::string name_;
  ExtentId extent_;
  size_t block_size_;
  uint64_t length_ = 0;
  uint32_t tail_index_ = 0;
  std::string tail_;
  bool tail_written_ = false;
};

struct KvfsOptions {
  int readahead_workers = 4;
};

// Key-value filesystem: each file is one extent of fixed-size blocks stored
// as records in the log store. Extent ids are recycled.
class Kvfs {
 public:
  Kvfs(LogStore* kvs, KvfsOptions options = {}) : kvs_(kvs), options_(options) {}

  void SetMetadataLog(MetadataLog* log) { log_ = log; }

  Result<std::unique_ptr<KvfsWriter>> Create(const std::string& name, FileKind kind);
  // Logs the final length of a file. The writer must have been synced.
  Status Seal(const KvfsWriter& writer);
  Status Delete(const std::string& name);
  std::vector<std::string> List(std::string_view prefix) const;
  Result<KvfsFileInfo> Stat(const std::string& name) const;
  bool Exists(const std::string& name) const;

  Status ReadAt(const std::string& name, uint64_t offset, size_t len, std::string* out) const;
  // Whole-file read with parallel block prefetch.
  Status ReadAll(const std::string& name, std::string* out) const;

  // Writer positioned at the end of a file whose current content is
  // `existing`. Used to keep appending to the manifest after reopen.
  Result<std::unique_ptr<KvfsWriter>> OpenAppender(const std::string& name, std::string_view existing);

  // Registers a file outside the metadata log (the manifest itself).
  Status Adopt(const std::string& name, ExtentId extent, FileKind kind);
  // Removes a file registered with Adopt; no edit is logged.
  Status Forget(const std::string& name);

  // Rebuilds the directory from logged edits.
  void ApplyEdit(const KvfsEdit& edit);
  // After replay: derives unsealed lengths from stored blocks and purges
  // blocks of extents that are not live.
  Status FinishRecovery();
  // Sets an unsealed file's length from the blocks present in the store.
  Status ProbeLength(const std::string& name);

  std::set<ExtentId> free_pool() const;
  ExtentId next_fresh() const;
  std::vector<KvfsFileInfo> Files() const;
  LogStore* kvs() const { return kvs_; }

 private:
  friend class KvfsWriter;
  ExtentId AllocateLocked();
  Status DeleteBlocks(ExtentId extent, uint64_t length, size_t block_size);
  Status ReadBlocks(ExtentId extent, size_t block_size, uint32_t first, uint32_t count,
                    std::vector<std::string>* blocks) const;
  void NoteLength(const std::string& name, uint64_t length);
  bool BlockPreviouslyWritten(ExtentId extent, uint32_t block);

  LogStore* kvs_;
  KvfsOptions options_;
  MetadataLog* log_ = nullptr;

  mutable std::mutex mu_;
  std::map<std::string, KvfsFileInfo> files_;
  std::set<ExtentId> free_;
  ExtentId next_fresh_ = 0;
  // Blocks ever written per extent in this process; drives overwrite hints.
  std::unordered_map<ExtentId, uint32_t> written_blocks_;
};

}  // namespace tandem
