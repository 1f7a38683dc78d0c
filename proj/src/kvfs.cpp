#include "tandem/kvfs.hpp"

#include <algorithm>
#include <thread>

#include "tandem/coding.hpp"

namespace tandem {

std::string BlockKey(ExtentId extent, uint32_t block) {
  std::string key;
  key.reserve(9);
  key.push_back('F');
  PutBE32(&key, extent);
  PutBE32(&key, block);
  return key;
}

// ---------------------------------------------------------------------------
// KvfsWriter

Status KvfsWriter::PutBlock(uint32_t index, std::string_view data) {
  bool hint = fs_->BlockPreviouslyWritten(extent_, index);
  return fs_->kvs_->Put(BlockKey(extent_, index), data, hint);
}

Status KvfsWriter::Append(std::string_view data) {
  tail_.append(data);
  length_ += data.size();
  size_t consumed = 0;
  while (tail_.size() - consumed >= block_size_) {
    TANDEM_RETURN_IF_ERROR(PutBlock(tail_index_, std::string_view(tail_).substr(consumed, block_size_)));
    consumed += block_size_;
    ++tail_index_;
    tail_written_ = false;
  }
  if (consumed > 0) tail_.erase(0, consumed);
  return Status::OK();
}

Status KvfsWriter::Sync() {
  if (!tail_.empty()) {
    TANDEM_RETURN_IF_ERROR(PutBlock(tail_index_, tail_));
    tail_written_ = true;
  }
  TANDEM_RETURN_IF_ERROR(fs_->kvs_->Sync());
  fs_->NoteLength(name_, length_);
  return Status::OK();
}

// ---------------------------------------------------------------------------
// Kvfs

bool Kvfs::BlockPreviouslyWritten(ExtentId extent, uint32_t block) {
  std::lock_guard lock(mu_);
  uint32_t& n = written_blocks_[extent];
  bool seen = block < n;
  n = std::max(n, block + 1);
  return seen;
}

ExtentId Kvfs::AllocateLocked() {
  if (!free_.empty()) {
    ExtentId id = *free_.begin();
    free_.erase(free_.begin());
    return id;
  }
  return next_fresh_++;
}

Result<std::unique_ptr<KvfsWriter>> Kvfs::Create(const std::string& name, FileKind kind) {
  ExtentId extent;
  {
    std::lock_guard lock(mu_);
    if (files_.count(name)) return Status::AlreadyExists(name);
    extent = AllocateLocked();
    files_[name] = KvfsFileInfo{name, extent, kind, 0, false};
  }
  if (log_) {
    Status s = log_->LogKvfsEdit(KvfsEdit{KvfsEdit::Tag::kCreate, name, extent, kind, 0});
    if (!s.ok()) {
      std::lock_guard lock(mu_);
      files_.erase(name);
      free_.insert(extent);
      return s;
    }
  }
  return std::unique_ptr<KvfsWriter>(new KvfsWriter(this, name, extent, BlockSizeFor(kind)));
}

Status Kvfs::Seal(const KvfsWriter& writer) {
  {
    std::lock_guard lock(mu_);
    auto it = files_.find(writer.name());
    if (it == files_.end()) return Status::NotFound(writer.name());
    it->second.length = writer.length();
    it->second.sealed = true;
  }
  if (!log_) return Status::OK();
  KvfsEdit edit;
  edit.tag = KvfsEdit::Tag::kSeal;
  edit.name = writer.name();
  edit.length = writer.length();
  return log_->LogKvfsEdit(edit);
}

Status Kvfs::Delete(const std::string& name) {
  KvfsFileInfo info;
  {
    std::lock_guard lock(mu_);
    auto it = files_.find(name);
    if (it == files_.end()) return Status::NotFound(name);
    info = it->second;
    files_.erase(it);
  }
  if (log_) {
    KvfsEdit edit;
    edit.tag = KvfsEdit::Tag::kDelete;
    edit.name = name;
    TANDEM_RETURN_IF_ERROR(log_->LogKvfsEdit(edit));
  }
  TANDEM_RETURN_IF_ERROR(DeleteBlocks(info.extent, info.length, BlockSizeFor(info.kind)));
  std::lock_guard lock(mu_);
  free_.insert(info.extent);
  return Status::OK();
}

Status Kvfs::DeleteBlocks(ExtentId extent, uint64_t length, size_t block_size) {
  // Highest block first, so an interrupted delete leaves a prefix behind
  // that FinishRecovery can find by probing from block 0.
  uint32_t blocks = static_cast<uint32_t>((length + block_size - 1) / block_size);
  // The tail block may exist beyond the recorded length if a sync raced the
  // last length update; probe one past.
  while (kvs_->Contains(BlockKey(extent, blocks))) ++blocks;
  for (uint32_t i = blocks; i-- > 0;) {
    TANDEM_RETURN_IF_ERROR(kvs_->Delete(BlockKey(extent, i)));
  }
  return Status::OK();
}

std::vector<std::string> Kvfs::List(std::string_view prefix) const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (auto it = files_.lower_bound(std::string(prefix)); it != files_.end(); ++it) {
    if (it->first.compare(0, prefix.size(), prefix) != 0) break;
    out.push_back(it->first);
  }
  return out;
}

Result<KvfsFileInfo> Kvfs::Stat(const std::string& name) const {
  std::lock_guard lock(mu_);
  auto it = files_.find(name);
  if (it == files_.end()) return Status::NotFound(name);
  return it->second;
}

bool Kvfs::Exists(const std::string& name) const {
  std::lock_guard lock(mu_);
  return files_.count(name) > 0;
}

void Kvfs::NoteLength(const std::string& name, uint64_t length) {
  std::lock_guard lock(mu_);
  auto it = files_.find(name);
  if (it != files_.end() && !it->second.sealed) it->second.length = length;
}

Status Kvfs::ReadBlocks(ExtentId extent, size_t block_size, uint32_t first, uint32_t count,
                        std::vector<std::string>* blocks) const {
  blocks->assign(count, std::string());
  auto fetch = [&](uint32_t i) { return kvs_->Get(BlockKey(extent, first + i), &(*blocks)[i]); };
  int workers = std::min<int>(options_.readahead_workers, static_cast<int>(count / 4));
  if (workers <= 1) {
    for (uint32_t i = 0; i < count; ++i) {
      Status s = fetch(i);
      if (!s.ok()) return s.IsNotFound() ? Status::Corruption("missing block") : s;
    }
    return Status::OK();
  }
  std::vector<Status> results(workers);
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      for (uint32_t i = w; i < count; i += workers) {
        Status s = fetch(i);
        if (!s.ok()) {
          results[w] = s.IsNotFound() ? Status::Corruption("missing block") : s;
          return;
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  for (const Status& s : results) TANDEM_RETURN_IF_ERROR(s);
  (void)block_size;
  return Status::OK();
}

Status Kvfs::ReadAt(const std::string& name, uint64_t offset, size_t len, std::string* out) const {
  TANDEM_ASSIGN_OR_RETURN(KvfsFileInfo info, Stat(name));
  if (offset + len > info.length) return Status::OutOfRange(name);
  out->clear();
  if (len == 0) return Status::OK();
  const size_t bs = BlockSizeFor(info.kind);
  uint32_t first = static_cast<uint32_t>(offset / bs);
  uint32_t last = static_cast<uint32_t>((offset + len - 1) / bs);
  std::vector<std::string> blocks;
  TANDEM_RETURN_IF_ERROR(ReadBlocks(info.extent, bs, first, last - first + 1, &blocks));
  out->reserve(len);
  uint64_t pos = offset;
  for (uint32_t b = first; b <= last; ++b) {
    const std::string& block = blocks[b - first];
    uint64_t block_start = uint64_t{b} * bs;
    uint64_t from = pos - block_start;
    uint64_t take = std::min<uint64_t>(offset + len - pos, bs - from);
    if (from + take > block.size()) return Status::Corruption("short block in " + name);
    out->append(block, from, take);
    pos += take;
  }
  return Status::OK();
}

Status Kvfs::ReadAll(const std::string& name, std::string* out) const {
  TANDEM_ASSIGN_OR_RETURN(KvfsFileInfo info, Stat(name));
  return ReadAt(name, 0, info.length, out);
}

Result<std::unique_ptr<KvfsWriter>> Kvfs::OpenAppender(const std::string& name, std::string_view existing) {
  TANDEM_ASSIGN_OR_RETURN(KvfsFileInfo info, Stat(name));
  const size_t bs = BlockSizeFor(info.kind);
  std::unique_ptr<KvfsWriter> w(new KvfsWriter(this, name, info.extent, bs));
  w->length_ = existing.size();
  w->tail_index_ = static_cast<uint32_t>(existing.size() / bs);
  w->tail_ = std::string(existing.substr(size_t{w->tail_index_} * bs));
  {
    std::lock_guard lock(mu_);
    uint32_t& n = written_blocks_[info.extent];
    n = std::max<uint32_t>(n, static_cast<uint32_t>((existing.size() + bs - 1) / bs));
    files_[name].length = existing.size();
  }
  return w;
}

Status Kvfs::Adopt(const std::string& name, ExtentId extent, FileKind kind) {
  std::lock_guard lock(mu_);
  if (files_.count(name)) return Status::AlreadyExists(name);
  files_[name] = KvfsFileInfo{name, extent, kind, 0, false};
  free_.erase(extent);
  for (ExtentId id = next_fresh_; id < extent; ++id) free_.insert(id);
  next_fresh_ = std::max(next_fresh_, extent + 1);
  return Status::OK();
}

Status Kvfs::Forget(const std::string& name) {
  KvfsFileInfo info;
  {
    std::lock_guard lock(mu_);
    auto it = files_.find(name);
    if (it == files_.end()) return Status::NotFound(name);
    info = it->second;
    files_.erase(it);
  }
  TANDEM_RETURN_IF_ERROR(DeleteBlocks(info.extent, info.length, BlockSizeFor(info.kind)));
  std::lock_guard lock(mu_);
  free_.insert(info.extent);
  return Status::OK();
}

void Kvfs::ApplyEdit(const KvfsEdit& edit) {
  std::lock_guard lock(mu_);
  switch (edit.tag) {
    case KvfsEdit::Tag::kCreate:
      files_[edit.name] = KvfsFileInfo{edit.name, edit.extent, edit.kind, 0, false};
      free_.erase(edit.extent);
      for (ExtentId id = next_fresh_; id < edit.extent; ++id) free_.insert(id);
      next_fresh_ = std::max(next_fresh_, edit.extent + 1);
      break;
    case KvfsEdit::Tag::kDelete: {
      auto it = files_.find(edit.name);
      if (it != files_.end()) {
        free_.insert(it->second.extent);
        files_.erase(it);
      }
      break;
    }
    case KvfsEdit::Tag::kSeal: {
      auto it = files_.find(edit.name);
      if (it != files_.end()) {
        it->second.length = edit.length;
        it->second.sealed = true;
      }
      break;
    }
  }
}

Status Kvfs::FinishRecovery() {
  std::vector<std::pair<std::string, KvfsFileInfo>> unsealed;
  std::vector<ExtentId> free;
  {
    std::lock_guard lock(mu_);
    for (const auto& [name, info] : files_) {
      if (!info.sealed) unsealed.emplace_back(name, info);
    }
    free.assign(free_.begin(), free_.end());
  }
  for (auto& [name, info] : unsealed) TANDEM_RETURN_IF_ERROR(ProbeLength(name));
  for (ExtentId extent : free) {
    uint32_t blocks = 0;
    while (kvs_->Contains(BlockKey(extent, blocks))) ++blocks;
    for (uint32_t i = blocks; i-- > 0;) TANDEM_RETURN_IF_ERROR(kvs_->Delete(BlockKey(extent, i)));
  }
  return Status::OK();
}

Status Kvfs::ProbeLength(const std::string& name) {
  TANDEM_ASSIGN_OR_RETURN(KvfsFileInfo info, Stat(name));
  const size_t bs = BlockSizeFor(info.kind);
  uint64_t length = 0;
  std::string block;
  for (uint32_t b = 0;; ++b) {
    Status s = kvs_->Get(BlockKey(info.extent, b), &block);
    if (s.IsNotFound()) break;
    TANDEM_RETURN_IF_ERROR(s);
    length += block.size();
    if (block.size() < bs) break;
  }
  std::lock_guard lock(mu_);
  files_[name].length = length;
  return Status::OK();
}

std::set<ExtentId> Kvfs::free_pool() const {
  std::lock_guard lock(mu_);
  return free_;
}

ExtentId Kvfs::next_fresh() const {
  std::lock_guard lock(mu_);
  return next_fresh_;
}

std::vector<KvfsFileInfo> Kvfs::Files() const {
  std::lock_guard lock(mu_);
  std::vector<KvfsFileInfo> out;
  for (const auto& [name, info] : files_) out.push_back(info);
  return out;
}

}  // namespace tandem
