#include "tandem/kvs.hpp"

#include <algorithm>
#include <cstdio>

#include "tandem/coding.hpp"

namespace tandem {

namespace {

constexpr char kSegmentMagic[4] = {'K', 'V', 'T', '1'};
constexpr size_t kSegmentHeaderBytes = 12;
constexpr uint32_t kDeleteMarker = 0xFFFFFFFFu;
constexpr size_t kRecordOverhead = 4 + 4 + 4;

struct ParsedRecord {
  std::string_view key;
  std::string_view value;
  bool tombstone = false;
  uint32_t size = 0;
};

// Parses the record at `offset`. Returns false for a torn or corrupt record.
// `verify_crc` may be false only for bytes already checked on open or written
// by this process.
bool ParseRecord(std::string_view seg, uint64_t offset, ParsedRecord* rec, bool verify_crc = true) {
  if (offset + 8 > seg.size()) return false;
  const char* p = seg.data() + offset;
  uint32_t key_len = DecodeBE32(p);
  uint32_t val_len = DecodeBE32(p + 4);
  bool tombstone = val_len == kDeleteMarker;
  uint64_t payload = uint64_t{key_len} + (tombstone ? 0 : val_len);
  if (key_len == 0 || key_len > kMaxStoreKeyBytes) return false;
  if (!tombstone && val_len > kMaxStoreValueBytes) return false;
  uint64_t size = kRecordOverhead + payload;
  if (offset + size > seg.size()) return false;
  uint32_t stored_crc = DecodeBE32(p + size - 4);
  if (verify_crc && Crc32c(std::string_view(p, size - 4)) != stored_crc) return false;
  rec->key = std::string_view(p + 8, key_len);
  rec->value = tombstone ? std::string_view() : std::string_view(p + 8 + key_len, val_len);
  rec->tombstone = tombstone;
  rec->size = static_cast<uint32_t>(size);
  return true;
}

void EncodeRecord(std::string* dst, std::string_view key, const std::string_view* value) {
  size_t start = dst->size();
  PutBE32(dst, static_cast<uint32_t>(key.size()));
  PutBE32(dst, value ? static_cast<uint32_t>(value->size()) : kDeleteMarker);
  dst->append(key);
  if (value) dst->append(*value);
  PutBE32(dst, Crc32c(std::string_view(dst->data() + start, dst->size() - start)));
}

}  // namespace

std::string LogStore::SegmentName(uint64_t id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "segment-%016llx", static_cast<unsigned long long>(id));
  return buf;
}

Result<std::unique_ptr<LogStore>> LogStore::Open(Env* env, const KvsOptions& options) {
  if (options.segment_bytes < 1024) return Status::InvalidArgument("segment_bytes too small");
  std::unique_ptr<LogStore> store(new LogStore(env, options));
  TANDEM_RETURN_IF_ERROR(store->Recover());
  if (options.background_gc) {
    store->bg_thread_ = std::thread([s = store.get()] { s->BackgroundLoop(); });
  }
  return store;
}

LogStore::~LogStore() { (void)Close(); }

Status LogStore::CheckOpen() const {
  return closed_ ? Status::Closed("store closed") : Status::OK();
}

Status LogStore::Recover() {
  std::vector<std::pair<uint64_t, std::string>> files;
  for (const std::string& name : env_->List()) {
    unsigned long long id;
    char tail;
    if (std::sscanf(name.c_str(), "segment-%16llx%c", &id, &tail) == 1) files.emplace_back(id, name);
  }
  std::sort(files.begin(), files.end());

  uint64_t max_id = 0;
  for (const auto& [id, name] : files) {
    max_id = std::max(max_id, id);
    std::string data;
    TANDEM_RETURN_IF_ERROR(env_->ReadAll(name, &data));
    if (data.size() < kSegmentHeaderBytes || std::string_view(data.data(), 4) != std::string_view(kSegmentMagic, 4) ||
        DecodeBE64(data.data() + 4) != id) {
      // Torn header: the segment never held a durable record.
      TANDEM_RETURN_IF_ERROR(env_->Delete(name));
      continue;
    }
    Segment& seg = segments_[id];
    seg.sealed = true;
    uint64_t offset = kSegmentHeaderBytes;
    ParsedRecord rec;
    while (ParseRecord(data, offset, &rec)) {
      auto it = index_.find(rec.key);
      if (it != index_.end()) {
        MarkDeadLocked(it->first, it->second);
        it->second = IndexEntry{id, offset, rec.size, rec.tombstone};
      } else {
        index_.emplace(std::string(rec.key), IndexEntry{id, offset, rec.size, rec.tombstone});
      }
      seg.live_bytes += rec.size;
      offset += rec.size;
    }
    seg.size = offset;
  }
  return StartSegmentLocked(max_id + 1);
}

void LogStore::MarkDeadLocked(const std::string& key, const IndexEntry& e) {
  Segment& seg = segments_[e.segment];
  seg.live_bytes -= e.record_size;
  seg.dead_bytes += e.record_size;
  if (!e.tombstone) ++dead_puts_[key];
}

Status LogStore::StartSegmentLocked(uint64_t id) {
  active_id_ = id;
  active_data_.clear();
  active_data_.append(kSegmentMagic, 4);
  PutBE64(&active_data_, id);
  active_flushed_ = 0;
  Segment& seg = segments_[id];
  seg.size = active_data_.size();
  seg.sealed = false;
  return Status::OK();
}

Status LogStore::FlushBufferLocked() {
  if (active_flushed_ == active_data_.size()) return Status::OK();
  const std::string name = SegmentName(active_id_);
  TANDEM_RETURN_IF_ERROR(
      env_->Append(name, std::string_view(active_data_).substr(active_flushed_)));
  TANDEM_RETURN_IF_ERROR(env_->Sync(name));
  active_flushed_ = active_data_.size();
  return Status::OK();
}

Status LogStore::SealActiveLocked() {
  TANDEM_RETURN_IF_ERROR(FlushBufferLocked());
  Segment& seg = segments_[active_id_];
  bool empty = seg.size <= kSegmentHeaderBytes;
  if (empty) {
    // Nothing was written; reuse the id.
    return Status::OK();
  }
  seg.sealed = true;
  TANDEM_RETURN_IF_ERROR(StartSegmentLocked(active_id_ + 1));
  if (options_.background_gc) {
    std::lock_guard lock(bg_mu_);
    bg_pending_ = true;
    bg_cv_.notify_one();
  }
  return Status::OK();
}

Status LogStore::AppendRecordLocked(std::string_view key, const std::string_view* value, IndexEntry* out) {
  size_t offset = active_data_.size();
  EncodeRecord(&active_data_, key, value);
  uint32_t size = static_cast<uint32_t>(active_data_.size() - offset);
  Segment& seg = segments_[active_id_];
  seg.size = active_data_.size();
  seg.live_bytes += size;
  *out = IndexEntry{active_id_, offset, size, value == nullptr};
  if (active_data_.size() - active_flushed_ >= options_.arrival_buffer_bytes) {
    TANDEM_RETURN_IF_ERROR(FlushBufferLocked());
  }
  return Status::OK();
}

Status LogStore::Put(std::string_view key, std::string_view value, bool overwrite_hint) {
  if (key.empty() || key.size() > kMaxStoreKeyBytes) return Status::InvalidArgument("key size");
  if (value.size() > kMaxStoreValueBytes) return Status::InvalidArgument("value size");
  std::unique_lock lock(mu_);
  TANDEM_RETURN_IF_ERROR(CheckOpen());
  puts_.fetch_add(1, std::memory_order_relaxed);
  auto it = index_.find(key);
  bool exists = it != index_.end();
  // A slot holding a delete marker still counts: the hint is about the index slot.
  if (exists != overwrite_hint) hint_misses_.fetch_add(1, std::memory_order_relaxed);
  IndexEntry entry;
  TANDEM_RETURN_IF_ERROR(AppendRecordLocked(key, &value, &entry));
  if (exists) {
    MarkDeadLocked(it->first, it->second);
    it->second = entry;
  } else {
    index_.emplace(std::string(key), entry);
  }
  if (active_data_.size() >= options_.segment_bytes) TANDEM_RETURN_IF_ERROR(SealActiveLocked());
  return Status::OK();
}

Status LogStore::ReadRecordLocked(const IndexEntry& e, std::string* value) const {
  std::string_view data;
  std::string buf;
  if (e.segment == active_id_) {
    data = std::string_view(active_data_).substr(e.offset, e.record_size);
  } else {
    TANDEM_RETURN_IF_ERROR(env_->Read(SegmentName(e.segment), e.offset, e.record_size, &buf));
    data = buf;
  }
  ParsedRecord rec;
  if (!ParseRecord(data, 0, &rec) || rec.tombstone) return Status::Corruption("bad record");
  value->assign(rec.value);
  return Status::OK();
}

Status LogStore::Get(std::string_view key, std::string* value) {
  std::shared_lock lock(mu_);
  TANDEM_RETURN_IF_ERROR(CheckOpen());
  gets_.fetch_add(1, std::memory_order_relaxed);
  auto it = index_.find(key);
  if (it == index_.end() || it->second.tombstone) return Status::NotFound();
  return ReadRecordLocked(it->second, value);
}

bool LogStore::Contains(std::string_view key) {
  std::shared_lock lock(mu_);
  auto it = index_.find(key);
  return it != index_.end() && !it->second.tombstone;
}

Status LogStore::Delete(std::string_view key, bool* existed) {
  return DeleteIf(key, [](std::string_view) { return true; }, existed);
}

Status LogStore::DeleteIf(std::string_view key, const std::function<bool(std::string_view)>& pred,
                          bool* deleted) {
  if (deleted) *deleted = false;
  std::unique_lock lock(mu_);
  TANDEM_RETURN_IF_ERROR(CheckOpen());
  deletes_.fetch_add(1, std::memory_order_relaxed);
  auto it = index_.find(key);
  if (it == index_.end() || it->second.tombstone) return Status::OK();
  std::string value;
  TANDEM_RETURN_IF_ERROR(ReadRecordLocked(it->second, &value));
  if (!pred(value)) return Status::OK();
  IndexEntry entry;
  TANDEM_RETURN_IF_ERROR(AppendRecordLocked(key, nullptr, &entry));
  MarkDeadLocked(it->first, it->second);
  it->second = entry;
  if (deleted) *deleted = true;
  if (active_data_.size() >= options_.segment_bytes) TANDEM_RETURN_IF_ERROR(SealActiveLocked());
  return Status::OK();
}

Result<std::string> LogStore::SegmentBytesLocked(uint64_t id) const {
  if (id == active_id_) return active_data_;
  auto it = segments_.find(id);
  std::string data;
  TANDEM_RETURN_IF_ERROR(env_->Read(SegmentName(id), 0, it->second.size, &data));
  return data;
}

Result<uint64_t> LogStore::ScanUnordered(const Sink& sink) {
  std::vector<uint64_t> ids;
  {
    std::unique_lock lock(mu_);
    TANDEM_RETURN_IF_ERROR(CheckOpen());
    ++scans_in_progress_;
    for (const auto& [id, seg] : segments_) ids.push_back(id);
  }
  uint64_t emitted = 0;
  Status status;
  std::vector<std::pair<std::string, std::string>> batch;
  for (uint64_t id : ids) {
    batch.clear();
    {
      std::shared_lock lock(mu_);
      if (closed_) {
        status = Status::Closed("store closed during scan");
        break;
      }
      if (!segments_.count(id)) continue;
      auto data = SegmentBytesLocked(id);
      if (!data.ok()) {
        status = data.status();
        break;
      }
      std::string_view seg = *data;
      uint64_t offset = kSegmentHeaderBytes;
      ParsedRecord rec;
      uint64_t end = segments_.at(id).size;
      while (offset < end && ParseRecord(seg, offset, &rec, false)) {
        auto it = index_.find(rec.key);
        if (!rec.tombstone && it != index_.end() && it->second.segment == id && it->second.offset == offset) {
          batch.emplace_back(rec.key, rec.value);
        }
        offset += rec.size;
      }
    }
    for (const auto& [k, v] : batch) sink(k, v);
    emitted += batch.size();
  }
  {
    std::unique_lock lock(mu_);
    --scans_in_progress_;
  }
  if (!status.ok()) return status;
  return emitted;
}

Result<uint64_t> LogStore::Gc() {
  std::unique_lock lock(mu_);
  TANDEM_RETURN_IF_ERROR(CheckOpen());
  return GcLocked();
}

Result<uint64_t> LogStore::GcLocked() {
  if (scans_in_progress_ > 0) return uint64_t{0};
  auto collectable = [&](const Segment& s) {
    uint64_t total = s.live_bytes + s.dead_bytes;
    return total > 0 && s.dead_bytes > 0 &&
           static_cast<double>(s.dead_bytes) >= options_.gc_dead_fraction * static_cast<double>(total);
  };
  if (collectable(segments_[active_id_])) TANDEM_RETURN_IF_ERROR(SealActiveLocked());

  std::vector<uint64_t> victims;
  for (const auto& [id, seg] : segments_) {
    if (seg.sealed && id != active_id_ && collectable(seg)) victims.push_back(id);
  }
  if (victims.empty()) return uint64_t{0};

  uint64_t reclaimed = 0;
  for (uint64_t id : victims) {
    TANDEM_ASSIGN_OR_RETURN(std::string data, SegmentBytesLocked(id));
    const uint64_t end = segments_[id].size;
    uint64_t offset = kSegmentHeaderBytes;
    ParsedRecord rec;
    while (offset < end && ParseRecord(data, offset, &rec)) {
      auto it = index_.find(rec.key);
      bool live = it != index_.end() && it->second.segment == id && it->second.offset == offset;
      if (!live) {
        if (!rec.tombstone) {
          auto d = dead_puts_.find(rec.key);
          if (d != dead_puts_.end() && --d->second == 0) dead_puts_.erase(d);
        }
        reclaimed += rec.size;
      } else if (rec.tombstone && !dead_puts_.count(rec.key)) {
        // No older put survives anywhere, so the tombstone has nothing to shadow.
        reclaimed += rec.size;
        index_.erase(it);
      } else {
        IndexEntry entry;
        std::string_view value = rec.value;
        TANDEM_RETURN_IF_ERROR(AppendRecordLocked(rec.key, rec.tombstone ? nullptr : &value, &entry));
        it->second = entry;
        gc_bytes_moved_.fetch_add(rec.size, std::memory_order_relaxed);
        if (active_data_.size() >= options_.segment_bytes) TANDEM_RETURN_IF_ERROR(SealActiveLocked());
      }
      offset += rec.size;
    }
  }
  TANDEM_RETURN_IF_ERROR(FlushBufferLocked());
  for (uint64_t id : victims) {
    TANDEM_RETURN_IF_ERROR(env_->Delete(SegmentName(id)));
    segments_.erase(id);
  }
  return reclaimed;
}

Status LogStore::Sync() {
  std::unique_lock lock(mu_);
  TANDEM_RETURN_IF_ERROR(CheckOpen());
  return FlushBufferLocked();
}

Status LogStore::Close() {
  {
    std::lock_guard lock(bg_mu_);
    bg_stop_ = true;
    bg_cv_.notify_all();
  }
  if (bg_thread_.joinable()) bg_thread_.join();
  std::unique_lock lock(mu_);
  if (closed_) return Status::OK();
  Status s = FlushBufferLocked();
  closed_ = true;
  return s;
}

void LogStore::BackgroundLoop() {
  for (;;) {
    {
      std::unique_lock lock(bg_mu_);
      bg_cv_.wait(lock, [&] { return bg_pending_ || bg_stop_; });
      if (bg_stop_) return;
      bg_pending_ = false;
    }
    std::unique_lock lock(mu_);
    if (closed_) return;
    (void)GcLocked();
  }
}

KvsStats LogStore::stats() const {
  KvsStats s;
  s.puts = puts_.load();
  s.gets = gets_.load();
  s.deletes = deletes_.load();
  s.gc_bytes_moved = gc_bytes_moved_.load();
  s.overwrite_hint_misses = hint_misses_.load();
  return s;
}

std::vector<SegmentInfo> LogStore::Segments() const {
  std::shared_lock lock(mu_);
  std::vector<SegmentInfo> out;
  for (const auto& [id, s] : segments_) out.push_back({id, s.live_bytes, s.dead_bytes, s.sealed});
  return out;
}

size_t LogStore::live_records() const {
  std::shared_lock lock(mu_);
  size_t n = 0;
  for (const auto& [k, e] : index_) n += e.tombstone ? 0 : 1;
  return n;
}

}  // namespace tandem
