#include "tandem/db.hpp"

#include <algorithm>
#include <cstdio>

#include "json.hpp"

namespace tandem {

namespace {

// Writers stall while this many memtables await flushing.
constexpr size_t kMaxImmutable = 4;
constexpr size_t kHintFilterBits = size_t{1} << 22;

std::string WalFileName(uint64_t number) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "wal/%012llu", static_cast<unsigned long long>(number));
  return buf;
}

}  // namespace

std::string RecoveryReport::ToJson() const {
  nlohmann::ordered_json j;
  j["wal_records_replayed"] = wal_records_replayed;
  j["orphans_deleted"] = orphans_deleted;
  j["clock_before"] = clock_before;
  j["clock_after"] = clock_after;
  j["checkpoints_reinstalled"] = checkpoints_reinstalled;
  j["garbage_files_deleted"] = garbage_files_deleted;
  j["created"] = created;
  return j.dump();
}

Db::Db(const DbOptions& options)
    : options_(options),
      config_(options.config),
      picker_(options.config.lsm),
      row_cache_(options.config.row_cache_bytes),
      hint_filter_(kHintFilterBits, false) {}

Result<std::unique_ptr<Db>> Db::Open(const DbOptions& options, RecoveryReport* report) {
  TANDEM_RETURN_IF_ERROR(options.config.Validate());
  std::unique_ptr<Db> db(new Db(options));
  if (options.env) {
    db->env_ = options.env;
  } else {
    if (options.path.empty()) return Status::InvalidArgument("no storage path");
    TANDEM_ASSIGN_OR_RETURN(auto env, PosixEnv::Open(options.path, options.create_if_missing));
    db->owned_env_ = std::move(env);
    db->env_ = db->owned_env_.get();
  }
  RecoveryReport local;
  TANDEM_RETURN_IF_ERROR(db->Recover(report ? report : &local));
  if (!db->config_.deterministic) db->bg_thread_ = std::thread([p = db.get()] { p->BackgroundLoop(); });
  return db;
}

Db::~Db() { Close(); }

Status Db::CheckUsable() const {
  if (closed_.load()) return Status::Closed("db closed");
  std::lock_guard lock(bg_mu_);
  return bg_error_;
}

Status Db::StartWal(std::shared_ptr<WalWriter>* out) {
  uint64_t number = next_file_.fetch_add(1);
  TANDEM_ASSIGN_OR_RETURN(auto file, kvfs_->Create(WalFileName(number), FileKind::kWal));
  *out = std::make_shared<WalWriter>(std::move(file));
  return Status::OK();
}

// ---------------------------------------------------------------------------
// Write path

Status Db::Put(std::string_view key, std::string_view value) { return Write(key, MemOp::kPut, value); }

Status Db::Delete(std::string_view key) { return Write(key, MemOp::kDelete, {}); }

Status Db::Write(std::string_view key, MemOp op, std::string_view value) {
  TANDEM_RETURN_IF_ERROR(CheckUsable());
  if (key.empty() || key.size() > kMaxUserKeyBytes) return Status::InvalidArgument("key size");
  if (value.size() > kMaxUserValueBytes) return Status::InvalidArgument("value size");
  std::unique_lock lock(commit_mu_);
  const SeqNum sn = clock_.load() + 1;
  WalRecord rec{op == MemOp::kPut ? WalOp::kPut : WalOp::kDelete, sn, std::string(key), std::string(value)};
  TANDEM_RETURN_IF_ERROR(wal_->Append(rec));
  if (config_.sync_wal) TANDEM_RETURN_IF_ERROR(wal_->Sync());
  mem_->Insert(key, sn, op, value);
  clock_.store(sn);
  if (op == MemOp::kPut) {
    row_cache_.OnWrite(key, sn, value);
    counters_.puts++;
  } else {
    row_cache_.OnWrite(key, sn, std::nullopt);
    counters_.deletes++;
  }
  if (config_.deterministic || mem_->ApproximateBytes() < config_.memtable_bytes) return Status::OK();
  TANDEM_RETURN_IF_ERROR(RotateLocked());
  MaybeScheduleWork();
  std::unique_lock bl(bg_mu_);
  idle_cv_.wait(bl, [&] { return imm_count() < kMaxImmutable || bg_stop_ || !bg_error_.ok(); });
  return bg_error_;
}

Status Db::RotateLocked() {
  if (mem_->empty()) return Status::OK();
  std::shared_ptr<WalWriter> wal;
  TANDEM_RETURN_IF_ERROR(StartWal(&wal));
  std::lock_guard lock(state_mu_);
  imm_.push_back(Imm{mem_, wal_});
  mem_ = std::make_shared<Memtable>();
  wal_ = std::move(wal);
  return Status::OK();
}

Status Db::SyncWal() {
  std::lock_guard lock(commit_mu_);
  return wal_->Sync();
}

// ---------------------------------------------------------------------------
// Snapshots

Result<Snapshot> Db::CreateSnapshot() {
  TANDEM_RETURN_IF_ERROR(CheckUsable());
  std::lock_guard lock(commit_mu_);
  const SeqNum sn = clock_.load() + 1;
  clock_.store(sn);
  std::lock_guard sl(snap_mu_);
  snapshots_.insert(sn);
  return Snapshot{sn};
}

Status Db::ReleaseSnapshot(Snapshot snapshot) {
  std::lock_guard lock(snap_mu_);
  for (const auto& [dir, rec] : checkpoints_) {
    if (rec.handle.sn == snapshot.sn) return Status::InvalidArgument("snapshot owned by checkpoint " + dir);
  }
  auto it = snapshots_.find(snapshot.sn);
  if (it == snapshots_.end()) return Status::InvalidArgument("snapshot not active");
  snapshots_.erase(it);
  return Status::OK();
}

std::vector<SeqNum> Db::ActiveSnapshots() const { return SortedSnapshots(); }

std::vector<SeqNum> Db::SortedSnapshots() const {
  std::lock_guard lock(snap_mu_);
  return std::vector<SeqNum>(snapshots_.begin(), snapshots_.end());
}

bool Db::SnapshotActive(SeqNum sn) const {
  std::lock_guard lock(snap_mu_);
  return snapshots_.count(sn) > 0;
}

// ---------------------------------------------------------------------------
// Read path

Db::ReadView Db::CaptureView() const {
  ReadView view;
  std::lock_guard lock(state_mu_);
  view.mems.reserve(imm_.size() + 1);
  view.mems.push_back(mem_);
  for (auto it = imm_.rbegin(); it != imm_.rend(); ++it) view.mems.push_back(it->mem);
  view.files = files_;
  return view;
}

std::shared_ptr<const LevelSet> Db::current() const {
  std::lock_guard lock(state_mu_);
  return files_;
}

size_t Db::imm_count() const {
  std::lock_guard lock(state_mu_);
  return imm_.size();
}

Result<std::optional<std::string>> Db::Get(std::string_view key) {
  TANDEM_RETURN_IF_ERROR(CheckUsable());
  counters_.gets++;
  const SeqNum read_start = clock_.load();
  if (auto cached = row_cache_.Lookup(key)) {
    counters_.row_cache_hits++;
    return cached->value;
  }
  ReadView view = CaptureView();
  for (const auto& m : view.mems) {
    if (auto e = m->Get(key)) {
      std::optional<std::string> v;
      if (e->op == MemOp::kPut) v = e->value;
      row_cache_.Fill(key, read_start, RowCache::Entry{e->sn, v});
      return v;
    }
  }

  const BloomHash h = BloomHash::Of(key);
  std::vector<const SstFile*> order;
  view.files->SearchOrder(key, &order);
  bool fell_back = false;
  for (const SstFile* f : order) {
    counters_.bloom_checks++;
    if (!f->reader->InBloom(h)) continue;
    uint64_t reads = 0;
    auto found = f->reader->SearchLatest(key, &reads);
    counters_.sst_block_reads += reads;
    if (!found.ok()) return found.status();
    if (!*found) {
      counters_.bloom_false_positives++;
      continue;
    }
    const LsmEntry& e = **found;
    if (e.kind == EntryKind::kDirect) break;
    if (e.kind == EntryKind::kTombstone) {
      row_cache_.Fill(key, read_start, RowCache::Entry{e.sn, std::nullopt});
      return std::optional<std::string>();
    }
    std::string value;
    counters_.kvs_value_reads++;
    Status s = kvs_->Get(VersionedKey(key, e.sn), &value);
    if (s.ok()) {
      row_cache_.Fill(key, read_start, RowCache::Entry{e.sn, value});
      return std::optional<std::string>(std::move(value));
    }
    if (!s.IsNotFound()) return s;
    // Renamed to direct since this version was captured.
    counters_.fallback_reads++;
    fell_back = true;
    break;
  }
  if (config_.nodirect && !fell_back) return std::optional<std::string>();

  std::string stored;
  counters_.kvs_value_reads++;
  Status s = kvs_->Get(DirectKey(key), &stored);
  if (s.IsNotFound()) return std::optional<std::string>();
  TANDEM_RETURN_IF_ERROR(s);
  SeqNum sn;
  std::string_view value;
  if (!ParseDirectValue(stored, &sn, &value)) return Status::Corruption("short direct value");
  row_cache_.Fill(key, read_start, RowCache::Entry{sn, std::string(value)});
  return std::optional<std::string>(std::string(value));
}

Result<std::optional<std::string>> Db::GetAt(std::string_view key, Snapshot snapshot) {
  TANDEM_RETURN_IF_ERROR(CheckUsable());
  if (!SnapshotActive(snapshot.sn)) return Status::InvalidArgument("stale snapshot");
  counters_.gets++;
  if (auto cached = row_cache_.Lookup(key); cached && cached->sn < snapshot.sn) {
    counters_.row_cache_hits++;
    return cached->value;
  }
  return GetAtView(CaptureView(), key, snapshot.sn);
}

Result<std::optional<std::string>> Db::GetAtView(const ReadView& view, std::string_view key, SeqNum snapshot) {
  for (const auto& m : view.mems) {
    if (auto e = m->GetBefore(key, snapshot)) {
      if (e->op == MemOp::kDelete) return std::optional<std::string>();
      return std::optional<std::string>(e->value);
    }
  }
  const BloomHash h = BloomHash::Of(key);
  std::vector<const SstFile*> order;
  view.files->SearchOrder(key, &order);
  bool fell_back = false;
  for (const SstFile* f : order) {
    counters_.bloom_checks++;
    if (!f->reader->InBloom(h)) continue;
    uint64_t reads = 0;
    auto found = f->reader->SearchLatestBefore(key, snapshot, &reads);
    counters_.sst_block_reads += reads;
    if (!found.ok()) return found.status();
    if (!*found) continue;
    const LsmEntry& e = **found;
    if (e.kind == EntryKind::kDirect) break;
    if (e.kind == EntryKind::kTombstone) return std::optional<std::string>();
    std::string value;
    counters_.kvs_value_reads++;
    Status s = kvs_->Get(VersionedKey(key, e.sn), &value);
    if (s.ok()) return std::optional<std::string>(std::move(value));
    if (!s.IsNotFound()) return s;
    counters_.fallback_reads++;
    fell_back = true;
    break;
  }
  if (config_.nodirect && !fell_back) return std::optional<std::string>();
  std::string stored;
  counters_.kvs_value_reads++;
  Status s = kvs_->Get(DirectKey(key), &stored);
  if (s.IsNotFound()) return std::optional<std::string>();
  TANDEM_RETURN_IF_ERROR(s);
  SeqNum sn;
  std::string_view value;
  if (!ParseDirectValue(stored, &sn, &value)) return Status::Corruption("short direct value");
  if (sn >= snapshot) return std::optional<std::string>();
  return std::optional<std::string>(std::string(value));
}

// ---------------------------------------------------------------------------
// Range reads

Status Db::CollectVisible(const ReadView& view, std::string_view from, const std::optional<std::string>& to,
                          SeqNum snapshot, std::vector<VisibleEntry>* out) {
  std::map<std::string, VisibleEntry, std::less<>> best;
  for (const auto& m : view.mems) {
    m->VisitRange(from, to, [&](const std::string& key, const std::vector<MemEntry>& versions) {
      for (auto v = versions.rbegin(); v != versions.rend(); ++v) {
        if (v->sn >= snapshot) continue;
        auto it = best.find(key);
        if (it == best.end() || it->second.sn < v->sn) {
          VisibleEntry e;
          e.key = key;
          e.sn = v->sn;
          e.kind = v->op == MemOp::kDelete ? EntryKind::kTombstone : EntryKind::kVersioned;
          if (v->op == MemOp::kPut) e.mem_value = v->value;
          best[key] = std::move(e);
        }
        break;
      }
    });
  }
  std::vector<LsmEntry> entries;
  for (int l = 0; l < kNumLevels; ++l) {
    for (const auto& f : view.files->level(l)) {
      if (!f->reader->Overlaps(from, to)) continue;
      entries.clear();
      uint64_t reads = 0;
      TANDEM_RETURN_IF_ERROR(f->reader->ReadRange(from, to, &entries, &reads));
      counters_.sst_block_reads += reads;
      for (auto& e : entries) {
        if (e.sn >= snapshot) continue;
        auto it = best.find(e.key);
        if (it != best.end() && it->second.sn >= e.sn) continue;
        VisibleEntry v;
        v.key = e.key;
        v.sn = e.sn;
        v.kind = e.kind;
        best[e.key] = std::move(v);
      }
    }
  }
  out->clear();
  out->reserve(best.size());
  for (auto& [key, e] : best) {
    if (e.kind == EntryKind::kTombstone) continue;
    out->push_back(std::move(e));
  }
  return Status::OK();
}

Result<std::string> Db::FetchValue(const VisibleEntry& entry, SeqNum snapshot) {
  if (entry.mem_value) return *entry.mem_value;
  std::string value;
  if (entry.kind == EntryKind::kVersioned) {
    counters_.kvs_value_reads++;
    Status s = kvs_->Get(VersionedKey(entry.key, entry.sn), &value);
    if (s.ok()) return value;
    if (!s.IsNotFound()) return s;
    counters_.fallback_reads++;
  }
  counters_.kvs_value_reads++;
  std::string stored;
  Status s = kvs_->Get(DirectKey(entry.key), &stored);
  if (s.IsNotFound()) return Status::NotFound("value lost for key " + entry.key);
  TANDEM_RETURN_IF_ERROR(s);
  SeqNum sn;
  std::string_view v;
  if (!ParseDirectValue(stored, &sn, &v)) return Status::Corruption("short direct value");
  if (sn >= snapshot) return Status::NotFound("direct value of " + entry.key + " is newer than the snapshot");
  return std::string(v);
}

Result<std::vector<Db::KV>> Db::FetchAll(std::vector<VisibleEntry> entries, SeqNum snapshot, int workers) {
  if (workers <= 0) workers = config_.iterator_workers;
  workers = std::clamp(workers, 1, 64);
  std::vector<KV> out(entries.size());
  std::vector<Status> errors(workers);
  std::atomic<size_t> next{0};
  // Workers claim entries in key order and write into the matching slot,
  // so completion order never affects the output order.
  auto work = [&](int w) {
    for (size_t i = next.fetch_add(1); i < entries.size(); i = next.fetch_add(1)) {
      auto v = FetchValue(entries[i], snapshot);
      if (!v.ok()) {
        errors[w] = v.status();
        next.store(entries.size());
        return;
      }
      out[i] = KV(std::move(entries[i].key), std::move(v).value());
    }
  };
  const int n = static_cast<int>(std::min<size_t>(workers, entries.size()));
  if (n <= 1) {
    work(0);
  } else {
    std::vector<std::thread> threads;
    threads.reserve(n);
    for (int w = 0; w < n; ++w) threads.emplace_back(work, w);
    for (auto& t : threads) t.join();
  }
  for (const Status& s : errors) {
    if (!s.ok()) return s.IsNotFound() ? Status::Corruption(s.message()) : s;
  }
  return out;
}

Status Db::VisibleAt(std::string_view from, const std::optional<std::string>& to, Snapshot snapshot,
                     std::vector<VisibleEntry>* out) {
  if (!SnapshotActive(snapshot.sn)) return Status::InvalidArgument("stale snapshot");
  return CollectVisible(CaptureView(), from, to, snapshot.sn, out);
}

Result<std::vector<Db::KV>> Db::IterateAt(std::string_view from, const std::optional<std::string>& to,
                                          Snapshot snapshot, int workers) {
  TANDEM_RETURN_IF_ERROR(CheckUsable());
  if (to && *to < from) return Status::InvalidArgument("from > to");
  if (!SnapshotActive(snapshot.sn)) return Status::InvalidArgument("stale snapshot");
  std::vector<VisibleEntry> entries;
  {
    ReadView view = CaptureView();
    TANDEM_RETURN_IF_ERROR(CollectVisible(view, from, to, snapshot.sn, &entries));
  }
  return FetchAll(std::move(entries), snapshot.sn, workers);
}

Result<std::vector<Db::KV>> Db::Iterate(std::string_view from, const std::optional<std::string>& to, int workers) {
  TANDEM_ASSIGN_OR_RETURN(Snapshot snap, CreateSnapshot());
  auto result = IterateAt(from, to, snap, workers);
  TANDEM_RETURN_IF_ERROR(ReleaseSnapshot(snap));
  return result;
}

// ---------------------------------------------------------------------------
// Mode selection

bool Db::DirectSafe(const LevelSet& files, const std::vector<SeqNum>& snapshots, std::string_view key, SeqNum sn,
                    int level) {
  if (!snapshots.empty() && snapshots.front() < sn) return false;
  const BloomHash h = BloomHash::Of(key);
  std::vector<const SstFile*> order;
  files.SearchOrder(key, &order);
  for (const SstFile* f : order) {
    bool below = f->level > level || (level == 0 && f->level == 0);
    if (below && f->reader->InBloom(h)) return false;
  }
  return true;
}

bool Db::IsDirectModeSafe(std::string_view key, SeqNum sn, int level) const {
  return DirectSafe(*current(), SortedSnapshots(), key, sn, level);
}

bool Db::OverwriteHint(std::string_view key) {
  size_t bit = Hash64(key) & (kHintFilterBits - 1);
  bool seen = hint_filter_[bit];
  hint_filter_[bit] = true;
  return seen;
}

// ---------------------------------------------------------------------------
// Background work

void Db::SetCommitHook(std::function<void(CommitKind)> hook) {
  std::lock_guard lock(work_mu_);
  commit_hook_ = std::move(hook);
}

void Db::NotifyCommit(CommitKind kind) {
  if (commit_hook_) commit_hook_(kind);
}

void Db::MaybeScheduleWork() {
  if (config_.deterministic) return;
  std::lock_guard lock(bg_mu_);
  bg_kick_ = true;
  bg_cv_.notify_one();
}

void Db::BackgroundLoop() {
  for (;;) {
    {
      std::unique_lock lock(bg_mu_);
      bg_cv_.wait(lock, [&] { return bg_stop_ || bg_kick_; });
      if (bg_stop_) return;
      bg_kick_ = false;
      bg_busy_ = true;
    }
    Status s;
    for (;;) {
      bool did = false;
      {
        std::lock_guard work(work_mu_);
        if (imm_count() > 0) {
          s = FlushOldestLocked();
          did = true;
        } else if (auto job = picker_.Pick(*current())) {
          s = RunCompactionLocked(*job);
          did = true;
        }
      }
      {
        std::lock_guard lock(bg_mu_);
        if (!s.ok()) bg_error_ = s;
      }
      idle_cv_.notify_all();
      if (!s.ok() || !did) break;
      std::lock_guard lock(bg_mu_);
      if (bg_stop_) break;
    }
    {
      std::lock_guard lock(bg_mu_);
      bg_busy_ = false;
    }
    idle_cv_.notify_all();
  }
}

Status Db::WaitForIdle() {
  if (config_.deterministic) return Status::OK();
  std::unique_lock lock(bg_mu_);
  bg_kick_ = true;
  bg_cv_.notify_one();
  idle_cv_.wait(lock, [&] { return (!bg_busy_ && !bg_kick_) || !bg_error_.ok() || bg_stop_; });
  return bg_error_;
}

Status Db::FlushNow() {
  TANDEM_RETURN_IF_ERROR(CheckUsable());
  std::lock_guard work(work_mu_);
  {
    std::lock_guard lock(commit_mu_);
    TANDEM_RETURN_IF_ERROR(RotateLocked());
  }
  return FlushAllLocked();
}

Status Db::FlushAllLocked() {
  while (imm_count() > 0) TANDEM_RETURN_IF_ERROR(FlushOldestLocked());
  idle_cv_.notify_all();
  return Status::OK();
}

Result<bool> Db::CompactOnce() {
  TANDEM_RETURN_IF_ERROR(CheckUsable());
  std::lock_guard work(work_mu_);
  auto job = picker_.Pick(*current());
  if (!job) return false;
  TANDEM_RETURN_IF_ERROR(RunCompactionLocked(*job));
  return true;
}

Status Db::CompactUntilQuiescent() {
  for (;;) {
    TANDEM_ASSIGN_OR_RETURN(bool did, CompactOnce());
    if (!did) return Status::OK();
  }
}

Status Db::CompactRange() {
  TANDEM_RETURN_IF_ERROR(FlushNow());
  std::lock_guard work(work_mu_);
  const int deepest = current()->DeepestNonEmpty();
  if (deepest < 0) return Status::OK();
  const int bottom = std::max(1, deepest);
  for (int l = 0; l < bottom; ++l) {
    if (auto job = CompactionPicker::WholeLevel(*current(), l, l + 1)) {
      TANDEM_RETURN_IF_ERROR(RunCompactionLocked(*job));
    }
  }
  if (auto job = CompactionPicker::WholeLevel(*current(), bottom, bottom)) {
    TANDEM_RETURN_IF_ERROR(RunCompactionLocked(*job));
  }
  return Status::OK();
}

Status Db::Close() {
  if (closed_.exchange(true)) return Status::OK();
  {
    std::lock_guard lock(bg_mu_);
    bg_stop_ = true;
  }
  bg_cv_.notify_all();
  idle_cv_.notify_all();
  if (bg_thread_.joinable()) bg_thread_.join();
  if (!kvs_) return Status::OK();
  Status result;
  {
    std::lock_guard work(work_mu_);
    std::lock_guard lock(commit_mu_);
    if (wal_) result = wal_->Sync();
    std::lock_guard sl(state_mu_);
    for (auto& imm : imm_) {
      Status s = imm.wal->Sync();
      if (result.ok()) result = s;
    }
  }
  PurgeObsoleteFiles();
  Status s = kvs_->Close();
  return result.ok() ? s : result;
}

}  // namespace tandem
