#include <algorithm>

#include "tandem/db.hpp"

namespace tandem {

namespace {

// True when `older` must survive because some snapshot falls in
// (older.sn, newer_sn]: that snapshot reads `older`.
bool NeededBySnapshot(const std::vector<SeqNum>& snapshots, SeqNum older, SeqNum newer_sn) {
  auto it = std::upper_bound(snapshots.begin(), snapshots.end(), older);
  return it != snapshots.end() && *it <= newer_sn;
}

}  // namespace

Status Db::InstallFile(uint64_t id, int level, SstFilePtr* out) {
  TANDEM_ASSIGN_OR_RETURN(auto reader, SstReader::Open(kvfs_.get(), SstFileName(id)));
  auto f = std::make_shared<SstFile>();
  f->id = id;
  f->level = level;
  f->reader = std::move(reader);
  *out = std::move(f);
  return Status::OK();
}

void Db::RetireFiles(const std::vector<SstFilePtr>& files) {
  std::lock_guard lock(state_mu_);
  for (const auto& f : files) obsolete_.emplace_back(f, f->id);
}

void Db::PurgeObsoleteFiles() {
  std::vector<uint64_t> dead;
  {
    std::lock_guard lock(state_mu_);
    std::erase_if(obsolete_, [&](const auto& entry) {
      if (!entry.first.expired()) return false;
      dead.push_back(entry.second);
      return true;
    });
  }
  for (uint64_t id : dead) {
    Status s = kvfs_->Delete(SstFileName(id));
    (void)s;  // NotFound after a crash-interrupted purge is fine; leftovers are collected on open
  }
}

// ---------------------------------------------------------------------------
// Flush

Status Db::FlushOldestLocked() {
  Imm imm;
  std::shared_ptr<const LevelSet> files;
  {
    std::lock_guard lock(state_mu_);
    if (imm_.empty()) return Status::OK();
    imm = imm_.front();
    files = files_;
  }
  const std::vector<SeqNum> snapshots = SortedSnapshots();
  // Undo after a crash needs every record whose value reaches the store.
  TANDEM_RETURN_IF_ERROR(imm.wal->Sync());

  const uint64_t id = next_file_.fetch_add(1);
  TANDEM_ASSIGN_OR_RETURN(auto writer, kvfs_->Create(SstFileName(id), FileKind::kSst));
  SstBuilder builder(std::move(writer));
  Status status;
  imm.mem->VisitAll([&](const std::string& key, const std::vector<MemEntry>& versions) {
    for (size_t i = versions.size(); i-- > 0 && status.ok();) {
      const MemEntry& v = versions[i];
      if (i + 1 < versions.size() && !NeededBySnapshot(snapshots, v.sn, versions[i + 1].sn)) continue;
      if (v.op == MemOp::kDelete) {
        status = builder.Add(LsmEntry{key, v.sn, EntryKind::kTombstone});
      } else if (!config_.nodirect && DirectSafe(*files, snapshots, key, v.sn, 0)) {
        status = kvs_->Put(DirectKey(key), DirectValue(v.sn, v.value), OverwriteHint(key));
        counters_.direct_writes++;
        if (status.ok()) status = builder.Add(LsmEntry{key, v.sn, EntryKind::kDirect});
      } else {
        status = kvs_->Put(VersionedKey(key, v.sn), v.value, false);
        counters_.versioned_writes++;
        if (status.ok()) status = builder.Add(LsmEntry{key, v.sn, EntryKind::kVersioned});
      }
    }
  });
  TANDEM_RETURN_IF_ERROR(status);
  TANDEM_ASSIGN_OR_RETURN(SstProperties props, builder.Finish());
  TANDEM_RETURN_IF_ERROR(kvfs_->Seal(builder.writer()));
  SstFilePtr file;
  TANDEM_RETURN_IF_ERROR(InstallFile(id, 0, &file));
  TANDEM_RETURN_IF_ERROR(manifest_->Log({ManifestEdit::AddSst(id, 0, props.min_key, props.max_key),
                                         ManifestEdit::WalTruncate(imm.mem->max_sn()),
                                         ManifestEdit::ClockHwm(clock_.load())}));
  {
    std::lock_guard lock(state_mu_);
    files_ = files_->Apply({}, {file});
    imm_.pop_front();
  }
  TANDEM_RETURN_IF_ERROR(kvfs_->Delete(imm.wal->name()));
  counters_.flushes++;
  NotifyCommit(CommitKind::kFlush);
  return Status::OK();
}

// ---------------------------------------------------------------------------
// Compaction

Status Db::CompactionDelete(const LsmEntry& e) {
  switch (e.kind) {
    case EntryKind::kVersioned:
      return kvs_->Delete(VersionedKey(e.key, e.sn));
    case EntryKind::kDirect:
      // A later direct write of the key may already have replaced the value.
      return kvs_->DeleteIf(DirectKey(e.key), [&](std::string_view stored) {
        SeqNum sn;
        std::string_view v;
        return ParseDirectValue(stored, &sn, &v) && sn == e.sn;
      });
    case EntryKind::kTombstone:
      return Status::OK();
  }
  return Status::OK();
}

Status Db::RunCompactionLocked(const CompactionJob& job) {
  const std::vector<SeqNum> snapshots = SortedSnapshots();
  std::shared_ptr<const LevelSet> files = current();
  std::vector<LsmEntry> entries;
  for (const auto& f : job.inputs) TANDEM_RETURN_IF_ERROR(f->reader->ReadAll(&entries));
  std::sort(entries.begin(), entries.end(), [](const LsmEntry& a, const LsmEntry& b) {
    int c = a.key.compare(b.key);
    return c < 0 || (c == 0 && a.sn > b.sn);
  });

  std::vector<SstFilePtr> outputs;
  std::vector<ManifestEdit> edits;
  std::unique_ptr<SstBuilder> builder;
  uint64_t builder_id = 0;
  auto finish_output = [&]() -> Status {
    TANDEM_ASSIGN_OR_RETURN(SstProperties props, builder->Finish());
    TANDEM_RETURN_IF_ERROR(kvfs_->Seal(builder->writer()));
    SstFilePtr f;
    TANDEM_RETURN_IF_ERROR(InstallFile(builder_id, job.target_level, &f));
    outputs.push_back(f);
    edits.push_back(ManifestEdit::AddSst(builder_id, job.target_level, props.min_key, props.max_key));
    builder.reset();
    return Status::OK();
  };

  std::vector<bool> keep;
  std::vector<SeqNum> direct_sns;
  std::vector<LsmEntry> emitted;
  for (size_t i = 0; i < entries.size();) {
    size_t end = i;
    while (end < entries.size() && entries[end].key == entries[i].key) ++end;
    const std::string& key = entries[i].key;
    const size_t n = end - i;
    const LsmEntry* g = &entries[i];  // newest first

    keep.assign(n, true);
    for (size_t k = 1; k < n; ++k) keep[k] = NeededBySnapshot(snapshots, g[k].sn, g[k - 1].sn);
    if (job.is_bottommost) {
      // Nothing older exists below, so a trailing tombstone shadows nothing.
      for (size_t k = n; k-- > 0;) {
        if (!keep[k]) continue;
        if (g[k].kind != EntryKind::kTombstone) break;
        keep[k] = false;
      }
    }

    bool removed = false;
    for (size_t k = 0; k < n; ++k) {
      if (keep[k]) continue;
      removed = true;
      TANDEM_RETURN_IF_ERROR(CompactionDelete(g[k]));
    }

    emitted.clear();
    direct_sns.clear();
    for (size_t k = 0; k < n; ++k) {
      if (!keep[k]) continue;
      LsmEntry out = g[k];
      if (out.kind == EntryKind::kVersioned && !config_.nodirect &&
          DirectSafe(*files, snapshots, key, out.sn, job.target_level)) {
        std::string value;
        Status s = kvs_->Get(VersionedKey(key, out.sn), &value);
        if (s.ok()) {
          TANDEM_RETURN_IF_ERROR(kvs_->Put(DirectKey(key), DirectValue(out.sn, value), OverwriteHint(key)));
          TANDEM_RETURN_IF_ERROR(kvs_->Delete(VersionedKey(key, out.sn)));
          counters_.renames++;
        } else if (!s.IsNotFound()) {
          return s;
        }
        // Absent: an interrupted earlier run already renamed it.
        out.kind = EntryKind::kDirect;
      }
      if (out.kind == EntryKind::kDirect) direct_sns.push_back(out.sn);
      emitted.push_back(std::move(out));
    }

    if (job.is_bottommost && removed) {
      // Orphan guard: the direct record may only hold a version this group
      // still emits as direct. Versions newer than the group live above and
      // are left alone.
      const SeqNum newest = g[0].sn;
      TANDEM_RETURN_IF_ERROR(kvs_->DeleteIf(DirectKey(key), [&](std::string_view stored) {
        SeqNum sn;
        std::string_view v;
        if (!ParseDirectValue(stored, &sn, &v)) return true;
        return sn <= newest && std::find(direct_sns.begin(), direct_sns.end(), sn) == direct_sns.end();
      }));
    }

    for (const auto& out : emitted) {
      if (!builder) {
        builder_id = next_file_.fetch_add(1);
        TANDEM_ASSIGN_OR_RETURN(auto writer, kvfs_->Create(SstFileName(builder_id), FileKind::kSst));
        builder = std::make_unique<SstBuilder>(std::move(writer));
      }
      TANDEM_RETURN_IF_ERROR(builder->Add(out));
    }
    if (builder && builder->estimated_size() >= config_.lsm.target_file_bytes) TANDEM_RETURN_IF_ERROR(finish_output());
    i = end;
  }
  if (builder) TANDEM_RETURN_IF_ERROR(finish_output());

  std::vector<uint64_t> dropped;
  for (const auto& f : job.inputs) {
    dropped.push_back(f->id);
    edits.push_back(ManifestEdit::DropSst(f->id));
  }
  edits.push_back(ManifestEdit::ClockHwm(clock_.load()));
  TANDEM_RETURN_IF_ERROR(manifest_->Log(edits));
  {
    std::lock_guard lock(state_mu_);
    files_ = files_->Apply(dropped, outputs);
  }
  RetireFiles(job.inputs);
  files.reset();
  PurgeObsoleteFiles();
  counters_.compactions++;
  NotifyCommit(CommitKind::kCompaction);
  return Status::OK();
}

}  // namespace tandem
