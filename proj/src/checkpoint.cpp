#include <algorithm>

#include "tandem/db.hpp"

namespace tandem {

namespace {

std::string CheckpointListName(const std::string& dir) { return "ckpt/" + dir + "/FILES"; }

bool ValidCheckpointDir(const std::string& dir) {
  return !dir.empty() && dir.size() <= 200 && dir.find('/') == std::string::npos;
}

}  // namespace

// List format: count_be32 {id_be64 level_u8}*
Status Db::WriteCheckpointList(const std::string& dir, const LevelSet& files) {
  std::vector<SstFilePtr> all = files.AllFiles();
  std::string data;
  PutBE32(&data, static_cast<uint32_t>(all.size()));
  for (const auto& f : all) {
    PutBE64(&data, f->id);
    data.push_back(static_cast<char>(f->level));
  }
  TANDEM_ASSIGN_OR_RETURN(auto writer, kvfs_->Create(CheckpointListName(dir), FileKind::kSst));
  TANDEM_RETURN_IF_ERROR(writer->Append(data));
  TANDEM_RETURN_IF_ERROR(writer->Sync());
  return kvfs_->Seal(*writer);
}

Result<std::shared_ptr<const LevelSet>> Db::ReadCheckpointList(const std::string& dir,
                                                               std::map<uint64_t, SstFilePtr>* opened) {
  std::string data;
  Status s = kvfs_->ReadAll(CheckpointListName(dir), &data);
  if (!s.ok()) return Status::Corruption("unrecoverable: checkpoint " + dir + ": " + s.ToString());
  Decoder in(data);
  uint32_t count = 0;
  if (!in.GetBE32(&count)) return Status::Corruption("checkpoint list " + dir);
  std::vector<SstFilePtr> files;
  for (uint32_t i = 0; i < count; ++i) {
    uint64_t id = 0;
    uint8_t level = 0;
    if (!in.GetBE64(&id) || !in.GetU8(&level) || level >= kNumLevels) {
      return Status::Corruption("checkpoint list " + dir);
    }
    auto it = opened->find(id);
    if (it == opened->end()) {
      SstFilePtr f;
      Status st = InstallFile(id, level, &f);
      if (!st.ok()) return Status::Corruption("unrecoverable: checkpoint " + dir + " file: " + st.ToString());
      it = opened->emplace(id, std::move(f)).first;
    }
    files.push_back(it->second);
  }
  return std::make_shared<LevelSet>()->Apply({}, files);
}

Result<Checkpoint> Db::CreateCheckpoint(const std::string& dir) {
  TANDEM_RETURN_IF_ERROR(CheckUsable());
  if (!ValidCheckpointDir(dir)) return Status::InvalidArgument("bad checkpoint dir");
  std::lock_guard work(work_mu_);
  {
    std::lock_guard lock(snap_mu_);
    if (checkpoints_.count(dir)) return Status::AlreadyExists("checkpoint " + dir);
  }
  // Everything before sn sits in the rotated memtables, so flushing them
  // leaves the file list holding exactly the checkpoint contents.
  SeqNum sn;
  {
    std::lock_guard lock(commit_mu_);
    TANDEM_RETURN_IF_ERROR(RotateLocked());
    sn = clock_.load() + 1;
    clock_.store(sn);
    std::lock_guard sl(snap_mu_);
    snapshots_.insert(sn);
  }
  auto abandon = [&](Status s) {
    std::lock_guard lock(snap_mu_);
    snapshots_.erase(snapshots_.find(sn));
    return s;
  };
  Status s = FlushAllLocked();
  if (!s.ok()) return abandon(s);
  std::shared_ptr<const LevelSet> files = current();
  s = WriteCheckpointList(dir, *files);
  if (!s.ok()) return abandon(s);
  s = manifest_->Log({ManifestEdit::CheckpointAdd(sn, dir), ManifestEdit::ClockHwm(clock_.load())});
  if (!s.ok()) return abandon(s);
  Checkpoint handle{sn, dir};
  std::lock_guard lock(snap_mu_);
  checkpoints_[dir] = CheckpointRecord{handle, files};
  return handle;
}

Status Db::DropCheckpoint(const Checkpoint& checkpoint) {
  TANDEM_RETURN_IF_ERROR(CheckUsable());
  std::lock_guard work(work_mu_);
  {
    std::lock_guard lock(snap_mu_);
    auto it = checkpoints_.find(checkpoint.dir);
    if (it == checkpoints_.end() || it->second.handle.sn != checkpoint.sn) {
      return Status::NotFound("checkpoint " + checkpoint.dir);
    }
  }
  TANDEM_RETURN_IF_ERROR(manifest_->Log({ManifestEdit::CheckpointDrop(checkpoint.sn)}));
  {
    std::lock_guard lock(snap_mu_);
    checkpoints_.erase(checkpoint.dir);
    snapshots_.erase(snapshots_.find(checkpoint.sn));
  }
  TANDEM_RETURN_IF_ERROR(kvfs_->Delete(CheckpointListName(checkpoint.dir)));
  PurgeObsoleteFiles();
  return Status::OK();
}

std::vector<Checkpoint> Db::Checkpoints() const {
  std::lock_guard lock(snap_mu_);
  std::vector<Checkpoint> out;
  for (const auto& [dir, rec] : checkpoints_) out.push_back(rec.handle);
  std::sort(out.begin(), out.end(), [](const Checkpoint& a, const Checkpoint& b) { return a.sn < b.sn; });
  return out;
}

std::vector<std::shared_ptr<const LevelSet>> Db::PinnedFileSets() const {
  std::vector<std::shared_ptr<const LevelSet>> out{current()};
  std::lock_guard lock(snap_mu_);
  for (const auto& [dir, rec] : checkpoints_) out.push_back(rec.files);
  return out;
}

Result<std::optional<std::string>> Db::CheckpointGet(const Checkpoint& checkpoint, std::string_view key) {
  TANDEM_RETURN_IF_ERROR(CheckUsable());
  ReadView view;
  {
    std::lock_guard lock(snap_mu_);
    auto it = checkpoints_.find(checkpoint.dir);
    if (it == checkpoints_.end() || it->second.handle.sn != checkpoint.sn) {
      return Status::NotFound("checkpoint " + checkpoint.dir);
    }
    view.files = it->second.files;
  }
  return GetAtView(view, key, checkpoint.sn);
}

Result<std::vector<Db::KV>> Db::CheckpointIterate(const Checkpoint& checkpoint, std::string_view from,
                                                  const std::optional<std::string>& to, int workers) {
  TANDEM_RETURN_IF_ERROR(CheckUsable());
  if (to && *to < from) return Status::InvalidArgument("from > to");
  ReadView view;
  {
    std::lock_guard lock(snap_mu_);
    auto it = checkpoints_.find(checkpoint.dir);
    if (it == checkpoints_.end() || it->second.handle.sn != checkpoint.sn) {
      return Status::NotFound("checkpoint " + checkpoint.dir);
    }
    view.files = it->second.files;
  }
  std::vector<VisibleEntry> entries;
  TANDEM_RETURN_IF_ERROR(CollectVisible(view, from, to, checkpoint.sn, &entries));
  return FetchAll(std::move(entries), checkpoint.sn, workers);
}

// ---------------------------------------------------------------------------
// Backup

Result<std::unique_ptr<Db>> Db::Backup(const Checkpoint& checkpoint, Env* target, const EngineConfig& config,
                                       BackupReport* report) {
  TANDEM_RETURN_IF_ERROR(CheckUsable());
  TANDEM_RETURN_IF_ERROR(config.Validate());
  BackupReport local;
  if (!report) report = &local;
  *report = BackupReport();
  const SeqNum S = checkpoint.sn;
  ReadView view;
  {
    std::lock_guard lock(snap_mu_);
    auto it = checkpoints_.find(checkpoint.dir);
    if (it == checkpoints_.end() || it->second.handle.sn != S) return Status::NotFound("checkpoint " + checkpoint.dir);
    view.files = it->second.files;
  }

  {
    TANDEM_ASSIGN_OR_RETURN(auto kvs, LogStore::Open(target, config.kvs));
    auto fs = std::make_unique<Kvfs>(kvs.get(), KvfsOptions{config.readahead_workers});
    ManifestState state;
    bool created = false;
    TANDEM_ASSIGN_OR_RETURN(auto manifest, Manifest::Open(fs.get(), &state, &created));
    if (!created) return Status::AlreadyExists("backup target is not empty");
    fs->SetMetadataLog(manifest.get());
    TANDEM_RETURN_IF_ERROR(fs->FinishRecovery());

    // LSM files keep their ids, so the manifest edits carry over verbatim.
    std::vector<ManifestEdit> edits;
    for (const auto& f : view.files->AllFiles()) {
      std::string data;
      TANDEM_RETURN_IF_ERROR(kvfs_->ReadAll(SstFileName(f->id), &data));
      TANDEM_ASSIGN_OR_RETURN(auto writer, fs->Create(SstFileName(f->id), FileKind::kSst));
      TANDEM_RETURN_IF_ERROR(writer->Append(data));
      TANDEM_RETURN_IF_ERROR(writer->Sync());
      TANDEM_RETURN_IF_ERROR(fs->Seal(*writer));
      edits.push_back(ManifestEdit::AddSst(f->id, f->level, f->min_key(), f->max_key()));
      report->files_copied++;
    }
    edits.push_back(ManifestEdit::ClockHwm(S));
    edits.push_back(ManifestEdit::WalTruncate(kNoSeq));
    TANDEM_RETURN_IF_ERROR(manifest->Log(edits));

    // Values. Anything written at or after S belongs to later history.
    Status status;
    auto scanned = kvs_->ScanUnordered([&](std::string_view key, std::string_view value) {
      if (!status.ok()) return;
      ParsedStoreKey parsed;
      if (!ParseStoreKey(key, &parsed)) return;
      SeqNum sn = parsed.sn;
      if (parsed.tag == kDirectTag) {
        std::string_view v;
        if (!ParseDirectValue(value, &sn, &v)) return;
      }
      if (sn >= S) {
        report->records_skipped++;
        return;
      }
      status = kvs->Put(key, value, false);
      report->records_copied++;
    });
    TANDEM_RETURN_IF_ERROR(status);
    TANDEM_RETURN_IF_ERROR(scanned.status());

    // Drop any version the live WALs show was written at or after S.
    std::vector<std::string> wals = kvfs_->List("wal/");
    for (const auto& name : wals) {
      Status st = ReplayWalFile(*kvfs_, name, S - 1, [&](WalRecord&& r) {
        if (r.sn < S || r.op != WalOp::kPut) return;
        bool existed = false;
        if (kvs->Delete(VersionedKey(r.key, r.sn), &existed).ok() && existed) report->trimmed++;
        bool deleted = false;
        Status ds = kvs->DeleteIf(
            DirectKey(r.key),
            [&](std::string_view stored) {
              SeqNum sn;
              std::string_view v;
              return ParseDirectValue(stored, &sn, &v) && sn >= S;
            },
            &deleted);
        if (ds.ok() && deleted) report->trimmed++;
      });
      if (!st.ok() && !st.IsNotFound()) return st;
    }

    // Fill in values a concurrent rename moved past the scan position.
    std::vector<VisibleEntry> visible;
    TANDEM_RETURN_IF_ERROR(CollectVisible(view, "", std::nullopt, S, &visible));
    for (const auto& e : visible) {
      bool present = false;
      std::string stored;
      if (e.kind == EntryKind::kVersioned) present = kvs->Contains(VersionedKey(e.key, e.sn));
      if (!present && kvs->Get(DirectKey(e.key), &stored).ok()) {
        SeqNum sn;
        std::string_view v;
        present = ParseDirectValue(stored, &sn, &v) && sn == e.sn;
      }
      if (present) continue;
      TANDEM_ASSIGN_OR_RETURN(std::string value, FetchValue(e, S));
      if (e.kind == EntryKind::kVersioned) {
        TANDEM_RETURN_IF_ERROR(kvs->Put(VersionedKey(e.key, e.sn), value, false));
      } else {
        TANDEM_RETURN_IF_ERROR(kvs->Put(DirectKey(e.key), DirectValue(e.sn, value), false));
      }
      report->filled_in++;
    }
    TANDEM_RETURN_IF_ERROR(kvs->Sync());
    manifest.reset();
    fs.reset();
    TANDEM_RETURN_IF_ERROR(kvs->Close());
  }

  DbOptions options;
  options.config = config;
  options.env = target;
  return Db::Open(options);
}

}  // namespace tandem
