#include <algorithm>
#include <charconv>

#include "tandem/db.hpp"

namespace tandem {

namespace {

constexpr std::string_view kSstPrefix = "sst/";
constexpr std::string_view kWalPrefix = "wal/";
constexpr std::string_view kCkptPrefix = "ckpt/";

bool ParseNumber(std::string_view s, uint64_t* out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), *out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

Status Db::Recover(RecoveryReport* report) {
  *report = RecoveryReport();
  TANDEM_ASSIGN_OR_RETURN(kvs_, LogStore::Open(env_, config_.kvs));
  kvfs_ = std::make_unique<Kvfs>(kvs_.get(), KvfsOptions{config_.readahead_workers});
  ManifestState state;
  bool created = false;
  TANDEM_ASSIGN_OR_RETURN(manifest_, Manifest::Open(kvfs_.get(), &state, &created));
  kvfs_->SetMetadataLog(manifest_.get());
  report->created = created;
  TANDEM_RETURN_IF_ERROR(kvfs_->FinishRecovery());

  // Live LSM files.
  std::map<uint64_t, SstFilePtr> opened;
  std::vector<SstFilePtr> live;
  uint64_t max_id = 0;
  for (const auto& [id, rec] : state.ssts) {
    SstFilePtr f;
    Status s = InstallFile(id, rec.level, &f);
    if (!s.ok()) return Status::Corruption("unrecoverable: sst " + std::to_string(id) + ": " + s.ToString());
    opened[id] = f;
    live.push_back(f);
    max_id = std::max(max_id, id);
  }
  files_ = std::make_shared<LevelSet>()->Apply({}, live);

  // Checkpoints pin their own file lists.
  SeqNum max_ckpt_sn = kNoSeq;
  for (const auto& [sn, dir] : state.checkpoints) {
    TANDEM_ASSIGN_OR_RETURN(auto set, ReadCheckpointList(dir, &opened));
    checkpoints_[dir] = CheckpointRecord{Checkpoint{sn, dir}, set};
    snapshots_.insert(sn);
    max_ckpt_sn = std::max(max_ckpt_sn, sn);
    report->checkpoints_reinstalled++;
  }
  for (const auto& [id, f] : opened) {
    max_id = std::max(max_id, id);
    if (!state.ssts.count(id)) obsolete_.emplace_back(f, id);
  }
  opened.clear();
  live.clear();

  // Files left behind by an interrupted flush, compaction or purge.
  for (const auto& name : kvfs_->List(kSstPrefix)) {
    uint64_t id = 0;
    if (!ParseNumber(std::string_view(name).substr(kSstPrefix.size()), &id)) continue;
    max_id = std::max(max_id, id);
    bool referenced = state.ssts.count(id) > 0;
    if (!referenced) {
      std::lock_guard lock(state_mu_);
      for (const auto& o : obsolete_) referenced |= o.second == id;
    }
    if (referenced) continue;
    TANDEM_RETURN_IF_ERROR(kvfs_->Delete(name));
    report->garbage_files_deleted++;
  }
  for (const auto& name : kvfs_->List(kCkptPrefix)) {
    std::string_view rest = std::string_view(name).substr(kCkptPrefix.size());
    std::string dir(rest.substr(0, rest.find('/')));
    bool known = std::any_of(state.checkpoints.begin(), state.checkpoints.end(),
                             [&](const auto& c) { return c.second == dir; });
    if (known) continue;
    TANDEM_RETURN_IF_ERROR(kvfs_->Delete(name));
    report->garbage_files_deleted++;
  }

  // WAL files sort by number since names are zero padded.
  std::vector<std::string> wals = kvfs_->List(kWalPrefix);
  std::sort(wals.begin(), wals.end());
  for (const auto& name : wals) {
    uint64_t number = 0;
    if (ParseNumber(std::string_view(name).substr(kWalPrefix.size()), &number)) max_id = std::max(max_id, number);
  }
  next_file_ = max_id + 1;

  std::vector<WalRecord> records;
  for (const auto& name : wals) {
    TANDEM_RETURN_IF_ERROR(ReplayWalFile(*kvfs_, name, state.wal_truncate_sn,
                                         [&](WalRecord&& r) { records.push_back(std::move(r)); }));
  }
  SeqNum max_wal_sn = kNoSeq;
  for (const auto& r : records) max_wal_sn = std::max(max_wal_sn, r.sn);
  const SeqNum before = std::max({state.clock_hwm, max_wal_sn, max_ckpt_sn});
  report->clock_before = before;

  // Undo: an unflushed record may have left values behind when a flush was
  // interrupted after writing them.
  for (const auto& r : records) {
    if (r.op != WalOp::kPut) continue;
    bool existed = false;
    TANDEM_RETURN_IF_ERROR(kvs_->Delete(VersionedKey(r.key, r.sn), &existed));
    if (existed) report->orphans_deleted++;
    bool deleted = false;
    TANDEM_RETURN_IF_ERROR(kvs_->DeleteIf(
        DirectKey(r.key),
        [&](std::string_view stored) {
          SeqNum sn;
          std::string_view v;
          return ParseDirectValue(stored, &sn, &v) && sn == r.sn;
        },
        &deleted));
    if (deleted) report->orphans_deleted++;
  }

  // Redo under fresh sns so no replayed version can collide with an undone one.
  SeqNum clock = before + 1;
  mem_ = std::make_shared<Memtable>();
  TANDEM_RETURN_IF_ERROR(StartWal(&wal_));
  for (auto& r : records) {
    r.sn = ++clock;
    TANDEM_RETURN_IF_ERROR(wal_->Append(r));
    mem_->Insert(r.key, r.sn, r.op == WalOp::kPut ? MemOp::kPut : MemOp::kDelete, r.value);
  }
  TANDEM_RETURN_IF_ERROR(wal_->Sync());
  TANDEM_RETURN_IF_ERROR(manifest_->Log({ManifestEdit::WalTruncate(std::max(state.wal_truncate_sn, max_wal_sn)),
                                         ManifestEdit::ClockHwm(clock)}));
  for (const auto& name : wals) TANDEM_RETURN_IF_ERROR(kvfs_->Delete(name));
  TANDEM_RETURN_IF_ERROR(kvs_->Sync());

  clock_ = clock;
  report->clock_after = clock;
  report->wal_records_replayed = records.size();
  return Status::OK();
}

}  // namespace tandem
