#include "tandem/manifest.hpp"

#include "tandem/coding.hpp"

namespace tandem {

namespace {

std::string SuperblockKey() { return std::string(1, kSuperTag) + kManifestFileName; }

}  // namespace

ManifestEdit ManifestEdit::AddSst(uint64_t id, int level, std::string min_key, std::string max_key) {
  ManifestEdit e;
  e.tag = Tag::kAddSst;
  e.id = id;
  e.level = level;
  e.min_key = std::move(min_key);
  e.max_key = std::move(max_key);
  return e;
}

ManifestEdit ManifestEdit::DropSst(uint64_t id) {
  ManifestEdit e;
  e.tag = Tag::kDropSst;
  e.id = id;
  return e;
}

ManifestEdit ManifestEdit::WalTruncate(SeqNum sn) {
  ManifestEdit e;
  e.tag = Tag::kWalTruncate;
  e.sn = sn;
  return e;
}

ManifestEdit ManifestEdit::ClockHwm(SeqNum sn) {
  ManifestEdit e;
  e.tag = Tag::kClockHwm;
  e.sn = sn;
  return e;
}

ManifestEdit ManifestEdit::CheckpointAdd(SeqNum sn, std::string dir) {
  ManifestEdit e;
  e.tag = Tag::kCheckpointAdd;
  e.sn = sn;
  e.dir = std::move(dir);
  return e;
}

ManifestEdit ManifestEdit::CheckpointDrop(SeqNum sn) {
  ManifestEdit e;
  e.tag = Tag::kCheckpointDrop;
  e.sn = sn;
  return e;
}

ManifestEdit ManifestEdit::Kvfs(KvfsEdit edit) {
  ManifestEdit e;
  e.tag = Tag::kKvfs;
  e.kvfs = std::move(edit);
  return e;
}

void EncodeManifestEdit(const ManifestEdit& e, std::string* out) {
  if (e.tag == ManifestEdit::Tag::kKvfs) {
    out->push_back(static_cast<char>(e.kvfs.tag));
    PutLengthPrefixed(out, e.kvfs.name);
    switch (e.kvfs.tag) {
      case KvfsEdit::Tag::kCreate:
        PutBE32(out, e.kvfs.extent);
        out->push_back(static_cast<char>(e.kvfs.kind));
        break;
      case KvfsEdit::Tag::kDelete:
        break;
      case KvfsEdit::Tag::kSeal:
        PutBE64(out, e.kvfs.length);
        break;
    }
    return;
  }
  out->push_back(static_cast<char>(e.tag));
  switch (e.tag) {
    case ManifestEdit::Tag::kAddSst:
      PutBE64(out, e.id);
      out->push_back(static_cast<char>(e.level));
      PutLengthPrefixed(out, e.min_key);
      PutLengthPrefixed(out, e.max_key);
      break;
    case ManifestEdit::Tag::kDropSst:
      PutBE64(out, e.id);
      break;
    case ManifestEdit::Tag::kWalTruncate:
    case ManifestEdit::Tag::kClockHwm:
    case ManifestEdit::Tag::kCheckpointDrop:
      PutBE64(out, e.sn);
      break;
    case ManifestEdit::Tag::kCheckpointAdd:
      PutBE64(out, e.sn);
      PutLengthPrefixed(out, e.dir);
      break;
    case ManifestEdit::Tag::kKvfs:
      break;
  }
}

bool DecodeManifestEdit(Decoder* in, ManifestEdit* e) {
  uint8_t tag;
  if (!in->GetU8(&tag)) return false;
  *e = ManifestEdit();
  std::string_view a, b;
  switch (tag) {
    case 0x01: {
      uint8_t level;
      e->tag = ManifestEdit::Tag::kAddSst;
      if (!in->GetBE64(&e->id) || !in->GetU8(&level) || !in->GetLengthPrefixed(&a) || !in->GetLengthPrefixed(&b)) {
        return false;
      }
      e->level = level;
      e->min_key = a;
      e->max_key = b;
      return true;
    }
    case 0x02:
      e->tag = ManifestEdit::Tag::kDropSst;
      return in->GetBE64(&e->id);
    case 0x03:
      e->tag = ManifestEdit::Tag::kWalTruncate;
      return in->GetBE64(&e->sn);
    case 0x04:
      e->tag = ManifestEdit::Tag::kClockHwm;
      return in->GetBE64(&e->sn);
    case 0x05:
      e->tag = ManifestEdit::Tag::kCheckpointAdd;
      if (!in->GetBE64(&e->sn) || !in->GetLengthPrefixed(&a)) return false;
      e->dir = a;
      return true;
    case 0x06:
      e->tag = ManifestEdit::Tag::kCheckpointDrop;
      return in->GetBE64(&e->sn);
    case 0x10:
    case 0x11:
    case 0x12: {
      e->tag = ManifestEdit::Tag::kKvfs;
      e->kvfs.tag = static_cast<KvfsEdit::Tag>(tag);
      if (!in->GetLengthPrefixed(&a)) return false;
      e->kvfs.name = a;
      if (tag == 0x10) {
        uint8_t kind;
        if (!in->GetBE32(&e->kvfs.extent) || !in->GetU8(&kind) || kind < 1 || kind > 3) return false;
        e->kvfs.kind = static_cast<FileKind>(kind);
      } else if (tag == 0x12) {
        return in->GetBE64(&e->kvfs.length);
      }
      return true;
    }
    default:
      return false;
  }
}

void ManifestState::Apply(const ManifestEdit& e) {
  switch (e.tag) {
    case ManifestEdit::Tag::kAddSst:
      ssts[e.id] = SstRecord{e.id, e.level, e.min_key, e.max_key};
      break;
    case ManifestEdit::Tag::kDropSst:
      ssts.erase(e.id);
      break;
    case ManifestEdit::Tag::kWalTruncate:
      wal_truncate_sn = std::max(wal_truncate_sn, e.sn);
      break;
    case ManifestEdit::Tag::kClockHwm:
      clock_hwm = std::max(clock_hwm, e.sn);
      break;
    case ManifestEdit::Tag::kCheckpointAdd:
      checkpoints[e.sn] = e.dir;
      break;
    case ManifestEdit::Tag::kCheckpointDrop:
      checkpoints.erase(e.sn);
      break;
    case ManifestEdit::Tag::kKvfs:
      break;
  }
}

size_t ReplayManifest(std::string_view data, const std::function<void(const ManifestEdit&)>& fn) {
  Decoder d(data);
  size_t valid = 0;
  std::vector<ManifestEdit> batch;
  while (d.remaining() >= 8) {
    uint32_t len, crc;
    std::string_view payload;
    d.GetBE32(&len);
    d.GetBE32(&crc);
    if (!d.GetBytes(len, &payload) || Crc32c(payload) != crc) break;
    Decoder p(payload);
    batch.clear();
    bool ok = true;
    while (!p.empty()) {
      ManifestEdit e;
      if (!DecodeManifestEdit(&p, &e)) {
        ok = false;
        break;
      }
      batch.push_back(std::move(e));
    }
    if (!ok) break;
    for (const auto& e : batch) fn(e);
    valid = data.size() - d.remaining();
  }
  return valid;
}

Result<std::unique_ptr<Manifest>> Manifest::Open(Kvfs* fs, ManifestState* state, bool* created) {
  LogStore* kvs = fs->kvs();
  std::string super;
  Status s = kvs->Get(SuperblockKey(), &super);
  if (s.IsNotFound()) {
    TANDEM_ASSIGN_OR_RETURN(auto writer, fs->Create(kManifestFileName, FileKind::kManifest));
    std::string sb;
    PutLengthPrefixed(&sb, kManifestFileName);
    PutBE32(&sb, writer->extent());
    TANDEM_RETURN_IF_ERROR(kvs->Put(SuperblockKey(), sb, false));
    TANDEM_RETURN_IF_ERROR(kvs->Sync());
    if (created) *created = true;
    *state = ManifestState();
    return std::unique_ptr<Manifest>(new Manifest(fs, std::move(writer)));
  }
  TANDEM_RETURN_IF_ERROR(s);
  Decoder d(super);
  std::string_view name;
  ExtentId extent;
  if (!d.GetLengthPrefixed(&name) || !d.GetBE32(&extent)) return Status::Corruption("bad superblock");
  TANDEM_RETURN_IF_ERROR(fs->Adopt(std::string(name), extent, FileKind::kManifest));
  TANDEM_RETURN_IF_ERROR(fs->ProbeLength(std::string(name)));
  std::string data;
  TANDEM_RETURN_IF_ERROR(fs->ReadAll(std::string(name), &data));
  *state = ManifestState();
  size_t valid = ReplayManifest(data, [&](const ManifestEdit& e) {
    if (e.tag == ManifestEdit::Tag::kKvfs) {
      fs->ApplyEdit(e.kvfs);
    } else {
      state->Apply(e);
    }
  });
  TANDEM_ASSIGN_OR_RETURN(auto writer, fs->OpenAppender(std::string(name), std::string_view(data).substr(0, valid)));
  if (created) *created = false;
  return std::unique_ptr<Manifest>(new Manifest(fs, std::move(writer)));
}

Status Manifest::Log(const std::vector<ManifestEdit>& batch) {
  std::string payload;
  for (const auto& e : batch) EncodeManifestEdit(e, &payload);
  std::string rec;
  PutBE32(&rec, static_cast<uint32_t>(payload.size()));
  PutBE32(&rec, Crc32c(payload));
  rec.append(payload);
  std::lock_guard lock(mu_);
  TANDEM_RETURN_IF_ERROR(writer_->Append(rec));
  TANDEM_RETURN_IF_ERROR(writer_->Sync());
  ++batches_;
  return Status::OK();
}

uint64_t Manifest::batches_logged() const {
  std::lock_guard lock(mu_);
  return batches_;
}

uint64_t Manifest::size_bytes() const {
  std::lock_guard lock(mu_);
  return writer_->length();
}

}  // namespace tandem
