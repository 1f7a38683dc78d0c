#include "tandem/wal.hpp"

#include "tandem/coding.hpp"

namespace tandem {

std::string EncodeWalRecord(const WalRecord& r) {
  std::string payload;
  payload.reserve(17 + r.key.size() + r.value.size());
  payload.push_back(static_cast<char>(r.op));
  PutBE64(&payload, r.sn);
  PutLengthPrefixed(&payload, r.key);
  PutLengthPrefixed(&payload, r.value);
  std::string out;
  out.reserve(8 + payload.size());
  PutBE32(&out, static_cast<uint32_t>(payload.size()));
  PutBE32(&out, Crc32c(payload));
  out.append(payload);
  return out;
}

Status WalWriter::Append(const WalRecord& r) {
  if (r.sn <= last_sn_) return Status::InvalidArgument("wal records out of order");
  TANDEM_RETURN_IF_ERROR(file_->Append(EncodeWalRecord(r)));
  last_sn_ = r.sn;
  return Status::OK();
}

Status WalWriter::Sync() { return file_->Sync(); }

Status ReplayWal(std::string_view data, SeqNum from_sn, const std::function<void(WalRecord&&)>& fn) {
  Decoder d(data);
  while (d.remaining() >= 8) {
    uint32_t len, crc;
    std::string_view payload;
    d.GetBE32(&len);
    d.GetBE32(&crc);
    if (!d.GetBytes(len, &payload) || Crc32c(payload) != crc) break;
    Decoder p(payload);
    WalRecord r;
    uint8_t op;
    std::string_view key, value;
    if (!p.GetU8(&op) || op > 1 || !p.GetBE64(&r.sn) || !p.GetLengthPrefixed(&key) || !p.GetLengthPrefixed(&value) ||
        !p.empty()) {
      break;
    }
    if (r.sn <= from_sn) continue;
    r.op = static_cast<WalOp>(op);
    r.key = key;
    r.value = value;
    fn(std::move(r));
  }
  return Status::OK();
}

Status ReplayWalFile(const Kvfs& fs, const std::string& name, SeqNum from_sn,
                     const std::function<void(WalRecord&&)>& fn) {
  std::string data;
  Status s = fs.ReadAll(name, &data);
  // A block lost past the durable prefix shows up as corruption of the tail.
  if (s.IsCorruption()) {
    TANDEM_ASSIGN_OR_RETURN(KvfsFileInfo info, fs.Stat(name));
    const size_t bs = BlockSizeFor(info.kind);
    data.clear();
    std::string block;
    for (uint64_t off = 0; off < info.length; off += bs) {
      if (!fs.ReadAt(name, off, std::min<uint64_t>(bs, info.length - off), &block).ok()) break;
      data.append(block);
    }
  } else {
    TANDEM_RETURN_IF_ERROR(s);
  }
  return ReplayWal(data, from_sn, fn);
}

}  // namespace tandem
