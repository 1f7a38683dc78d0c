#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "tandem/format.hpp"
#include "tandem/kvfs.hpp"
#include "tandem/status.hpp"

namespace tandem {

struct ManifestEdit {
  enum class Tag : uint8_t {
    kAddSst = 0x01,
    kDropSst = 0x02,
    kWalTruncate = 0x03,
    kClockHwm = 0x04,
    kCheckpointAdd = 0x05,
    kCheckpointDrop = 0x06,
    kKvfs = 0x10,  // kvfs edits keep their own tags (0x10..0x12) on disk
  };
  Tag tag = Tag::kAddSst;
  uint64_t id = 0;
  int level = 0;
  std::string min_key;
  std::string max_key;
  SeqNum sn = kNoSeq;
  std::string dir;
  KvfsEdit kvfs;

  static ManifestEdit AddSst(uint64_t id, int level, std::string min_key, std::string max_key);
  static ManifestEdit DropSst(uint64_t id);
  static ManifestEdit WalTruncate(SeqNum sn);
  static ManifestEdit ClockHwm(SeqNum sn);
  static ManifestEdit CheckpointAdd(SeqNum sn, std::string dir);
  static ManifestEdit CheckpointDrop(SeqNum sn);
  static ManifestEdit Kvfs(KvfsEdit edit);
};

void EncodeManifestEdit(const ManifestEdit& edit, std::string* out);
// Decodes one edit from the front of *in.
bool DecodeManifestEdit(Decoder* in, ManifestEdit* edit);

struct SstRecord {
  uint64_t id = 0;
  int level = 0;
  std::string min_key;
  std::string max_key;

  friend bool operator==(const SstRecord&, const SstRecord&) = default;
};

// Engine metadata reconstructed from the edit log. kvfs edits are applied
// to the Kvfs directory instead.
struct ManifestState {
  std::map<uint64_t, SstRecord> ssts;
  SeqNum wal_truncate_sn = kNoSeq;
  SeqNum clock_hwm = kNoSeq;
  std::map<SeqNum, std::string> checkpoints;

  void Apply(const ManifestEdit& edit);
  friend bool operator==(const ManifestState&, const ManifestState&) = default;
};

inline constexpr const char* kManifestFileName = "MANIFEST";

// Metadata log stored as a kvfs file. Its location is kept in a superblock
// record of the log store. Record: [len_be32][crc32c][edit]* ; one record
// per batch, so a batch commits atomically.
class Manifest final : public MetadataLog {
 public:
  // Replays an existing manifest into *state and fs, or creates an empty
  // one. Must run before any other kvfs file is created.
  static Result<std::unique_ptr<Manifest>> Open(Kvfs* fs, ManifestState* state, bool* created = nullptr);

  // Durable on return.
  Status Log(const std::vector<ManifestEdit>& batch);
  Status LogKvfsEdit(const KvfsEdit& edit) override { return Log({ManifestEdit::Kvfs(edit)}); }

  uint64_t batches_logged() const;
  uint64_t size_bytes() const;

 private:
  Manifest(Kvfs* fs, std::unique_ptr<KvfsWriter> writer) : fs_(fs), writer_(std::move(writer)) {}

  Kvfs* fs_;
  mutable std::mutex mu_;
  std::unique_ptr<KvfsWriter> writer_;
  uint64_t batches_ = 0;
};

// Parses a manifest image; stops at the first torn record. Returns the
// length of the valid prefix.
size_t ReplayManifest(std::string_view data, const std::function<void(const ManifestEdit&)>& fn);

}  // namespace tandem
