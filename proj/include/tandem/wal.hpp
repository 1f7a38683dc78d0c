#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>

#include "tandem/format.hpp"
#include "tandem/kvfs.hpp"
#include "tandem/status.hpp"

namespace tandem {

enum class WalOp : uint8_t { kPut = 0, kDelete = 1 };

struct WalRecord {
  WalOp op = WalOp::kPut;
  SeqNum sn = kNoSeq;
  std::string key;
  std::string value;

  friend bool operator==(const WalRecord&, const WalRecord&) = default;
};

// [len_be32][crc32c of payload][payload]
// payload: op_u8 sn_be64 key_len_be32 key val_len_be32 val
std::string EncodeWalRecord(const WalRecord& r);

// Appends records to one kvfs file. Records must arrive in sn order.
class WalWriter {
 public:
  explicit WalWriter(std::unique_ptr<KvfsWriter> file) : file_(std::move(file)) {}

  Status Append(const WalRecord& r);
  Status Sync();
  const std::string& name() const { return file_->name(); }
  uint64_t length() const { return file_->length(); }
  SeqNum last_sn() const { return last_sn_; }

 private:
  std::unique_ptr<KvfsWriter> file_;
  SeqNum last_sn_ = kNoSeq;
};

// Decodes records with sn > from_sn in file order. A torn or corrupt record
// ends the log; everything before it is delivered.
Status ReplayWal(std::string_view data, SeqNum from_sn, const std::function<void(WalRecord&&)>& fn);
Status ReplayWalFile(const Kvfs& fs, const std::string& name, SeqNum from_sn,
                     const std::function<void(WalRecord&&)>& fn);

}  // namespace tandem
