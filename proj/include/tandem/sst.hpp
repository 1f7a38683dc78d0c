#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tandem/bloom.hpp"
#include "tandem/format.hpp"
#include "tandem/kvfs.hpp"
#include "tandem/status.hpp"

namespace tandem {

// File layout (all data blocks exactly kSstBlockSize bytes, zero padded):
//   block:  count_be16 { key_len_be16 key sn_be64 kind_u8 }*
//   meta:   num_blocks_be32 num_entries_be64 min_key max_key
//           { last_key_of_block }* bloom          (keys/bloom u32-length-prefixed)
//   footer: meta_offset_be64 meta_len_be64 "SST1"
// Entries are sorted by (key asc, sn desc). The Bloom filter holds exactly
// the keys having at least one versioned or tombstone entry.
inline constexpr size_t kSstBlockSize = 4096;
inline constexpr size_t kSstFooterSize = 20;

struct SstProperties {
  uint64_t num_entries = 0;
  uint32_t num_blocks = 0;
  uint64_t bloom_members = 0;  // set by the builder only; not stored in the file
  std::string min_key;
  std::string max_key;
  uint64_t file_size = 0;
};

class SstBuilder {
 public:
  explicit SstBuilder(std::unique_ptr<KvfsWriter> writer) : writer_(std::move(writer)) {}

  // InvalidArgument if the entry does not sort after the previous one.
  Status Add(const LsmEntry& entry);
  // Writes meta and footer and syncs the file. The caller seals it.
  Result<SstProperties> Finish();

  uint64_t num_entries() const { return props_.num_entries; }
  uint64_t estimated_size() const { return uint64_t{props_.num_blocks} * kSstBlockSize + block_.size(); }
  KvfsWriter& writer() { return *writer_; }

 private:
  Status FlushBlock();

  std::unique_ptr<KvfsWriter> writer_;
  std::string block_;
  uint16_t block_count_ = 0;
  std::vector<std::string> last_keys_;
  BloomFilterBuilder bloom_;
  std::string last_key_;
  SeqNum last_sn_ = kNoSeq;
  bool has_last_ = false;
  std::string last_bloom_key_;
  bool has_bloom_key_ = false;
  SstProperties props_;
};

// Sealed SST file with its index and Bloom filter pinned in memory.
class SstReader {
 public:
  static Result<std::shared_ptr<SstReader>> Open(const Kvfs* fs, const std::string& name);

  bool InBloom(BloomHash h) const { return bloom_.MayContain(h); }
  bool InBloom(std::string_view key) const { return InBloom(BloomHash::Of(key)); }

  // Highest-sn entry for key. Reads exactly one data block.
  Result<std::optional<LsmEntry>> SearchLatest(std::string_view key, uint64_t* block_reads) const;
  // Highest entry for key with entry.sn < sn.
  Result<std::optional<LsmEntry>> SearchLatestBefore(std::string_view key, SeqNum sn,
                                                     uint64_t* block_reads) const;

  // Entries with key in [from, to] (to unbounded when nullopt).
  Status ReadRange(std::string_view from, const std::optional<std::string>& to,
                   std::vector<LsmEntry>* out, uint64_t* block_reads) const;
  Status ReadAll(std::vector<LsmEntry>* out) const;

  bool Overlaps(std::string_view from, const std::optional<std::string>& to) const {
    if (props_.num_entries == 0) return false;
    if (to && *to < props_.min_key) return false;
    return from <= props_.max_key;
  }
  bool Covers(std::string_view key) const {
    return props_.num_entries > 0 && key >= props_.min_key && key <= props_.max_key;
  }

  const SstProperties& properties() const { return props_; }
  const std::string& name() const { return name_; }
  const BloomFilter& bloom() const { return bloom_; }

 private:
  SstReader() = default;
  Status ReadBlock(uint32_t index, std::vector<LsmEntry>* out) const;
  static Status DecodeBlock(std::string_view block, std::vector<LsmEntry>* out);
  uint32_t FirstBlockFor(std::string_view key) const;

  const Kvfs* fs_ = nullptr;
  std::string name_;
  SstProperties props_;
  std::vector<std::string> last_keys_;
  BloomFilter bloom_;
};

}  // namespace tandem
