#include "tandem/sst.hpp"

#include <algorithm>

#include "tandem/coding.hpp"

namespace tandem {

namespace {
constexpr char kSstMagic[4] = {'S', 'S', 'T', '1'};

size_t EncodedSize(const LsmEntry& e) { return 2 + e.key.size() + 8 + 1; }
}  // namespace

// ---------------------------------------------------------------------------
// SstBuilder

Status SstBuilder::Add(const LsmEntry& entry) {
  if (entry.key.empty() || entry.key.size() > kMaxUserKeyBytes) return Status::InvalidArgument("key size");
  if (has_last_) {
    int c = std::string_view(entry.key).compare(last_key_);
    if (c < 0 || (c == 0 && entry.sn >= last_sn_)) {
      return Status::InvalidArgument("unsorted input at key " + entry.key);
    }
  }
  if (2 + block_.size() + EncodedSize(entry) > kSstBlockSize) TANDEM_RETURN_IF_ERROR(FlushBlock());
  PutBE16(&block_, static_cast<uint16_t>(entry.key.size()));
  block_.append(entry.key);
  PutBE64(&block_, entry.sn);
  block_.push_back(static_cast<char>(entry.kind));
  ++block_count_;

  if (entry.kind != EntryKind::kDirect && !(has_bloom_key_ && last_bloom_key_ == entry.key)) {
    bloom_.Add(BloomHash::Of(entry.key));
    last_bloom_key_ = entry.key;
    has_bloom_key_ = true;
    ++props_.bloom_members;
  }
  if (props_.num_entries == 0) props_.min_key = entry.key;
  props_.max_key = entry.key;
  ++props_.num_entries;
  last_key_ = entry.key;
  last_sn_ = entry.sn;
  has_last_ = true;
  return Status::OK();
}

Status SstBuilder::FlushBlock() {
  if (block_count_ == 0) return Status::OK();
  std::string out;
  out.reserve(kSstBlockSize);
  PutBE16(&out, block_count_);
  out.append(block_);
  out.resize(kSstBlockSize, '\0');
  TANDEM_RETURN_IF_ERROR(writer_->Append(out));
  last_keys_.push_back(last_key_);
  ++props_.num_blocks;
  block_.clear();
  block_count_ = 0;
  return Status::OK();
}

Result<SstProperties> SstBuilder::Finish() {
  TANDEM_RETURN_IF_ERROR(FlushBlock());
  const uint64_t meta_offset = writer_->length();
  std::string meta;
  PutBE32(&meta, props_.num_blocks);
  PutBE64(&meta, props_.num_entries);
  PutLengthPrefixed(&meta, props_.min_key);
  PutLengthPrefixed(&meta, props_.max_key);
  for (const auto& k : last_keys_) PutLengthPrefixed(&meta, k);
  PutLengthPrefixed(&meta, bloom_.Finish());
  std::string footer;
  PutBE64(&footer, meta_offset);
  PutBE64(&footer, meta.size());
  footer.append(kSstMagic, 4);
  TANDEM_RETURN_IF_ERROR(writer_->Append(meta));
  TANDEM_RETURN_IF_ERROR(writer_->Append(footer));
  TANDEM_RETURN_IF_ERROR(writer_->Sync());
  props_.file_size = writer_->length();
  return props_;
}

// ---------------------------------------------------------------------------
// SstReader

Result<std::shared_ptr<SstReader>> SstReader::Open(const Kvfs* fs, const std::string& name) {
  TANDEM_ASSIGN_OR_RETURN(KvfsFileInfo info, fs->Stat(name));
  if (info.length < kSstFooterSize) return Status::Corruption("sst too short: " + name);
  std::string footer;
  TANDEM_RETURN_IF_ERROR(fs->ReadAt(name, info.length - kSstFooterSize, kSstFooterSize, &footer));
  if (std::string_view(footer).substr(16) != std::string_view(kSstMagic, 4)) {
    return Status::Corruption("bad sst magic: " + name);
  }
  uint64_t meta_offset = DecodeBE64(footer.data());
  uint64_t meta_len = DecodeBE64(footer.data() + 8);
  if (meta_offset + meta_len + kSstFooterSize != info.length) return Status::Corruption("bad sst footer: " + name);
  std::string meta;
  TANDEM_RETURN_IF_ERROR(fs->ReadAt(name, meta_offset, meta_len, &meta));

  std::shared_ptr<SstReader> r(new SstReader());
  r->fs_ = fs;
  r->name_ = name;
  Decoder d(meta);
  std::string_view min_key, max_key, bloom;
  if (!d.GetBE32(&r->props_.num_blocks) || !d.GetBE64(&r->props_.num_entries) || !d.GetLengthPrefixed(&min_key) ||
      !d.GetLengthPrefixed(&max_key)) {
    return Status::Corruption("bad sst meta: " + name);
  }
  r->props_.min_key = min_key;
  r->props_.max_key = max_key;
  r->last_keys_.reserve(r->props_.num_blocks);
  for (uint32_t i = 0; i < r->props_.num_blocks; ++i) {
    std::string_view k;
    if (!d.GetLengthPrefixed(&k)) return Status::Corruption("bad sst index: " + name);
    r->last_keys_.emplace_back(k);
  }
  if (!d.GetLengthPrefixed(&bloom)) return Status::Corruption("bad sst bloom: " + name);
  r->bloom_ = BloomFilter(std::string(bloom));
  r->props_.file_size = info.length;
  return r;
}

Status SstReader::DecodeBlock(std::string_view block, std::vector<LsmEntry>* out) {
  Decoder d(block);
  uint16_t count;
  if (!d.GetBE16(&count)) return Status::Corruption("short sst block");
  for (uint16_t i = 0; i < count; ++i) {
    uint16_t klen;
    std::string_view key;
    uint64_t sn;
    uint8_t kind;
    if (!d.GetBE16(&klen) || !d.GetBytes(klen, &key) || !d.GetBE64(&sn) || !d.GetU8(&kind) || kind > 2) {
      return Status::Corruption("bad sst entry");
    }
    out->push_back(LsmEntry{std::string(key), sn, static_cast<EntryKind>(kind)});
  }
  return Status::OK();
}

Status SstReader::ReadBlock(uint32_t index, std::vector<LsmEntry>* out) const {
  std::string block;
  TANDEM_RETURN_IF_ERROR(fs_->ReadAt(name_, uint64_t{index} * kSstBlockSize, kSstBlockSize, &block));
  return DecodeBlock(block, out);
}

uint32_t SstReader::FirstBlockFor(std::string_view key) const {
  auto it = std::lower_bound(last_keys_.begin(), last_keys_.end(), key,
                             [](const std::string& a, std::string_view b) { return a < b; });
  return static_cast<uint32_t>(it - last_keys_.begin());
}

Result<std::optional<LsmEntry>> SstReader::SearchLatest(std::string_view key, uint64_t* block_reads) const {
  uint32_t b = FirstBlockFor(key);
  if (b >= props_.num_blocks) return std::optional<LsmEntry>();
  std::vector<LsmEntry> entries;
  TANDEM_RETURN_IF_ERROR(ReadBlock(b, &entries));
  if (block_reads) ++*block_reads;
  for (auto& e : entries) {
    if (e.key == key) return std::optional<LsmEntry>(std::move(e));
    if (std::string_view(e.key) > key) break;
  }
  return std::optional<LsmEntry>();
}

Result<std::optional<LsmEntry>> SstReader::SearchLatestBefore(std::string_view key, SeqNum sn,
                                                              uint64_t* block_reads) const {
  std::vector<LsmEntry> entries;
  for (uint32_t b = FirstBlockFor(key); b < props_.num_blocks; ++b) {
    entries.clear();
    TANDEM_RETURN_IF_ERROR(ReadBlock(b, &entries));
    if (block_reads) ++*block_reads;
    for (auto& e : entries) {
      int c = std::string_view(e.key).compare(key);
      if (c < 0) continue;
      if (c > 0) return std::optional<LsmEntry>();
      if (e.sn < sn) return std::optional<LsmEntry>(std::move(e));
    }
    if (last_keys_[b] != key) break;
  }
  return std::optional<LsmEntry>();
}

Status SstReader::ReadRange(std::string_view from, const std::optional<std::string>& to,
                            std::vector<LsmEntry>* out, uint64_t* block_reads) const {
  uint32_t first = FirstBlockFor(from);
  if (first >= props_.num_blocks) return Status::OK();
  uint32_t last = props_.num_blocks - 1;
  if (to) {
    // Last block that can hold keys <= to: the first block whose last key >= to.
    uint32_t b = FirstBlockFor(*to);
    last = std::min(last, b);
  }
  std::string data;
  TANDEM_RETURN_IF_ERROR(fs_->ReadAt(name_, uint64_t{first} * kSstBlockSize,
                                     size_t{last - first + 1} * kSstBlockSize, &data));
  if (block_reads) *block_reads += last - first + 1;
  std::vector<LsmEntry> entries;
  for (uint32_t b = first; b <= last; ++b) {
    entries.clear();
    TANDEM_RETURN_IF_ERROR(
        DecodeBlock(std::string_view(data).substr(size_t{b - first} * kSstBlockSize, kSstBlockSize), &entries));
    for (auto& e : entries) {
      if (std::string_view(e.key) < from) continue;
      if (to && e.key > *to) return Status::OK();
      out->push_back(std::move(e));
    }
  }
  return Status::OK();
}

Status SstReader::ReadAll(std::vector<LsmEntry>* out) const {
  if (props_.num_blocks == 0) return Status::OK();
  std::string data;
  TANDEM_RETURN_IF_ERROR(fs_->ReadAt(name_, 0, size_t{props_.num_blocks} * kSstBlockSize, &data));
  out->reserve(out->size() + props_.num_entries);
  for (uint32_t b = 0; b < props_.num_blocks; ++b) {
    TANDEM_RETURN_IF_ERROR(DecodeBlock(std::string_view(data).substr(size_t{b} * kSstBlockSize, kSstBlockSize), out));
  }
  return Status::OK();
}

}  // namespace tandem
