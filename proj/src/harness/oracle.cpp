#include "tandem/harness/oracle.hpp"

namespace tandem::harness {

SeqNum OracleDb::Put(std::string_view key, std::string_view value) {
  ++clock_;
  data_[std::string(key)].push_back(Version{clock_, std::string(value)});
  return clock_;
}

SeqNum OracleDb::Delete(std::string_view key) {
  ++clock_;
  data_[std::string(key)].push_back(Version{clock_, std::nullopt});
  return clock_;
}

std::optional<std::string> OracleDb::Get(std::string_view key) const { return GetAt(key, kMaxSeq); }

std::optional<std::string> OracleDb::GetAt(std::string_view key, SeqNum snapshot) const {
  auto it = data_.find(key);
  if (it == data_.end()) return std::nullopt;
  for (auto v = it->second.rbegin(); v != it->second.rend(); ++v) {
    if (v->sn < snapshot) return v->value;
  }
  return std::nullopt;
}

std::vector<OracleDb::KV> OracleDb::IterateAt(std::string_view from, const std::optional<std::string>& to,
                                              SeqNum snapshot) const {
  std::vector<KV> out;
  for (auto it = data_.lower_bound(from); it != data_.end(); ++it) {
    if (to && it->first > *to) break;
    if (auto v = GetAt(it->first, snapshot)) out.emplace_back(it->first, std::move(*v));
  }
  return out;
}

std::vector<OracleDb::KV> OracleDb::Iterate(std::string_view from, const std::optional<std::string>& to) const {
  return IterateAt(from, to, kMaxSeq);
}

SeqNum OracleDb::CreateSnapshot() {
  ++clock_;
  snapshots_.insert(clock_);
  return clock_;
}

void OracleDb::ReleaseSnapshot(SeqNum sn) {
  auto it = snapshots_.find(sn);
  if (it != snapshots_.end()) snapshots_.erase(it);
}

}  // namespace tandem::harness
