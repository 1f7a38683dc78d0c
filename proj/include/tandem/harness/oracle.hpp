#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tandem/format.hpp"

namespace tandem::harness {

// Brute-force multiversion map. A read at snapshot S sees the newest
// version with sn < S.
class OracleDb {
 public:
  using KV = std::pair<std::string, std::string>;

  SeqNum Put(std::string_view key, std::string_view value);
  SeqNum Delete(std::string_view key);
  std::optional<std::string> Get(std::string_view key) const;
  std::optional<std::string> GetAt(std::string_view key, SeqNum snapshot) const;
  std::vector<KV> IterateAt(std::string_view from, const std::optional<std::string>& to, SeqNum snapshot) const;
  std::vector<KV> Iterate(std::string_view from, const std::optional<std::string>& to) const;

  SeqNum CreateSnapshot();
  void ReleaseSnapshot(SeqNum sn);
  // A crash loses every snapshot.
  void DropAllSnapshots() { snapshots_.clear(); }
  const std::multiset<SeqNum>& snapshots() const { return snapshots_; }

  SeqNum clock() const { return clock_; }
  size_t key_count() const { return data_.size(); }

 private:
  struct Version {
    SeqNum sn;
    std::optional<std::string> value;  // nullopt = tombstone
  };

  std::map<std::string, std::vector<Version>, std::less<>> data_;  // versions ascending by sn
  std::multiset<SeqNum> snapshots_;
  SeqNum clock_ = kNoSeq;
};

}  // namespace tandem::harness
