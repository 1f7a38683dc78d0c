#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "tandem/db.hpp"

namespace tandem::harness {

struct AuditResult {
  std::vector<std::string> violations;
  uint64_t keys_in_both_modes = 0;  // KVS half: keys with a D record and V records
  // D and V records of the same sn: a rename interrupted by a crash. Reads
  // are unaffected and the next compaction of the entry finishes it.
  uint64_t pending_renames = 0;

  bool ok() const { return violations.empty(); }
  std::string ToJson() const;
};

// Direct is older. KVS half: for a key in both namespaces, the D record's
// sn is below every V record's sn. LSM half: every direct entry of a key
// sits at a level at or below (numerically >=) each of its versioned entries.
// A V record with the D record's own sn is counted in pending_renames.
AuditResult AuditInvariant1(Db& db);
AuditResult AuditKvsHalf(LogStore& kvs);
AuditResult AuditLsmHalf(const LevelSet& files);

// Live D/V records against the versions reachable from pinned LSM files.
// Each versioned entry expects its V record; each key with direct entries
// expects one D record holding the newest of them. Requires a flushed db.
struct SpaceAudit {
  uint64_t live_value_records = 0;
  uint64_t reachable_versions = 0;
  std::vector<std::string> orphans;  // records nothing references
  std::vector<std::string> missing;  // referenced versions without a record

  bool ok() const { return orphans.empty() && missing.empty() && live_value_records == reachable_versions; }
  std::string ToJson() const;
};

SpaceAudit AuditSpace(Db& db);

// Zero-false-negative check: every versioned or tombstone key of a file
// must test positive in its Bloom filter. Call from a commit hook so each
// file is seen before a later compaction can drop it.
struct BloomAudit {
  uint64_t files_checked = 0;
  uint64_t members_checked = 0;
  uint64_t false_negatives = 0;
  std::vector<std::string> examples;

  void CheckNewFiles(const LevelSet& files);
  void Merge(const BloomAudit& other);
  // Ids restart meaning after a reopen, so forget them.
  void ForgetSeen() { seen_.clear(); }

 private:
  std::set<uint64_t> seen_;
};

// Printable form of a store key for reports.
std::string DescribeStoreKey(std::string_view key);

}  // namespace tandem::harness
