#include "tandem/harness/audit.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "json.hpp"

namespace tandem::harness {

namespace {

constexpr size_t kMaxReported = 20;

void Report(std::vector<std::string>* out, std::string msg) {
  if (out->size() < kMaxReported) out->push_back(std::move(msg));
}

}  // namespace

std::string DescribeStoreKey(std::string_view key) {
  ParsedStoreKey p;
  if (!ParseStoreKey(key, &p)) return "raw:" + std::string(key.substr(0, 16));
  if (p.tag == kDirectTag) return "D|" + std::string(p.user_key);
  return "V|" + std::string(p.user_key) + "|" + std::to_string(p.sn);
}

std::string AuditResult::ToJson() const {
  nlohmann::ordered_json j;
  j["pass"] = ok();
  j["keys_in_both_modes"] = keys_in_both_modes;
  j["pending_renames"] = pending_renames;
  j["violations"] = violations;
  return j.dump();
}

std::string SpaceAudit::ToJson() const {
  nlohmann::ordered_json j;
  j["pass"] = ok();
  j["live_value_records"] = live_value_records;
  j["reachable_versions"] = reachable_versions;
  j["orphans"] = orphans;
  j["missing"] = missing;
  return j.dump();
}

AuditResult AuditKvsHalf(LogStore& kvs) {
  AuditResult result;
  std::map<std::string, SeqNum> direct;
  std::map<std::string, std::vector<SeqNum>> versioned;
  auto scanned = kvs.ScanUnordered([&](std::string_view key, std::string_view value) {
    ParsedStoreKey p;
    if (!ParseStoreKey(key, &p)) return;
    std::string user(p.user_key);
    if (p.tag == kDirectTag) {
      SeqNum sn;
      std::string_view v;
      if (!ParseDirectValue(value, &sn, &v)) {
        Report(&result.violations, "malformed direct record for " + user);
        return;
      }
      direct[user] = sn;
    } else {
      versioned[user].push_back(p.sn);
    }
  });
  if (!scanned.ok()) {
    result.violations.push_back("kvs scan: " + scanned.status().ToString());
    return result;
  }
  for (const auto& [key, dsn] : direct) {
    auto it = versioned.find(key);
    if (it == versioned.end()) continue;
    result.keys_in_both_modes++;
    for (SeqNum vsn : it->second) {
      if (vsn == dsn) {
        result.pending_renames++;
      } else if (vsn < dsn) {
        Report(&result.violations, "kvs: key " + key + " direct sn " + std::to_string(dsn) +
                                       " not older than versioned sn " + std::to_string(vsn));
      }
    }
  }
  return result;
}

AuditResult AuditLsmHalf(const LevelSet& files) {
  AuditResult result;
  struct Levels {
    int min_direct = kNumLevels;
    int max_versioned = -1;
  };
  std::map<std::string, Levels> keys;
  std::vector<LsmEntry> entries;
  for (const auto& f : files.AllFiles()) {
    entries.clear();
    Status s = f->reader->ReadAll(&entries);
    if (!s.ok()) {
      result.violations.push_back("sst " + std::to_string(f->id) + ": " + s.ToString());
      continue;
    }
    for (const auto& e : entries) {
      if (e.kind == EntryKind::kDirect) {
        auto& l = keys[e.key];
        l.min_direct = std::min(l.min_direct, f->level);
      } else if (e.kind == EntryKind::kVersioned) {
        auto& l = keys[e.key];
        l.max_versioned = std::max(l.max_versioned, f->level);
      }
    }
  }
  for (const auto& [key, l] : keys) {
    if (l.min_direct == kNumLevels || l.max_versioned < 0) continue;
    if (l.min_direct < l.max_versioned) {
      Report(&result.violations, "lsm: key " + key + " direct at L" + std::to_string(l.min_direct) +
                                     " above versioned at L" + std::to_string(l.max_versioned));
    }
  }
  return result;
}

AuditResult AuditInvariant1(Db& db) {
  AuditResult result = AuditKvsHalf(*db.kvs());
  AuditResult lsm = AuditLsmHalf(*db.current());
  result.violations.insert(result.violations.end(), lsm.violations.begin(), lsm.violations.end());
  return result;
}

SpaceAudit AuditSpace(Db& db) {
  SpaceAudit audit;
  std::set<std::string> expected_versioned;
  std::map<std::string, SeqNum, std::less<>> expected_direct;  // newest direct sn per key
  std::set<uint64_t> seen_files;
  std::vector<LsmEntry> entries;
  for (const auto& set : db.PinnedFileSets()) {
    for (const auto& f : set->AllFiles()) {
      if (!seen_files.insert(f->id).second) continue;
      entries.clear();
      Status s = f->reader->ReadAll(&entries);
      if (!s.ok()) {
        Report(&audit.missing, "sst " + std::to_string(f->id) + ": " + s.ToString());
        continue;
      }
      for (const auto& e : entries) {
        if (e.kind == EntryKind::kVersioned) {
          expected_versioned.insert(VersionedKey(e.key, e.sn));
        } else if (e.kind == EntryKind::kDirect) {
          auto [it, inserted] = expected_direct.emplace(e.key, e.sn);
          if (!inserted) it->second = std::max(it->second, e.sn);
        }
      }
    }
  }
  audit.reachable_versions = expected_versioned.size() + expected_direct.size();

  std::set<std::string> found_versioned;
  std::set<std::string> found_direct;
  auto scanned = db.kvs()->ScanUnordered([&](std::string_view key, std::string_view value) {
    ParsedStoreKey p;
    if (!ParseStoreKey(key, &p)) return;
    audit.live_value_records++;
    if (p.tag == kVersionedTag) {
      if (expected_versioned.count(std::string(key))) {
        found_versioned.emplace(key);
      } else {
        Report(&audit.orphans, DescribeStoreKey(key));
      }
      return;
    }
    SeqNum sn;
    std::string_view v;
    auto it = expected_direct.find(p.user_key);
    if (it != expected_direct.end() && ParseDirectValue(value, &sn, &v) && sn == it->second) {
      found_direct.emplace(p.user_key);
    } else {
      Report(&audit.orphans, DescribeStoreKey(key));
    }
  });
  if (!scanned.ok()) Report(&audit.missing, "kvs scan: " + scanned.status().ToString());
  for (const auto& k : expected_versioned) {
    if (!found_versioned.count(k)) Report(&audit.missing, DescribeStoreKey(k));
  }
  for (const auto& [k, sn] : expected_direct) {
    if (!found_direct.count(k)) Report(&audit.missing, "D|" + k + "@" + std::to_string(sn));
  }
  return audit;
}

void BloomAudit::CheckNewFiles(const LevelSet& files) {
  std::vector<LsmEntry> entries;
  for (const auto& f : files.AllFiles()) {
    if (!seen_.insert(f->id).second) continue;
    files_checked++;
    entries.clear();
    if (!f->reader->ReadAll(&entries).ok()) {
      false_negatives++;
      Report(&examples, "unreadable sst " + std::to_string(f->id));
      continue;
    }
    for (const auto& e : entries) {
      if (e.kind == EntryKind::kDirect) continue;
      members_checked++;
      if (!f->reader->InBloom(e.key)) {
        false_negatives++;
        Report(&examples, "sst " + std::to_string(f->id) + " key " + e.key);
      }
    }
  }
}

void BloomAudit::Merge(const BloomAudit& other) {
  files_checked += other.files_checked;
  members_checked += other.members_checked;
  false_negatives += other.false_negatives;
  for (const auto& e : other.examples) Report(&examples, e);
}

}  // namespace tandem::harness
