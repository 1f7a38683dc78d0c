#include "tandem/options.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "json.hpp"

namespace tandem {

Status EngineConfig::Validate() const {
  if (iterator_workers < 1 || iterator_workers > 64) return Status::InvalidArgument("iterator_workers not in 1..64");
  if (readahead_workers < 1) return Status::InvalidArgument("readahead_workers < 1");
  if (memtable_bytes == 0) return Status::InvalidArgument("memtable_bytes == 0");
  if (lsm.l0_trigger < 1) return Status::InvalidArgument("l0_trigger < 1");
  if (lsm.fanout < 2) return Status::InvalidArgument("fanout < 2");
  if (kvs.segment_bytes < 4096) return Status::InvalidArgument("segment_bytes < 4096");
  if (kvs.gc_dead_fraction <= 0 || kvs.gc_dead_fraction > 1) return Status::InvalidArgument("gc_dead_fraction");
  return Status::OK();
}

namespace {

std::string_view Trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool ParseBool(std::string_view v, bool* out) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return *out = true, true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return *out = false, true;
  return false;
}

template <typename T>
bool ParseNumber(std::string_view v, T* out) {
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), *out);
  return ec == std::errc() && p == v.data() + v.size();
}

bool ParseDouble(std::string_view v, double* out) {
  try {
    size_t used = 0;
    *out = std::stod(std::string(v), &used);
    return used == v.size();
  } catch (...) {
    return false;
  }
}

}  // namespace

Status ParseConfig(std::string_view text, EngineConfig* c) {
  using Setter = std::function<bool(std::string_view)>;
  auto u64 = [](uint64_t* f) { return Setter([f](std::string_view v) { return ParseNumber(v, f); }); };
  auto boolean = [](bool* f) { return Setter([f](std::string_view v) { return ParseBool(v, f); }); };
  auto integer = [](int* f) { return Setter([f](std::string_view v) { return ParseNumber(v, f); }); };
  const std::map<std::string, Setter, std::less<>> setters = {
      {"nodirect", boolean(&c->nodirect)},
      {"iterator_workers", integer(&c->iterator_workers)},
      {"row_cache_bytes", u64(&c->row_cache_bytes)},
      {"sync_wal", boolean(&c->sync_wal)},
      {"deterministic", boolean(&c->deterministic)},
      {"memtable_bytes", u64(&c->memtable_bytes)},
      {"l0_trigger", Setter([c](std::string_view v) { return ParseNumber(v, &c->lsm.l0_trigger); })},
      {"base_level_bytes", u64(&c->lsm.base_level_bytes)},
      {"fanout", u64(&c->lsm.fanout)},
      {"target_file_bytes", u64(&c->lsm.target_file_bytes)},
      {"segment_bytes", u64(&c->kvs.segment_bytes)},
      {"arrival_buffer_bytes", Setter([c](std::string_view v) { return ParseNumber(v, &c->kvs.arrival_buffer_bytes); })},
      {"gc_dead_fraction", Setter([c](std::string_view v) { return ParseDouble(v, &c->kvs.gc_dead_fraction); })},
      {"background_gc", boolean(&c->kvs.background_gc)},
      {"readahead_workers", integer(&c->readahead_workers)},
  };
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view l = line;
    if (auto hash = l.find('#'); hash != std::string_view::npos) l = l.substr(0, hash);
    l = Trim(l);
    if (l.empty()) continue;
    auto eq = l.find('=');
    if (eq == std::string_view::npos) return Status::InvalidArgument("line " + std::to_string(lineno) + ": missing '='");
    std::string_view key = Trim(l.substr(0, eq));
    std::string_view value = Trim(l.substr(eq + 1));
    auto it = setters.find(key);
    if (it == setters.end()) return Status::InvalidArgument("line " + std::to_string(lineno) + ": unknown key " + std::string(key));
    if (!it->second(value)) {
      return Status::InvalidArgument("line " + std::to_string(lineno) + ": bad value for " + std::string(key));
    }
  }
  return c->Validate();
}

Status LoadConfigFile(const std::string& path, EngineConfig* config) {
  std::ifstream in(path);
  if (!in) return Status::IOError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseConfig(ss.str(), config);
}

EngineCountersSnapshot EngineCounters::Snapshot() const {
  EngineCountersSnapshot s;
  s.kvs_value_reads = kvs_value_reads.load();
  s.sst_block_reads = sst_block_reads.load();
  s.bloom_checks = bloom_checks.load();
  s.bloom_false_positives = bloom_false_positives.load();
  s.renames = renames.load();
  s.direct_writes = direct_writes.load();
  s.versioned_writes = versioned_writes.load();
  s.fallback_reads = fallback_reads.load();
  s.puts = puts.load();
  s.deletes = deletes.load();
  s.gets = gets.load();
  s.row_cache_hits = row_cache_hits.load();
  s.flushes = flushes.load();
  s.compactions = compactions.load();
  return s;
}

EngineCountersSnapshot EngineCountersSnapshot::operator-(const EngineCountersSnapshot& o) const {
  EngineCountersSnapshot d;
  d.kvs_value_reads = kvs_value_reads - o.kvs_value_reads;
  d.sst_block_reads = sst_block_reads - o.sst_block_reads;
  d.bloom_checks = bloom_checks - o.bloom_checks;
  d.bloom_false_positives = bloom_false_positives - o.bloom_false_positives;
  d.renames = renames - o.renames;
  d.direct_writes = direct_writes - o.direct_writes;
  d.versioned_writes = versioned_writes - o.versioned_writes;
  d.fallback_reads = fallback_reads - o.fallback_reads;
  d.puts = puts - o.puts;
  d.deletes = deletes - o.deletes;
  d.gets = gets - o.gets;
  d.row_cache_hits = row_cache_hits - o.row_cache_hits;
  d.flushes = flushes - o.flushes;
  d.compactions = compactions - o.compactions;
  return d;
}

std::string EngineCountersSnapshot::ToJson() const {
  nlohmann::ordered_json j;
  j["kvs_value_reads"] = kvs_value_reads;
  j["sst_block_reads"] = sst_block_reads;
  j["bloom_checks"] = bloom_checks;
  j["bloom_false_positives"] = bloom_false_positives;
  j["renames"] = renames;
  j["direct_writes"] = direct_writes;
  j["versioned_writes"] = versioned_writes;
  j["fallback_reads"] = fallback_reads;
  j["puts"] = puts;
  j["deletes"] = deletes;
  j["gets"] = gets;
  j["row_cache_hits"] = row_cache_hits;
  j["flushes"] = flushes;
  j["compactions"] = compactions;
  return j.dump();
}

}  // namespace tandem
