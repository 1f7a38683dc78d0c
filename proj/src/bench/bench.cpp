#include "tandem/bench/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <thread>

#include "json.hpp"
#include "tandem/bench/zipf.hpp"
#include "tandem/coding.hpp"

namespace tandem::bench {

namespace {

using Clock = std::chrono::steady_clock;

constexpr int kScanWriteScanPct = 95;

struct ThreadResult {
  uint64_t ops = 0;
  uint64_t reads = 0;
  uint64_t writes = 0;
  uint64_t scans = 0;
  uint64_t found = 0;
  std::vector<uint64_t> latencies;
  std::vector<uint64_t> buckets;
  Status status;
};

}  // namespace

const char* PhaseName(Phase phase) {
  switch (phase) {
    case Phase::kFill:
      return "fill";
    case Phase::kWriteOnly:
      return "write_only";
    case Phase::kReadOnly:
      return "read_only";
    case Phase::kMixed:
      return "mixed_50_50";
    case Phase::kScan:
      return "scan";
    case Phase::kScanWrite:
      return "scan_write";
  }
  return "unknown";
}

Result<Phase> ParsePhase(const std::string& name) {
  for (Phase p : {Phase::kFill, Phase::kWriteOnly, Phase::kReadOnly, Phase::kMixed, Phase::kScan, Phase::kScanWrite}) {
    if (name == PhaseName(p)) return p;
  }
  if (name == "mixed") return Phase::kMixed;
  return Status::InvalidArgument("unknown phase " + name);
}

Result<Distribution> ParseDistribution(const std::string& name) {
  if (name == "uniform") return Distribution::kUniform;
  if (name == "zipf" || name == "zipfian") return Distribution::kZipf;
  return Status::InvalidArgument("unknown distribution " + name);
}

Status WorkloadSpec::Validate() const {
  if (key_count == 0) return Status::InvalidArgument("key_count must be positive");
  if (distribution == Distribution::kZipf && !(alpha > 1.0)) return Status::InvalidArgument("zipf alpha must be > 1");
  if (scan_length < 1) return Status::InvalidArgument("scan_length must be >= 1");
  if (threads < 1) return Status::InvalidArgument("threads must be >= 1");
  if (key_size < 8) return Status::InvalidArgument("key_size must be >= 8");
  if (key_size > kMaxUserKeyBytes || value_size > kMaxUserValueBytes) return Status::InvalidArgument("record too large");
  if (iterator_workers < 1 || iterator_workers > 64) return Status::InvalidArgument("iterator_workers in 1..64");
  return Status::OK();
}

std::string BenchKey(uint64_t index, size_t key_size) {
  char digits[32];
  int n = std::snprintf(digits, sizeof(digits), "%llu", static_cast<unsigned long long>(index));
  std::string key = "user";
  const size_t width = key_size > 4 ? key_size - 4 : 0;
  if (static_cast<size_t>(n) < width) key.append(width - n, '0');
  key.append(digits, n);
  return key;
}

std::string BenchValue(uint64_t index, uint64_t version, size_t value_size) {
  std::string v(value_size, '\0');
  uint64_t x = index * 0x9E3779B97F4A7C15ull ^ (version + 1) * 0xC2B2AE3D27D4EB4Full;
  for (size_t i = 0; i < value_size; ++i) {
    x ^= x >> 31;
    x *= 0xBF58476D1CE4E5B9ull;
    v[i] = static_cast<char>('a' + (x >> 59) % 26);
  }
  return v;
}

size_t ShardOf(std::string_view key, size_t shards) { return shards <= 1 ? 0 : Hash64(key) % shards; }

double CoefficientOfVariation(const std::vector<double>& buckets) {
  std::vector<double> b = buckets;
  if (b.size() > 1) b.pop_back();
  if (b.empty()) return 0;
  double mean = 0;
  for (double x : b) mean += x;
  mean /= b.size();
  if (mean == 0) return 0;
  double var = 0;
  for (double x : b) var += (x - mean) * (x - mean);
  var /= b.size();
  return std::sqrt(var) / mean;
}

LatencySummary SummarizeLatencies(std::vector<uint64_t>* nanos) {
  LatencySummary s;
  if (nanos->empty()) return s;
  std::sort(nanos->begin(), nanos->end());
  auto pct = [&](double q) {
    size_t idx = static_cast<size_t>(std::ceil(q * nanos->size()));
    idx = std::clamp<size_t>(idx, 1, nanos->size()) - 1;
    return (*nanos)[idx] / 1000.0;
  };
  s.p50_us = pct(0.50);
  s.p99_us = pct(0.99);
  s.p9999_us = pct(0.9999);
  s.max_us = nanos->back() / 1000.0;
  s.over_10ms = static_cast<uint64_t>(nanos->end() - std::upper_bound(nanos->begin(), nanos->end(), 10'000'000ull));
  return s;
}

std::string BenchReport::ToJson() const {
  nlohmann::ordered_json j;
  j["phase"] = phase;
  j["ops"] = ops;
  j["reads"] = reads;
  j["writes"] = writes;
  j["scans"] = scans;
  j["found"] = found;
  j["seconds"] = seconds;
  j["throughput_ops_per_s"] = throughput;
  j["latency_us"] = {{"p50", latency.p50_us},
                     {"p99", latency.p99_us},
                     {"p99.99", latency.p9999_us},
                     {"max", latency.max_us},
                     {"over_10ms", latency.over_10ms}};
  j["cv"] = cv;
  j["per_second"] = per_second;
  j["counters"] = nlohmann::ordered_json::parse(counters.ToJson());
  j["overwrite_hint_misses"] = overwrite_hint_misses;
  return j.dump(2);
}

std::string BenchReport::CsvHeader() {
  return "phase,ops,seconds,throughput,p50_us,p99_us,p9999_us,cv,kvs_value_reads,sst_block_reads,"
         "bloom_false_positives,direct_writes,versioned_writes,renames,fallback_reads";
}

std::string BenchReport::ToCsvRow() const {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%s,%llu,%.3f,%.1f,%.2f,%.2f,%.2f,%.4f,%llu,%llu,%llu,%llu,%llu,%llu,%llu",
                phase.c_str(), static_cast<unsigned long long>(ops), seconds, throughput, latency.p50_us,
                latency.p99_us, latency.p9999_us, cv, static_cast<unsigned long long>(counters.kvs_value_reads),
                static_cast<unsigned long long>(counters.sst_block_reads),
                static_cast<unsigned long long>(counters.bloom_false_positives),
                static_cast<unsigned long long>(counters.direct_writes),
                static_cast<unsigned long long>(counters.versioned_writes),
                static_cast<unsigned long long>(counters.renames),
                static_cast<unsigned long long>(counters.fallback_reads));
  return buf;
}

std::string BenchReport::TimeSeries() const {
  std::string out = "# second ops\n";
  for (size_t i = 0; i < per_second.size(); ++i) {
    out += std::to_string(i) + " " + std::to_string(static_cast<uint64_t>(per_second[i])) + "\n";
  }
  return out;
}

namespace {

EngineCountersSnapshot SumCounters(const std::vector<Db*>& shards) {
  EngineCountersSnapshot total;
  for (Db* db : shards) {
    auto c = db->counters();
    total.kvs_value_reads += c.kvs_value_reads;
    total.sst_block_reads += c.sst_block_reads;
    total.bloom_checks += c.bloom_checks;
    total.bloom_false_positives += c.bloom_false_positives;
    total.renames += c.renames;
    total.direct_writes += c.direct_writes;
    total.versioned_writes += c.versioned_writes;
    total.fallback_reads += c.fallback_reads;
    total.puts += c.puts;
    total.deletes += c.deletes;
    total.gets += c.gets;
    total.row_cache_hits += c.row_cache_hits;
    total.flushes += c.flushes;
    total.compactions += c.compactions;
  }
  return total;
}

uint64_t SumHintMisses(const std::vector<Db*>& shards) {
  uint64_t total = 0;
  for (Db* db : shards) total += db->kvs()->stats().overwrite_hint_misses;
  return total;
}

Status Settle(Db* db) {
  TANDEM_RETURN_IF_ERROR(db->FlushNow());
  if (db->config().deterministic) return db->CompactUntilQuiescent();
  return db->WaitForIdle();
}

}  // namespace

Result<BenchReport> RunPhase(const std::vector<Db*>& shards, const WorkloadSpec& spec) {
  TANDEM_RETURN_IF_ERROR(spec.Validate());
  if (shards.empty()) return Status::InvalidArgument("no shards");
  std::unique_ptr<ZipfGenerator> zipf;
  if (spec.distribution == Distribution::kZipf) zipf = std::make_unique<ZipfGenerator>(spec.key_count, spec.alpha);
  const uint64_t total_ops = spec.phase == Phase::kFill ? spec.key_count : (spec.ops ? spec.ops : spec.key_count);
  const bool timed = spec.duration_seconds > 0 && spec.phase != Phase::kFill;

  const EngineCountersSnapshot before = SumCounters(shards);
  const uint64_t hints_before = SumHintMisses(shards);
  std::vector<ThreadResult> results(spec.threads);
  const auto start = Clock::now();

  auto worker = [&](int t) {
    ThreadResult& r = results[t];
    std::mt19937_64 rng(spec.seed * 0x100000001B3ull + static_cast<uint64_t>(t) * 7919 +
                        static_cast<uint64_t>(spec.phase));
    std::uniform_int_distribution<uint64_t> uniform(0, spec.key_count - 1);
    std::uniform_int_distribution<int> pct(0, 99);
    auto next_index = [&]() -> uint64_t { return zipf ? (*zipf)(rng) : uniform(rng); };
    const uint64_t my_ops = total_ops / spec.threads + (static_cast<uint64_t>(t) < total_ops % spec.threads ? 1 : 0);
    r.latencies.reserve(timed ? 1 << 16 : my_ops);
    uint64_t version = static_cast<uint64_t>(t) << 40;

    auto write = [&](uint64_t idx, uint64_t ver) -> Status {
      std::string key = BenchKey(idx, spec.key_size);
      r.writes++;
      return shards[ShardOf(key, shards.size())]->Put(key, BenchValue(idx, ver, spec.value_size));
    };
    auto read = [&](uint64_t idx) -> Status {
      std::string key = BenchKey(idx, spec.key_size);
      r.reads++;
      auto v = shards[ShardOf(key, shards.size())]->Get(key);
      if (!v.ok()) return v.status();
      if (*v) r.found++;
      return Status::OK();
    };
    auto scan = [&](uint64_t idx) -> Status {
      const uint64_t last = std::min(idx + spec.scan_length - 1, spec.key_count - 1);
      std::string from = BenchKey(idx, spec.key_size);
      std::string to = BenchKey(last, spec.key_size);
      r.scans++;
      for (Db* db : shards) {
        auto rows = db->Iterate(from, to, spec.iterator_workers);
        if (!rows.ok()) return rows.status();
        r.found += rows->size();
      }
      return Status::OK();
    };

    for (uint64_t i = 0;; ++i) {
      if (timed) {
        if ((i & 63) == 0 && std::chrono::duration<double>(Clock::now() - start).count() >= spec.duration_seconds) break;
      } else if (i >= my_ops) {
        break;
      }
      const auto op_start = Clock::now();
      Status s;
      switch (spec.phase) {
        case Phase::kFill:
          s = write(i * spec.threads + t, 0);
          break;
        case Phase::kWriteOnly:
          s = write(next_index(), ++version);
          break;
        case Phase::kReadOnly:
          s = read(next_index());
          break;
        case Phase::kMixed:
          s = pct(rng) < 50 ? read(next_index()) : write(next_index(), ++version);
          break;
        case Phase::kScan:
          s = scan(next_index());
          break;
        case Phase::kScanWrite:
          s = pct(rng) < kScanWriteScanPct ? scan(next_index()) : write(next_index(), ++version);
          break;
      }
      const auto op_end = Clock::now();
      if (!s.ok()) {
        r.status = s;
        return;
      }
      r.ops++;
      r.latencies.push_back(std::chrono::duration_cast<std::chrono::nanoseconds>(op_end - op_start).count());
      const auto second = static_cast<size_t>(std::chrono::duration<double>(op_end - start).count());
      if (r.buckets.size() <= second) r.buckets.resize(second + 1, 0);
      r.buckets[second]++;
    }
  };

  if (spec.threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> threads;
    for (int t = 0; t < spec.threads; ++t) threads.emplace_back(worker, t);
    for (auto& th : threads) th.join();
  }
  const double seconds = std::chrono::duration<double>(Clock::now() - start).count();
  for (const auto& r : results) TANDEM_RETURN_IF_ERROR(r.status);
  if (spec.phase == Phase::kFill) {
    for (Db* db : shards) TANDEM_RETURN_IF_ERROR(Settle(db));
  }

  BenchReport report;
  report.phase = PhaseName(spec.phase);
  report.seconds = seconds;
  std::vector<uint64_t> all;
  for (auto& r : results) {
    report.ops += r.ops;
    report.reads += r.reads;
    report.writes += r.writes;
    report.scans += r.scans;
    report.found += r.found;
    all.insert(all.end(), r.latencies.begin(), r.latencies.end());
    if (report.per_second.size() < r.buckets.size()) report.per_second.resize(r.buckets.size(), 0);
    for (size_t i = 0; i < r.buckets.size(); ++i) report.per_second[i] += r.buckets[i];
  }
  report.throughput = seconds > 0 ? report.ops / seconds : 0;
  report.latency = SummarizeLatencies(&all);
  report.cv = CoefficientOfVariation(report.per_second);
  report.counters = SumCounters(shards) - before;
  report.overwrite_hint_misses = SumHintMisses(shards) - hints_before;
  return report;
}

}  // namespace tandem::bench
