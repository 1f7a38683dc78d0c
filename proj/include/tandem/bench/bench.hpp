#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tandem/db.hpp"
#include "tandem/status.hpp"

namespace tandem::bench {

enum class Phase { kFill, kWriteOnly, kReadOnly, kMixed, kScan, kScanWrite };
enum class Distribution { kUniform, kZipf };

const char* PhaseName(Phase phase);
Result<Phase> ParsePhase(const std::string& name);
Result<Distribution> ParseDistribution(const std::string& name);

struct WorkloadSpec {
  Phase phase = Phase::kFill;
  uint64_t key_count = 100000;
  size_t key_size = 32;
  size_t value_size = 1024;
  Distribution distribution = Distribution::kUniform;
  double alpha = 1.2;
  int threads = 1;
  // Total ops across threads; 0 means key_count. Ignored by fill, which
  // writes each key once. duration_seconds > 0 runs by time instead.
  uint64_t ops = 0;
  double duration_seconds = 0;
  size_t scan_length = 100;
  int iterator_workers = 4;
  uint64_t seed = 1;

  Status Validate() const;
};

struct LatencySummary {
  double p50_us = 0;
  double p99_us = 0;
  double p9999_us = 0;
  double max_us = 0;
  uint64_t over_10ms = 0;
};

struct BenchReport {
  std::string phase;
  uint64_t ops = 0;
  uint64_t reads = 0;
  uint64_t writes = 0;
  uint64_t scans = 0;
  uint64_t found = 0;  // reads that returned a value
  double seconds = 0;
  double throughput = 0;  // ops/s
  LatencySummary latency;
  std::vector<double> per_second;  // ops completed in each 1 s bucket
  double cv = 0;                   // stddev/mean of per_second
  EngineCountersSnapshot counters;  // summed over shards, this phase only
  uint64_t overwrite_hint_misses = 0;

  std::string ToJson() const;
  static std::string CsvHeader();
  std::string ToCsvRow() const;
  // "second ops" lines for gnuplot.
  std::string TimeSeries() const;
};

// Fixed-width user key for index i: "user" followed by zero-padded digits.
std::string BenchKey(uint64_t index, size_t key_size);
// Deterministic value bytes for (index, version).
std::string BenchValue(uint64_t index, uint64_t version, size_t value_size);

// Keys route to shards by hash, so every phase sees the same placement.
size_t ShardOf(std::string_view key, size_t shards);

// Runs one phase. Fill ends by flushing and compacting to quiescence so
// later phases start from settled files.
Result<BenchReport> RunPhase(const std::vector<Db*>& shards, const WorkloadSpec& spec);

// Coefficient of variation over full 1 s buckets; the last partial bucket
// is dropped when there is more than one.
double CoefficientOfVariation(const std::vector<double>& buckets);
LatencySummary SummarizeLatencies(std::vector<uint64_t>* nanos);

}  // namespace tandem::bench
