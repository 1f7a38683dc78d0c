#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tandem/status.hpp"

namespace tandem::harness {

enum class OpType {
  kPut,
  kDelete,
  kGet,
  kGetAt,
  kSnapCreate,
  kSnapRelease,
  kIterateAt,
  kFlush,
  kCompact,
  kCrash,
  kReopen,
};

// Snapshots are named by slot so a trace stays valid whatever sns the
// engine assigns. slot < 0 means "latest" for reads.
struct TraceOp {
  OpType type = OpType::kGet;
  std::string key{};  // iterate: range start
  std::string value{};
  std::string to{};  // iterate: inclusive end; empty = unbounded
  int slot = -1;
  bool full = false;  // compact: whole-tree instead of one picked job

  friend bool operator==(const TraceOp&, const TraceOp&) = default;
};

struct OpTrace {
  uint64_t seed = 0;
  std::vector<TraceOp> ops;

  friend bool operator==(const OpTrace&, const OpTrace&) = default;
};

// Percentages of the regular op mix; flush/compact/crash are injected on
// top with the given per-op probabilities.
struct TraceOptions {
  size_t num_ops = 100000;
  size_t keyspace = 1000;
  size_t min_value = 4;
  size_t max_value = 48;
  int put_pct = 40;
  int delete_pct = 10;
  int get_pct = 35;
  int get_at_pct = 5;
  int iterate_pct = 5;
  int snapshot_pct = 5;
  int max_snapshots = 4;
  size_t iterate_span = 20;
  double flush_prob = 1.0 / 1000;
  double compact_prob = 1.0 / 3000;
  double full_compact_share = 0.25;
  double crash_prob = 0;
  double reopen_prob = 0;
};

std::string KeyName(size_t index);

// Deterministic in (seed, options).
OpTrace GenerateTrace(uint64_t seed, const TraceOptions& options = {});

// One op per line; see FormatOp for the grammar.
std::string FormatTrace(const OpTrace& trace);
std::string FormatOp(const TraceOp& op);
Result<OpTrace> ParseTrace(const std::string& text);

}  // namespace tandem::harness
