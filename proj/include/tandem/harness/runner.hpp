#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tandem/db.hpp"
#include "tandem/harness/audit.hpp"
#include "tandem/harness/oracle.hpp"
#include "tandem/harness/trace.hpp"

namespace tandem::harness {

// Deterministic engine with small KVS segments so audits stay cheap.
EngineConfig HarnessConfig();

struct Divergence {
  size_t op_index = 0;
  std::string op;
  std::string expected;
  std::string actual;
};

struct RunOptions {
  EngineConfig config = HarnessConfig();
  bool audit_commits = true;       // invariant audit after every flush/compaction commit
  bool gc_after_compaction = true;
  // Only a crash can interrupt a rename; without crashes one is a violation.
  bool tolerate_pending_renames = false;
};

struct Verdict {
  uint64_t seed = 0;
  bool pass = true;
  size_t ops_run = 0;
  uint64_t reads_compared = 0;
  uint64_t audits_run = 0;
  uint64_t flushes = 0;
  uint64_t compactions = 0;
  std::optional<Divergence> divergence;
  std::vector<std::string> audit_violations;
  BloomAudit bloom;
  std::string error;

  std::string ToJson() const;
};

// Drives one engine and the oracle through trace ops. Snapshot slots map
// to an engine handle and the oracle sn.
class TraceRunner {
 public:
  TraceRunner(std::unique_ptr<MemEnv> env, RunOptions options, Verdict* verdict);
  ~TraceRunner();

  Status Open(RecoveryReport* report = nullptr);
  // False once the verdict has failed.
  bool Step(const TraceOp& op, size_t index);
  // Compares every key of the oracle keyspace plus a full iteration.
  bool CheckFullState(size_t index, const std::string& label);
  // Durable image at the moment of the call; the running engine is dropped.
  void CrashNow();

  Db* db() { return db_.get(); }
  MemEnv* env() { return env_.get(); }
  OracleDb& oracle() { return oracle_; }
  void set_oracle(const OracleDb& oracle) { oracle_ = oracle; }
  // Replaces the backing store, e.g. with a crash image. Closes nothing.
  void ResetEnv(std::unique_ptr<MemEnv> env);
  void ForgetSnapshots();
  const std::set<std::string>& keyspace() const { return keys_; }
  void set_keyspace(const std::set<std::string>& keys) { keys_ = keys; }

 private:
  struct Slot {
    Snapshot engine;
    SeqNum oracle = kNoSeq;
  };

  bool Diverge(size_t index, const TraceOp& op, std::string expected, std::string actual);
  bool Fail(size_t index, const TraceOp& op, const Status& s);
  void InstallHook();

  std::unique_ptr<MemEnv> env_;
  RunOptions options_;
  Verdict* verdict_;
  std::unique_ptr<Db> db_;
  OracleDb oracle_;
  std::map<int, Slot> slots_;
  std::set<std::string> keys_;  // every key the trace has written
};

Verdict RunEquivalence(const OpTrace& trace, const RunOptions& options = {});

// ---------------------------------------------------------------------------
// Crash matrix

enum class CrashScenario {
  kFlushWithSnapshot,
  kFlushNoSnapshot,
  kRenamingCompaction,
  kBottommostTombstone,
};

const char* ScenarioName(CrashScenario scenario);

// setup runs once; every durability point inside `action` is a crash
// point; `tail` continues the trace after each recovery. action ops must
// not write user data, so the oracle is fixed across crash points.
struct CrashPlan {
  std::string name;
  OpTrace setup;
  std::vector<TraceOp> action;
  std::vector<TraceOp> tail;
};

CrashPlan MakeCrashPlan(CrashScenario scenario, size_t keys = 200, uint64_t seed = 1);

struct CrashMatrixVerdict {
  std::string name;
  bool pass = true;
  uint64_t points = 0;
  uint64_t passed = 0;
  uint64_t orphans_deleted_total = 0;
  uint64_t schedules_with_fallback = 0;
  uint64_t value_records_in_action = 0;  // V/D writes made by the uncrashed action
  std::vector<std::string> failures;  // first few
  uint64_t space_audits_run = 0;
  uint64_t space_audit_failures = 0;
  BloomAudit bloom;
  SpaceAudit final_space;             // at the end of the last schedule

  std::string ToJson() const;
};

// Sync-WAL and unbuffered KVS writes are forced so every acknowledged op is
// durable and every value record is its own crash point.
CrashMatrixVerdict RunCrashMatrix(const CrashPlan& plan, const RunOptions& options = {});

}  // namespace tandem::harness
