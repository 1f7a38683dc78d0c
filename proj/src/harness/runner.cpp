#include "tandem/harness/runner.hpp"

#include <algorithm>

#include "json.hpp"

namespace tandem::harness {

namespace {

std::string Show(const std::optional<std::string>& v) { return v ? "\"" + *v + "\"" : "null"; }

std::string Show(const std::vector<OracleDb::KV>& kvs) {
  std::string out = "[" + std::to_string(kvs.size()) + " entries";
  for (size_t i = 0; i < kvs.size() && i < 8; ++i) out += " " + kvs[i].first + "=" + kvs[i].second;
  if (kvs.size() > 8) out += " ...";
  return out + "]";
}

// Points at the first differing entry so long ranges stay readable.
std::pair<std::string, std::string> ShowDiff(const std::vector<OracleDb::KV>& want,
                                             const std::vector<OracleDb::KV>& got) {
  size_t i = 0;
  while (i < want.size() && i < got.size() && want[i] == got[i]) ++i;
  auto at = [&](const std::vector<OracleDb::KV>& v) {
    std::string s = Show(v);
    if (i < v.size()) s += " first diff at " + std::to_string(i) + ": " + v[i].first + "=" + v[i].second;
    return s;
  };
  return {at(want), at(got)};
}

constexpr int kIterateWorkers[] = {1, 4, 16};

}  // namespace

EngineConfig HarnessConfig() {
  EngineConfig c;
  c.deterministic = true;
  c.kvs.segment_bytes = 256 << 10;
  c.lsm.l0_trigger = 2;
  c.iterator_workers = 4;
  return c;
}

std::string Verdict::ToJson() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["pass"] = pass;
  j["ops_run"] = ops_run;
  j["reads_compared"] = reads_compared;
  j["audits_run"] = audits_run;
  j["flushes"] = flushes;
  j["compactions"] = compactions;
  if (divergence) {
    j["divergence"] = {{"op_index", divergence->op_index},
                       {"op", divergence->op},
                       {"expected", divergence->expected},
                       {"actual", divergence->actual}};
  } else {
    j["divergence"] = nullptr;
  }
  j["audit_violations"] = audit_violations;
  j["bloom"] = {{"files_checked", bloom.files_checked},
                {"members_checked", bloom.members_checked},
                {"false_negatives", bloom.false_negatives}};
  if (!error.empty()) j["error"] = error;
  return j.dump();
}

TraceRunner::TraceRunner(std::unique_ptr<MemEnv> env, RunOptions options, Verdict* verdict)
    : env_(std::move(env)), options_(std::move(options)), verdict_(verdict) {}

TraceRunner::~TraceRunner() { db_.reset(); }

Status TraceRunner::Open(RecoveryReport* report) {
  DbOptions o;
  o.env = env_.get();
  o.config = options_.config;
  auto db = Db::Open(o, report);
  if (!db.ok()) return db.status();
  db_ = std::move(db).value();
  verdict_->bloom.ForgetSeen();
  InstallHook();
  return Status::OK();
}

void TraceRunner::InstallHook() {
  db_->SetCommitHook([this](CommitKind kind) {
    if (kind == CommitKind::kFlush) {
      verdict_->flushes++;
    } else {
      verdict_->compactions++;
    }
    verdict_->bloom.CheckNewFiles(*db_->current());
    if (!options_.audit_commits) return;
    verdict_->audits_run++;
    AuditResult r = AuditInvariant1(*db_);
    if (r.pending_renames > 0 && !options_.tolerate_pending_renames) {
      r.violations.push_back(std::to_string(r.pending_renames) + " pending renames without a crash");
    }
    if (r.ok()) return;
    verdict_->pass = false;
    for (auto& v : r.violations) {
      if (verdict_->audit_violations.size() < 20) {
        verdict_->audit_violations.push_back("after op " + std::to_string(verdict_->ops_run) + ": " + v);
      }
    }
  });
}

void TraceRunner::ResetEnv(std::unique_ptr<MemEnv> env) {
  db_.reset();
  env_ = std::move(env);
}

void TraceRunner::ForgetSnapshots() {
  slots_.clear();
  oracle_.DropAllSnapshots();
}

void TraceRunner::CrashNow() {
  auto image = env_->CrashNow();
  ResetEnv(std::move(image));
  ForgetSnapshots();
}

bool TraceRunner::Diverge(size_t index, const TraceOp& op, std::string expected, std::string actual) {
  verdict_->pass = false;
  if (!verdict_->divergence) {
    verdict_->divergence = Divergence{index, FormatOp(op), std::move(expected), std::move(actual)};
  }
  return false;
}

bool TraceRunner::Fail(size_t index, const TraceOp& op, const Status& s) {
  verdict_->pass = false;
  if (verdict_->error.empty()) verdict_->error = "op " + std::to_string(index) + " (" + FormatOp(op) + "): " + s.ToString();
  return false;
}

bool TraceRunner::Step(const TraceOp& op, size_t index) {
  verdict_->ops_run++;
  switch (op.type) {
    case OpType::kPut: {
      Status s = db_->Put(op.key, op.value);
      if (!s.ok()) return Fail(index, op, s);
      oracle_.Put(op.key, op.value);
      keys_.insert(op.key);
      break;
    }
    case OpType::kDelete: {
      Status s = db_->Delete(op.key);
      if (!s.ok()) return Fail(index, op, s);
      oracle_.Delete(op.key);
      keys_.insert(op.key);
      break;
    }
    case OpType::kGet:
    case OpType::kGetAt: {
      auto slot = slots_.find(op.slot);
      const bool at = op.type == OpType::kGetAt && slot != slots_.end();
      auto got = at ? db_->GetAt(op.key, slot->second.engine) : db_->Get(op.key);
      if (!got.ok()) return Fail(index, op, got.status());
      auto want = at ? oracle_.GetAt(op.key, slot->second.oracle) : oracle_.Get(op.key);
      verdict_->reads_compared++;
      if (*got != want) return Diverge(index, op, Show(want), Show(*got));
      break;
    }
    case OpType::kSnapCreate: {
      auto snap = db_->CreateSnapshot();
      if (!snap.ok()) return Fail(index, op, snap.status());
      slots_[op.slot] = Slot{*snap, oracle_.CreateSnapshot()};
      break;
    }
    case OpType::kSnapRelease: {
      auto slot = slots_.find(op.slot);
      if (slot == slots_.end()) break;  // lost to a crash or reopen
      Status s = db_->ReleaseSnapshot(slot->second.engine);
      if (!s.ok()) return Fail(index, op, s);
      oracle_.ReleaseSnapshot(slot->second.oracle);
      slots_.erase(slot);
      break;
    }
    case OpType::kIterateAt: {
      std::optional<std::string> to;
      if (!op.to.empty()) to = op.to;
      const int workers = kIterateWorkers[index % 3];
      auto slot = slots_.find(op.slot);
      const bool at = slot != slots_.end();
      auto got = at ? db_->IterateAt(op.key, to, slot->second.engine, workers) : db_->Iterate(op.key, to, workers);
      if (!got.ok()) return Fail(index, op, got.status());
      auto want = at ? oracle_.IterateAt(op.key, to, slot->second.oracle) : oracle_.Iterate(op.key, to);
      verdict_->reads_compared++;
      if (*got != want) {
        auto [w, g] = ShowDiff(want, *got);
        return Diverge(index, op, w, g);
      }
      break;
    }
    case OpType::kFlush: {
      Status s = db_->FlushNow();
      if (!s.ok()) return Fail(index, op, s);
      break;
    }
    case OpType::kCompact: {
      Status s = op.full ? db_->CompactRange() : db_->CompactOnce().status();
      if (!s.ok()) return Fail(index, op, s);
      if (options_.gc_after_compaction) {
        auto gc = db_->kvs()->Gc();
        if (!gc.ok()) return Fail(index, op, gc.status());
      }
      break;
    }
    case OpType::kCrash: {
      CrashNow();
      Status s = Open();
      if (!s.ok()) return Fail(index, op, s);
      break;
    }
    case OpType::kReopen: {
      Status s = db_->Close();
      if (!s.ok()) return Fail(index, op, s);
      db_.reset();
      ForgetSnapshots();
      s = Open();
      if (!s.ok()) return Fail(index, op, s);
      break;
    }
  }
  return verdict_->pass;
}

bool TraceRunner::CheckFullState(size_t index, const std::string& label) {
  TraceOp probe{.type = OpType::kGet};
  for (const auto& key : keys_) {
    probe.key = key;
    auto got = db_->Get(key);
    if (!got.ok()) return Fail(index, probe, got.status());
    auto want = oracle_.Get(key);
    verdict_->reads_compared++;
    if (*got != want) return Diverge(index, probe, label + ": " + Show(want), Show(*got));
  }
  TraceOp scan{.type = OpType::kIterateAt};
  auto got = db_->Iterate("", std::nullopt);
  if (!got.ok()) return Fail(index, scan, got.status());
  auto want = oracle_.Iterate("", std::nullopt);
  verdict_->reads_compared++;
  if (*got != want) {
    auto [w, g] = ShowDiff(want, *got);
    return Diverge(index, scan, label + ": " + w, g);
  }
  return true;
}

Verdict RunEquivalence(const OpTrace& trace, const RunOptions& options) {
  Verdict verdict;
  verdict.seed = trace.seed;
  RunOptions o = options;
  bool crashes = std::any_of(trace.ops.begin(), trace.ops.end(), [](const TraceOp& op) { return op.type == OpType::kCrash; });
  // Exact comparison after a crash needs every acknowledged write durable.
  if (crashes) {
    o.config.sync_wal = true;
    o.tolerate_pending_renames = true;
  }
  TraceRunner runner(std::make_unique<MemEnv>(), o, &verdict);
  Status s = runner.Open();
  if (!s.ok()) {
    verdict.pass = false;
    verdict.error = "open: " + s.ToString();
    return verdict;
  }
  for (size_t i = 0; i < trace.ops.size(); ++i) {
    if (!runner.Step(trace.ops[i], i)) return verdict;
  }
  runner.CheckFullState(trace.ops.size(), "final state");
  return verdict;
}

// ---------------------------------------------------------------------------
// Crash matrix

const char* ScenarioName(CrashScenario scenario) {
  switch (scenario) {
    case CrashScenario::kFlushWithSnapshot:
      return "flush_with_snapshot";
    case CrashScenario::kFlushNoSnapshot:
      return "flush_no_snapshot";
    case CrashScenario::kRenamingCompaction:
      return "renaming_compaction";
    case CrashScenario::kBottommostTombstone:
      return "bottommost_tombstone_compaction";
  }
  return "unknown";
}

std::string CrashMatrixVerdict::ToJson() const {
  nlohmann::ordered_json j;
  j["scenario"] = name;
  j["pass"] = pass;
  j["points"] = points;
  j["passed"] = passed;
  j["orphans_deleted_total"] = orphans_deleted_total;
  j["schedules_with_fallback"] = schedules_with_fallback;
  j["value_records_in_action"] = value_records_in_action;
  j["failures"] = failures;
  j["space_audits_run"] = space_audits_run;
  j["space_audit_failures"] = space_audit_failures;
  j["bloom_false_negatives"] = bloom.false_negatives;
  j["final_space"] = nlohmann::ordered_json::parse(final_space.ToJson());
  return j.dump();
}

CrashPlan MakeCrashPlan(CrashScenario scenario, size_t keys, uint64_t seed) {
  CrashPlan plan;
  plan.name = ScenarioName(scenario);
  plan.setup.seed = seed;
  auto& s = plan.setup.ops;
  auto put = [&](std::vector<TraceOp>* ops, size_t i, const std::string& tag) {
    ops->push_back(TraceOp{.type = OpType::kPut, .key = KeyName(i), .value = tag + "-" + std::to_string(i * seed)});
  };
  auto del = [&](std::vector<TraceOp>* ops, size_t i) {
    ops->push_back(TraceOp{.type = OpType::kDelete, .key = KeyName(i)});
  };
  const TraceOp flush{.type = OpType::kFlush};

  switch (scenario) {
    case CrashScenario::kFlushWithSnapshot:
      for (size_t i = 0; i < keys; ++i) put(&s, i, "a");
      s.push_back(TraceOp{.type = OpType::kSnapCreate, .slot = 0});
      for (size_t i = 0; i < keys; i += 2) put(&s, i, "b");
      for (size_t i = 1; i < keys; i += 5) del(&s, i);
      plan.action = {flush};
      plan.tail.push_back(TraceOp{.type = OpType::kSnapRelease, .slot = 0});
      break;
    case CrashScenario::kFlushNoSnapshot:
      for (size_t i = 0; i < keys; ++i) put(&s, i, "a");
      for (size_t i = 0; i < keys; i += 2) put(&s, i, "b");
      for (size_t i = 1; i < keys; i += 5) del(&s, i);
      plan.action = {flush};
      break;
    case CrashScenario::kRenamingCompaction:
      for (size_t i = 0; i < keys; ++i) put(&s, i, "a");
      s.push_back(flush);
      s.push_back(TraceOp{.type = OpType::kSnapCreate, .slot = 0});
      for (size_t i = 0; i < keys; ++i) put(&s, i, "b");
      s.push_back(flush);
      s.push_back(TraceOp{.type = OpType::kSnapRelease, .slot = 0});
      plan.action = {TraceOp{.type = OpType::kCompact, .full = false}};
      break;
    case CrashScenario::kBottommostTombstone:
      for (size_t i = 0; i < keys; ++i) put(&s, i, "a");
      s.push_back(flush);
      s.push_back(TraceOp{.type = OpType::kCompact, .full = true});
      for (size_t i = 0; i < keys; i += 4) del(&s, i);
      s.push_back(flush);
      plan.action = {TraceOp{.type = OpType::kCompact, .full = true}};
      break;
  }
  for (size_t i = 0; i < keys; i += 7) put(&plan.tail, i, "c");
  for (size_t i = 3; i < keys; i += 11) del(&plan.tail, i);
  plan.tail.push_back(flush);
  return plan;
}

CrashMatrixVerdict RunCrashMatrix(const CrashPlan& plan, const RunOptions& options) {
  CrashMatrixVerdict result;
  result.name = plan.name;
  RunOptions o = options;
  o.config.sync_wal = true;
  o.config.deterministic = true;
  o.config.kvs.arrival_buffer_bytes = 0;
  o.gc_after_compaction = false;  // keep the action's durability events fixed
  o.tolerate_pending_renames = true;

  auto fail = [&](std::string msg) {
    result.pass = false;
    if (result.failures.size() < 10) result.failures.push_back(std::move(msg));
  };

  Verdict base_verdict;
  TraceRunner base(std::make_unique<MemEnv>(/*record_journal=*/true), o, &base_verdict);
  if (Status s = base.Open(); !s.ok()) {
    fail("open: " + s.ToString());
    return result;
  }
  for (size_t i = 0; i < plan.setup.ops.size(); ++i) {
    if (!base.Step(plan.setup.ops[i], i)) {
      fail("setup: " + base_verdict.ToJson());
      return result;
    }
  }
  const uint64_t first = base.env()->event_count();
  const auto before = base.db()->counters();
  for (size_t i = 0; i < plan.action.size(); ++i) {
    if (!base.Step(plan.action[i], plan.setup.ops.size() + i)) {
      fail("action: " + base_verdict.ToJson());
      return result;
    }
  }
  const uint64_t last = base.env()->event_count();
  const auto delta = base.db()->counters() - before;
  result.value_records_in_action = delta.direct_writes + delta.versioned_writes + delta.renames;
  const OracleDb oracle = base.oracle();
  result.bloom.Merge(base_verdict.bloom);

  for (uint64_t point = first; point <= last; ++point) {
    result.points++;
    const std::string at = "point " + std::to_string(point) + ": ";
    Verdict v;
    TraceRunner run(base.env()->CrashAt(point), o, &v);
    run.set_oracle(oracle);
    run.oracle().DropAllSnapshots();
    run.set_keyspace(base.keyspace());
    RecoveryReport report;
    if (Status s = run.Open(&report); !s.ok()) {
      fail(at + "recover: " + s.ToString());
      continue;
    }
    result.orphans_deleted_total += report.orphans_deleted;
    if (!run.CheckFullState(0, "after recovery")) {
      fail(at + v.ToJson());
      continue;
    }
    if (run.db()->counters().fallback_reads > 0) result.schedules_with_fallback++;
    bool ok = true;
    for (size_t i = 0; ok && i < plan.tail.size(); ++i) ok = run.Step(plan.tail[i], i);
    if (!ok || !run.CheckFullState(plan.tail.size(), "after tail")) {
      fail(at + v.ToJson());
      continue;
    }
    Status s = run.db()->CompactRange();
    if (s.ok()) s = run.db()->kvs()->Gc().status();
    if (!s.ok()) {
      fail(at + "final compaction: " + s.ToString());
      continue;
    }
    result.final_space = AuditSpace(*run.db());
    result.space_audits_run++;
    result.bloom.Merge(v.bloom);
    if (!result.final_space.ok()) {
      result.space_audit_failures++;
      fail(at + "space audit: " + result.final_space.ToJson());
      continue;
    }
    AuditResult inv = AuditInvariant1(*run.db());
    if (!inv.ok()) {
      fail(at + "invariant: " + inv.ToJson());
      continue;
    }
    if (!run.CheckFullState(plan.tail.size() + 1, "after compaction")) {
      fail(at + v.ToJson());
      continue;
    }
    result.passed++;
  }
  return result;
}

}  // namespace tandem::harness
