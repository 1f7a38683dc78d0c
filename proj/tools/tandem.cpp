// Command-line front end: benchmark, recovery, trace and crash-matrix tools.
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "tandem/bench/bench.hpp"
#include "tandem/db.hpp"
#include "tandem/harness/runner.hpp"
#include "tandem/harness/trace.hpp"

namespace {

using namespace tandem;

int Die(const std::string& what, const Status& s) {
  std::cerr << what << ": " << s.ToString() << "\n";
  return 1;
}

Status LoadEnvConfig(EngineConfig* config) {
  const char* path = std::getenv("TANDEM_CONFIG");
  if (!path || !*path) return Status::OK();
  return LoadConfigFile(path, config);
}

Status WriteFile(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary);
  out << data;
  out.close();
  return out ? Status::OK() : Status::IOError("cannot write " + path);
}

Result<std::string> ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return Status::NotFound("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string StemOf(const std::string& path) {
  auto dot = path.rfind('.');
  auto slash = path.rfind('/');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return path;
  return path.substr(0, dot);
}

struct BenchArgs {
  std::string phase = "fill";
  uint64_t keys = 100000;
  size_t value_size = 1024;
  size_t key_size = 32;
  std::string dist = "uniform";
  double alpha = 1.2;
  int threads = 1;
  uint64_t seed = 1;
  bool nodirect = false;
  int shards = 1;
  std::string report;
  uint64_t ops = 0;
  double duration = 0;
  size_t scan_length = 100;
  int iterator_workers = 4;
  std::string db;
  bool no_fill = false;
};

int RunBench(const BenchArgs& a) {
  EngineConfig config;
  if (Status s = LoadEnvConfig(&config); !s.ok()) return Die("TANDEM_CONFIG", s);
  if (a.nodirect) config.nodirect = true;

  bench::WorkloadSpec spec;
  auto phase = bench::ParsePhase(a.phase);
  if (!phase.ok()) return Die("--phase", phase.status());
  auto dist = bench::ParseDistribution(a.dist);
  if (!dist.ok()) return Die("--dist", dist.status());
  spec.phase = *phase;
  spec.distribution = *dist;
  spec.key_count = a.keys;
  spec.key_size = a.key_size;
  spec.value_size = a.value_size;
  spec.alpha = a.alpha;
  spec.threads = a.threads;
  spec.seed = a.seed;
  spec.ops = a.ops;
  spec.duration_seconds = a.duration;
  spec.scan_length = a.scan_length;
  spec.iterator_workers = a.iterator_workers;
  if (Status s = spec.Validate(); !s.ok()) return Die("workload", s);
  if (a.shards < 1) return Die("--shards", Status::InvalidArgument("must be >= 1"));

  std::vector<std::unique_ptr<MemEnv>> envs;
  std::vector<std::unique_ptr<Db>> dbs;
  std::vector<Db*> shards;
  for (int i = 0; i < a.shards; ++i) {
    DbOptions o;
    o.config = config;
    if (a.db.empty()) {
      envs.push_back(std::make_unique<MemEnv>());
      o.env = envs.back().get();
    } else {
      o.path = a.shards == 1 ? a.db : a.db + "/shard-" + std::to_string(i);
    }
    auto db = Db::Open(o);
    if (!db.ok()) return Die("open", db.status());
    dbs.push_back(std::move(db).value());
    shards.push_back(dbs.back().get());
  }

  std::vector<bench::BenchReport> reports;
  if (spec.phase != bench::Phase::kFill && !a.no_fill) {
    bench::WorkloadSpec fill = spec;
    fill.phase = bench::Phase::kFill;
    auto r = bench::RunPhase(shards, fill);
    if (!r.ok()) return Die("fill", r.status());
    reports.push_back(*r);
  }
  auto r = bench::RunPhase(shards, spec);
  if (!r.ok()) return Die(a.phase, r.status());
  reports.push_back(*r);

  nlohmann::ordered_json j;
  j["config"] = {{"keys", a.keys},       {"value_size", a.value_size}, {"dist", a.dist},
                 {"alpha", a.alpha},     {"threads", a.threads},       {"seed", a.seed},
                 {"nodirect", config.nodirect}, {"shards", a.shards}};
  j["phases"] = nlohmann::ordered_json::array();
  std::string csv = bench::BenchReport::CsvHeader() + "\n";
  for (const auto& rep : reports) {
    j["phases"].push_back(nlohmann::ordered_json::parse(rep.ToJson()));
    csv += rep.ToCsvRow() + "\n";
  }
  std::cout << j.dump(2) << "\n";
  if (!a.report.empty()) {
    const std::string stem = StemOf(a.report);
    if (Status s = WriteFile(a.report, j.dump(2) + "\n"); !s.ok()) return Die("report", s);
    if (Status s = WriteFile(stem + ".csv", csv); !s.ok()) return Die("report", s);
    if (Status s = WriteFile(stem + ".series.dat", reports.back().TimeSeries()); !s.ok()) return Die("report", s);
  }
  for (auto& db : dbs) {
    if (Status s = db->Close(); !s.ok()) return Die("close", s);
  }
  return 0;
}

int RunRecover(const std::string& path) {
  EngineConfig config;
  if (Status s = LoadEnvConfig(&config); !s.ok()) return Die("TANDEM_CONFIG", s);
  config.deterministic = true;
  DbOptions o;
  o.config = config;
  o.path = path;
  o.create_if_missing = false;
  RecoveryReport report;
  auto db = Db::Open(o, &report);
  if (!db.ok()) return Die("unrecoverable", db.status());
  std::cout << report.ToJson() << "\n";
  return (*db)->Close().ok() ? 0 : 1;
}

int RunStats(const std::string& path) {
  EngineConfig config;
  if (Status s = LoadEnvConfig(&config); !s.ok()) return Die("TANDEM_CONFIG", s);
  config.deterministic = true;
  DbOptions o;
  o.config = config;
  o.path = path;
  o.create_if_missing = false;
  auto db = Db::Open(o);
  if (!db.ok()) return Die("open", db.status());
  auto files = (*db)->current();
  nlohmann::ordered_json j;
  j["clock"] = (*db)->clock();
  j["levels"] = nlohmann::ordered_json::array();
  for (int l = 0; l < kNumLevels; ++l) {
    j["levels"].push_back({{"level", l}, {"files", files->level(l).size()}, {"bytes", files->LevelBytes(l)}});
  }
  j["kvs_live_records"] = (*db)->kvs()->live_records();
  j["kvs_segments"] = (*db)->kvs()->Segments().size();
  j["kvfs_files"] = (*db)->kvfs()->Files().size();
  j["checkpoints"] = nlohmann::ordered_json::array();
  for (const auto& c : (*db)->Checkpoints()) j["checkpoints"].push_back({{"dir", c.dir}, {"sn", c.sn}});
  std::cout << j.dump(2) << "\n";
  return (*db)->Close().ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tandem storage engine tools"};
  app.require_subcommand(1);

  BenchArgs b;
  auto* bench_cmd = app.add_subcommand("bench", "run a benchmark phase (fill runs first unless --no-fill)");
  bench_cmd->add_option("--phase", b.phase, "fill|write_only|read_only|mixed_50_50|scan|scan_write");
  bench_cmd->add_option("--keys", b.keys, "key count");
  bench_cmd->add_option("--value-size", b.value_size, "value bytes");
  bench_cmd->add_option("--key-size", b.key_size, "key bytes");
  bench_cmd->add_option("--dist", b.dist, "uniform|zipf");
  bench_cmd->add_option("--alpha", b.alpha, "zipf exponent (> 1)");
  bench_cmd->add_option("--threads", b.threads, "client threads");
  bench_cmd->add_option("--seed", b.seed, "key stream seed");
  bench_cmd->add_flag("--nodirect", b.nodirect, "versioned-only baseline");
  bench_cmd->add_option("--shards", b.shards, "engine instances, keys routed by hash");
  bench_cmd->add_option("--report", b.report, "JSON report path; .csv and .series.dat written alongside");
  bench_cmd->add_option("--ops", b.ops, "ops for non-fill phases (default: keys)");
  bench_cmd->add_option("--duration", b.duration, "seconds; overrides --ops");
  bench_cmd->add_option("--scan-length", b.scan_length, "keys per scan");
  bench_cmd->add_option("--iterator-workers", b.iterator_workers, "value fetch workers per scan");
  bench_cmd->add_option("--db", b.db, "store directory (default: in memory)");
  bench_cmd->add_flag("--no-fill", b.no_fill, "skip the implicit fill (existing --db)");

  std::string recover_db;
  auto* recover_cmd = app.add_subcommand("recover", "open a store, run recovery, print the report");
  recover_cmd->add_option("--db", recover_db, "store directory")->required();

  std::string stats_db;
  auto* stats_cmd = app.add_subcommand("stats", "print level and store statistics");
  stats_cmd->add_option("--db", stats_db, "store directory")->required();

  uint64_t gen_seed = 1;
  harness::TraceOptions gen;
  std::string gen_out;
  auto* gen_cmd = app.add_subcommand("trace-gen", "generate a random op trace");
  gen_cmd->add_option("--seed", gen_seed, "seed");
  gen_cmd->add_option("--ops", gen.num_ops, "op count");
  gen_cmd->add_option("--keyspace", gen.keyspace, "distinct keys");
  gen_cmd->add_option("--crash-prob", gen.crash_prob, "per-op crash probability");
  gen_cmd->add_option("--out", gen_out, "output file (default stdout)");

  std::string run_trace;
  auto* run_cmd = app.add_subcommand("trace-run", "replay a trace against the oracle; prints a JSON verdict");
  run_cmd->add_option("--trace", run_trace, "trace file")->required();

  std::string scenario = "all";
  size_t crash_keys = 200;
  auto* crash_cmd = app.add_subcommand("crash-matrix", "enumerate crash points for a scenario");
  crash_cmd->add_option("--scenario", scenario,
                        "all|flush_with_snapshot|flush_no_snapshot|renaming_compaction|bottommost_tombstone_compaction");
  crash_cmd->add_option("--keys", crash_keys, "keys in the scenario");

  CLI11_PARSE(app, argc, argv);

  if (*bench_cmd) return RunBench(b);
  if (*recover_cmd) return RunRecover(recover_db);
  if (*stats_cmd) return RunStats(stats_db);
  if (*gen_cmd) {
    std::string text = harness::FormatTrace(harness::GenerateTrace(gen_seed, gen));
    if (gen_out.empty()) {
      std::cout << text;
      return 0;
    }
    Status s = WriteFile(gen_out, text);
    return s.ok() ? 0 : Die("write", s);
  }
  if (*run_cmd) {
    auto text = ReadFile(run_trace);
    if (!text.ok()) return Die("trace", text.status());
    auto trace = harness::ParseTrace(*text);
    if (!trace.ok()) return Die("trace", trace.status());
    harness::Verdict v = harness::RunEquivalence(*trace);
    std::cout << v.ToJson() << "\n";
    return v.pass ? 0 : 1;
  }
  if (*crash_cmd) {
    bool all_pass = true;
    for (auto sc : {harness::CrashScenario::kFlushWithSnapshot, harness::CrashScenario::kFlushNoSnapshot,
                    harness::CrashScenario::kRenamingCompaction, harness::CrashScenario::kBottommostTombstone}) {
      if (scenario != "all" && scenario != harness::ScenarioName(sc)) continue;
      auto v = harness::RunCrashMatrix(harness::MakeCrashPlan(sc, crash_keys));
      std::cout << v.ToJson() << "\n";
      all_pass &= v.pass;
    }
    return all_pass ? 0 : 1;
  }
  return 0;
}
