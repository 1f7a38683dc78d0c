#include "tandem/harness/trace.hpp"

#include <cstdio>
#include <random>
#include <sstream>

namespace tandem::harness {

std::string KeyName(size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "k%07zu", index);
  return buf;
}

OpTrace GenerateTrace(uint64_t seed, const TraceOptions& o) {
  OpTrace trace;
  trace.seed = seed;
  trace.ops.reserve(o.num_ops + o.num_ops / 100);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<size_t> key_dist(0, o.keyspace - 1);
  std::uniform_int_distribution<size_t> len_dist(o.min_value, o.max_value);
  std::uniform_int_distribution<int> pct(0, 99);
  std::uniform_real_distribution<double> unit(0, 1);
  static constexpr char kAlphabet[] = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
  std::uniform_int_distribution<size_t> char_dist(0, sizeof(kAlphabet) - 2);
  std::vector<int> live_slots;
  int next_slot = 0;

  auto pick_slot = [&]() -> int {
    if (live_slots.empty()) return -1;
    return live_slots[std::uniform_int_distribution<size_t>(0, live_slots.size() - 1)(rng)];
  };

  for (size_t i = 0; i < o.num_ops; ++i) {
    TraceOp op;
    int p = pct(rng);
    int edge = o.put_pct;
    if (p < edge) {
      op.type = OpType::kPut;
      op.key = KeyName(key_dist(rng));
      op.value.resize(len_dist(rng));
      for (char& c : op.value) c = kAlphabet[char_dist(rng)];
    } else if (p < (edge += o.delete_pct)) {
      op.type = OpType::kDelete;
      op.key = KeyName(key_dist(rng));
    } else if (p < (edge += o.get_pct)) {
      op.type = OpType::kGet;
      op.key = KeyName(key_dist(rng));
    } else if (p < (edge += o.get_at_pct)) {
      op.slot = pick_slot();
      op.type = op.slot < 0 ? OpType::kGet : OpType::kGetAt;
      op.key = KeyName(key_dist(rng));
    } else if (p < (edge += o.iterate_pct)) {
      op.type = OpType::kIterateAt;
      size_t from = key_dist(rng);
      op.key = KeyName(from);
      if (unit(rng) < 0.9) op.to = KeyName(from + std::uniform_int_distribution<size_t>(0, o.iterate_span)(rng));
      op.slot = pick_slot();
    } else {
      bool create = live_slots.empty() ||
                    (static_cast<int>(live_slots.size()) < o.max_snapshots && unit(rng) < 0.5);
      if (create) {
        op.type = OpType::kSnapCreate;
        op.slot = next_slot++;
        live_slots.push_back(op.slot);
      } else {
        op.type = OpType::kSnapRelease;
        size_t idx = std::uniform_int_distribution<size_t>(0, live_slots.size() - 1)(rng);
        op.slot = live_slots[idx];
        live_slots.erase(live_slots.begin() + static_cast<std::ptrdiff_t>(idx));
      }
    }
    trace.ops.push_back(std::move(op));

    if (unit(rng) < o.flush_prob) trace.ops.push_back(TraceOp{.type = OpType::kFlush});
    if (unit(rng) < o.compact_prob) {
      trace.ops.push_back(TraceOp{.type = OpType::kCompact, .full = unit(rng) < o.full_compact_share});
    }
    if (unit(rng) < o.crash_prob) {
      trace.ops.push_back(TraceOp{.type = OpType::kCrash});
      live_slots.clear();
    } else if (unit(rng) < o.reopen_prob) {
      trace.ops.push_back(TraceOp{.type = OpType::kReopen});
      live_slots.clear();
    }
  }
  return trace;
}

// Grammar, one op per line:
//   put <key> <value> | del <key> | get <key> | get_at <key> <slot>
//   snap <slot> | release <slot> | iter <from> <to|-> <slot>
//   flush | compact one|full | crash | reopen
std::string FormatOp(const TraceOp& op) {
  switch (op.type) {
    case OpType::kPut:
      return "put " + op.key + " " + op.value;
    case OpType::kDelete:
      return "del " + op.key;
    case OpType::kGet:
      return "get " + op.key;
    case OpType::kGetAt:
      return "get_at " + op.key + " " + std::to_string(op.slot);
    case OpType::kSnapCreate:
      return "snap " + std::to_string(op.slot);
    case OpType::kSnapRelease:
      return "release " + std::to_string(op.slot);
    case OpType::kIterateAt:
      return "iter " + op.key + " " + (op.to.empty() ? "-" : op.to) + " " + std::to_string(op.slot);
    case OpType::kFlush:
      return "flush";
    case OpType::kCompact:
      return op.full ? "compact full" : "compact one";
    case OpType::kCrash:
      return "crash";
    case OpType::kReopen:
      return "reopen";
  }
  return "";
}

std::string FormatTrace(const OpTrace& trace) {
  std::string out = "seed " + std::to_string(trace.seed) + "\n";
  for (const auto& op : trace.ops) {
    out += FormatOp(op);
    out += '\n';
  }
  return out;
}

Result<OpTrace> ParseTrace(const std::string& text) {
  OpTrace trace;
  std::istringstream lines(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream in(line);
    std::string verb;
    in >> verb;
    TraceOp op;
    bool ok = true;
    if (verb == "seed") {
      ok = static_cast<bool>(in >> trace.seed);
      if (ok) continue;
    } else if (verb == "put") {
      op.type = OpType::kPut;
      ok = static_cast<bool>(in >> op.key);
      in >> op.value;
    } else if (verb == "del") {
      op.type = OpType::kDelete;
      ok = static_cast<bool>(in >> op.key);
    } else if (verb == "get") {
      op.type = OpType::kGet;
      ok = static_cast<bool>(in >> op.key);
    } else if (verb == "get_at") {
      op.type = OpType::kGetAt;
      ok = static_cast<bool>(in >> op.key >> op.slot);
    } else if (verb == "snap") {
      op.type = OpType::kSnapCreate;
      ok = static_cast<bool>(in >> op.slot);
    } else if (verb == "release") {
      op.type = OpType::kSnapRelease;
      ok = static_cast<bool>(in >> op.slot);
    } else if (verb == "iter") {
      op.type = OpType::kIterateAt;
      ok = static_cast<bool>(in >> op.key >> op.to >> op.slot);
      if (op.to == "-") op.to.clear();
    } else if (verb == "flush") {
      op.type = OpType::kFlush;
    } else if (verb == "compact") {
      op.type = OpType::kCompact;
      std::string mode;
      ok = static_cast<bool>(in >> mode) && (mode == "one" || mode == "full");
      op.full = mode == "full";
    } else if (verb == "crash") {
      op.type = OpType::kCrash;
    } else if (verb == "reopen") {
      op.type = OpType::kReopen;
    } else {
      ok = false;
    }
    if (!ok) return Status::InvalidArgument("trace line " + std::to_string(lineno) + ": " + line);
    trace.ops.push_back(std::move(op));
  }
  return trace;
}

}  // namespace tandem::harness
