#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tandem/sst.hpp"
#include "tandem/status.hpp"

namespace tandem {

inline constexpr int kNumLevels = 7;

struct LsmOptions {
  size_t l0_trigger = 4;
  uint64_t base_level_bytes = 8 << 20;
  uint64_t fanout = 10;
  // Compaction outputs are cut at the first key boundary past this size.
  uint64_t target_file_bytes = 2 << 20;

  uint64_t LevelCapacity(int level) const {
    uint64_t cap = base_level_bytes;
    for (int l = 1; l < level; ++l) cap *= fanout;
    return cap;
  }
};

struct SstFile {
  uint64_t id = 0;
  int level = 0;
  std::shared_ptr<SstReader> reader;

  const std::string& min_key() const { return reader->properties().min_key; }
  const std::string& max_key() const { return reader->properties().max_key; }
  uint64_t size() const { return reader->properties().file_size; }
  bool Overlaps(std::string_view from, std::string_view to) const {
    return !(to < min_key() || max_key() < from);
  }
};
using SstFilePtr = std::shared_ptr<const SstFile>;

std::string SstFileName(uint64_t id);

// Immutable file set. L0 is ordered newest first; deeper levels are sorted
// by key and pairwise disjoint.
class LevelSet {
 public:
  LevelSet() = default;

  // Copy with files removed (by id) and added.
  std::shared_ptr<const LevelSet> Apply(const std::vector<uint64_t>& drop, const std::vector<SstFilePtr>& add) const;

  const std::vector<SstFilePtr>& level(int l) const { return levels_[l]; }
  // Files that may hold the key, in search order: every covering L0 file
  // newest first, then at most one file per deeper level.
  void SearchOrder(std::string_view key, std::vector<const SstFile*>* out) const;
  std::vector<SstFilePtr> Overlapping(int level, std::string_view from, std::string_view to) const;
  // Any file on a level deeper than `level` overlapping [from, to].
  bool AnyBelow(int level, std::string_view from, std::string_view to) const;

  uint64_t LevelBytes(int level) const;
  int DeepestNonEmpty() const;
  size_t file_count() const;
  std::vector<SstFilePtr> AllFiles() const;
  // InvalidArgument naming the first overlapping pair on a level >= 1.
  Status CheckDisjoint() const;

 private:
  std::array<std::vector<SstFilePtr>, kNumLevels> levels_;
};

struct CompactionJob {
  std::vector<SstFilePtr> inputs;
  int target_level = 1;
  bool is_bottommost = false;
  std::string min_key;
  std::string max_key;
};

// Chooses the next job; keeps a per-level cursor so files of a level are
// picked round robin.
class CompactionPicker {
 public:
  explicit CompactionPicker(LsmOptions options = {}) : options_(options) {}

  std::optional<CompactionJob> Pick(const LevelSet& levels);
  // Job merging all of `level` with its overlaps on level + 1 (or rewriting
  // `level` in place when it is the last one).
  static std::optional<CompactionJob> WholeLevel(const LevelSet& levels, int level, int target);

  const LsmOptions& options() const { return options_; }

 private:
  LsmOptions options_;
  std::array<std::string, kNumLevels> cursor_;
};

void FinishJob(const LevelSet& levels, CompactionJob* job);

}  // namespace tandem
