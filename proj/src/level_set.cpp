#include "tandem/level_set.hpp"

#include <algorithm>
#include <unordered_set>

namespace tandem {

std::string SstFileName(uint64_t id) { return "sst/" + std::to_string(id); }

std::shared_ptr<const LevelSet> LevelSet::Apply(const std::vector<uint64_t>& drop,
                                                const std::vector<SstFilePtr>& add) const {
  auto next = std::make_shared<LevelSet>(*this);
  std::unordered_set<uint64_t> dropped(drop.begin(), drop.end());
  for (auto& files : next->levels_) {
    std::erase_if(files, [&](const SstFilePtr& f) { return dropped.count(f->id) > 0; });
  }
  for (const auto& f : add) next->levels_[f->level].push_back(f);
  std::sort(next->levels_[0].begin(), next->levels_[0].end(),
            [](const SstFilePtr& a, const SstFilePtr& b) { return a->id > b->id; });
  for (int l = 1; l < kNumLevels; ++l) {
    std::sort(next->levels_[l].begin(), next->levels_[l].end(),
              [](const SstFilePtr& a, const SstFilePtr& b) { return a->min_key() < b->min_key(); });
  }
  return next;
}

void LevelSet::SearchOrder(std::string_view key, std::vector<const SstFile*>* out) const {
  out->clear();
  for (const auto& f : levels_[0]) {
    if (f->reader->Covers(key)) out->push_back(f.get());
  }
  for (int l = 1; l < kNumLevels; ++l) {
    const auto& files = levels_[l];
    auto it = std::lower_bound(files.begin(), files.end(), key,
                               [](const SstFilePtr& f, std::string_view k) { return f->max_key() < k; });
    if (it != files.end() && (*it)->reader->Covers(key)) out->push_back(it->get());
  }
}

std::vector<SstFilePtr> LevelSet::Overlapping(int level, std::string_view from, std::string_view to) const {
  std::vector<SstFilePtr> out;
  for (const auto& f : levels_[level]) {
    if (f->Overlaps(from, to)) out.push_back(f);
  }
  return out;
}

bool LevelSet::AnyBelow(int level, std::string_view from, std::string_view to) const {
  for (int l = level + 1; l < kNumLevels; ++l) {
    for (const auto& f : levels_[l]) {
      if (f->Overlaps(from, to)) return true;
    }
  }
  return false;
}

uint64_t LevelSet::LevelBytes(int level) const {
  uint64_t total = 0;
  for (const auto& f : levels_[level]) total += f->size();
  return total;
}

int LevelSet::DeepestNonEmpty() const {
  for (int l = kNumLevels - 1; l >= 0; --l) {
    if (!levels_[l].empty()) return l;
  }
  return -1;
}

size_t LevelSet::file_count() const {
  size_t n = 0;
  for (const auto& files : levels_) n += files.size();
  return n;
}

std::vector<SstFilePtr> LevelSet::AllFiles() const {
  std::vector<SstFilePtr> out;
  for (const auto& files : levels_) out.insert(out.end(), files.begin(), files.end());
  return out;
}

Status LevelSet::CheckDisjoint() const {
  for (int l = 1; l < kNumLevels; ++l) {
    const auto& files = levels_[l];
    for (size_t i = 1; i < files.size(); ++i) {
      if (!(files[i - 1]->max_key() < files[i]->min_key())) {
        return Status::InvalidArgument("level " + std::to_string(l) + " files " + std::to_string(files[i - 1]->id) +
                                       " and " + std::to_string(files[i]->id) + " overlap");
      }
    }
  }
  return Status::OK();
}

void FinishJob(const LevelSet& levels, CompactionJob* job) {
  job->min_key.clear();
  job->max_key.clear();
  bool first = true;
  for (const auto& f : job->inputs) {
    if (first || f->min_key() < job->min_key) job->min_key = f->min_key();
    if (first || f->max_key() > job->max_key) job->max_key = f->max_key();
    first = false;
  }
  job->is_bottommost = !levels.AnyBelow(job->target_level, job->min_key, job->max_key);
}

std::optional<CompactionJob> CompactionPicker::WholeLevel(const LevelSet& levels, int level, int target) {
  if (levels.level(level).empty()) return std::nullopt;
  CompactionJob job;
  job.target_level = target;
  job.inputs = levels.level(level);
  if (target != level) {
    std::string lo = job.inputs.front()->min_key(), hi = job.inputs.front()->max_key();
    for (const auto& f : job.inputs) {
      lo = std::min(lo, f->min_key());
      hi = std::max(hi, f->max_key());
    }
    for (auto& f : levels.Overlapping(target, lo, hi)) job.inputs.push_back(f);
  }
  FinishJob(levels, &job);
  return job;
}

std::optional<CompactionJob> CompactionPicker::Pick(const LevelSet& levels) {
  if (levels.level(0).size() >= options_.l0_trigger) return WholeLevel(levels, 0, 1);
  for (int l = 1; l + 1 < kNumLevels; ++l) {
    const auto& files = levels.level(l);
    if (files.empty() || levels.LevelBytes(l) <= options_.LevelCapacity(l)) continue;
    // First file starting after the cursor, wrapping around.
    auto it = std::find_if(files.begin(), files.end(), [&](const SstFilePtr& f) { return f->min_key() > cursor_[l]; });
    if (it == files.end()) it = files.begin();
    cursor_[l] = (*it)->max_key();
    CompactionJob job;
    job.target_level = l + 1;
    job.inputs.push_back(*it);
    for (auto& f : levels.Overlapping(l + 1, (*it)->min_key(), (*it)->max_key())) job.inputs.push_back(f);
    FinishJob(levels, &job);
    return job;
  }
  return std::nullopt;
}

}  // namespace tandem
