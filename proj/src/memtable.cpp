#include "tandem/memtable.hpp"

#include <mutex>

namespace tandem {

void Memtable::Insert(std::string_view key, SeqNum sn, MemOp op, std::string_view value) {
  std::unique_lock lock(mu_);
  auto it = table_.find(key);
  if (it == table_.end()) it = table_.emplace(std::string(key), std::vector<MemEntry>{}).first;
  it->second.push_back(MemEntry{sn, op, std::string(value)});
  ++entries_;
  if (sn > max_sn_) max_sn_ = sn;
  bytes_.fetch_add(key.size() + value.size() + 32, std::memory_order_relaxed);
}

std::optional<MemEntry> Memtable::Get(std::string_view key) const {
  std::shared_lock lock(mu_);
  auto it = table_.find(key);
  if (it == table_.end() || it->second.empty()) return std::nullopt;
  return it->second.back();
}

std::optional<MemEntry> Memtable::GetBefore(std::string_view key, SeqNum sn) const {
  std::shared_lock lock(mu_);
  auto it = table_.find(key);
  if (it == table_.end()) return std::nullopt;
  const auto& versions = it->second;
  for (auto v = versions.rbegin(); v != versions.rend(); ++v) {
    if (v->sn < sn) return *v;
  }
  return std::nullopt;
}

void Memtable::VisitRange(
    std::string_view from, const std::optional<std::string>& to,
    const std::function<void(const std::string& key, const std::vector<MemEntry>& versions)>& fn) const {
  std::shared_lock lock(mu_);
  for (auto it = table_.lower_bound(from); it != table_.end(); ++it) {
    if (to && it->first > *to) break;
    fn(it->first, it->second);
  }
}

size_t Memtable::entry_count() const {
  std::shared_lock lock(mu_);
  return entries_;
}

SeqNum Memtable::max_sn() const {
  std::shared_lock lock(mu_);
  return max_sn_;
}

}  // namespace tandem
