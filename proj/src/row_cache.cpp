#include "tandem/row_cache.hpp"

namespace tandem {

std::optional<RowCache::Entry> RowCache::Lookup(std::string_view key) {
  if (!enabled()) return std::nullopt;
  std::lock_guard lock(mu_);
  auto it = map_.find(std::string(key));
  if (it == map_.end()) return std::nullopt;
  lru_.splice(lru_.begin(), lru_, it->second.lru);
  return it->second.entry;
}

void RowCache::OnWrite(std::string_view key, SeqNum sn, std::optional<std::string_view> value) {
  if (!enabled()) return;
  last_write_[StripeOf(key)].store(sn, std::memory_order_release);
  std::lock_guard lock(mu_);
  Entry e;
  e.sn = sn;
  if (value) e.value = std::string(*value);
  InsertLocked(key, std::move(e));
}

void RowCache::Fill(std::string_view key, SeqNum read_start, const Entry& found) {
  if (!enabled()) return;
  std::lock_guard lock(mu_);
  if (last_write_[StripeOf(key)].load(std::memory_order_acquire) > read_start) return;
  auto it = map_.find(std::string(key));
  if (it != map_.end() && it->second.entry.sn >= found.sn) return;
  InsertLocked(key, found);
}

void RowCache::InsertLocked(std::string_view key, Entry entry) {
  std::string k(key);
  auto it = map_.find(k);
  if (it != map_.end()) {
    bytes_ -= Cost(key, it->second.entry);
    it->second.entry = std::move(entry);
    bytes_ += Cost(key, it->second.entry);
    lru_.splice(lru_.begin(), lru_, it->second.lru);
  } else {
    lru_.push_front(k);
    bytes_ += Cost(key, entry);
    map_.emplace(std::move(k), Slot{std::move(entry), lru_.begin()});
  }
  EvictLocked();
}

void RowCache::EvictLocked() {
  while (bytes_ > capacity_ && !lru_.empty()) {
    auto it = map_.find(lru_.back());
    bytes_ -= Cost(it->first, it->second.entry);
    map_.erase(it);
    lru_.pop_back();
  }
}

uint64_t RowCache::bytes() const {
  std::lock_guard lock(mu_);
  return bytes_;
}

size_t RowCache::size() const {
  std::lock_guard lock(mu_);
  return map_.size();
}

}  // namespace tandem
