#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>

#include "tandem/kvs.hpp"

namespace tandem {
namespace {

struct Store {
  explicit Store(KvsOptions options = {}, MemEnv* shared = nullptr) : options(options) {
    env = shared ? shared : &own;
    Reopen();
  }
  void Reopen() {
    kvs.reset();
    auto r = LogStore::Open(env, options);
    EXPECT_TRUE(r.ok()) << r.status().ToString();
    kvs = std::move(r).value();
  }
  std::optional<std::string> Get(std::string_view key) {
    std::string v;
    Status s = kvs->Get(key, &v);
    if (s.IsNotFound()) return std::nullopt;
    EXPECT_TRUE(s.ok()) << s.ToString();
    return v;
  }
  std::map<std::string, std::string> Scan() {
    std::map<std::string, std::string> out;
    auto n = kvs->ScanUnordered([&](std::string_view k, std::string_view v) {
      EXPECT_TRUE(out.emplace(std::string(k), std::string(v)).second) << "duplicate " << k;
    });
    EXPECT_TRUE(n.ok());
    EXPECT_EQ(*n, out.size());
    return out;
  }

  KvsOptions options;
  MemEnv own;
  MemEnv* env;
  std::unique_ptr<LogStore> kvs;
};

TEST(Kvs, GetAfterPut) {
  Store s;
  std::string v = std::string("\0\0\0\0\0\0\0\1", 8) + "v1";
  ASSERT_TRUE(s.kvs->Put("Da", v, false).ok());
  EXPECT_EQ(s.Get("Da"), v);
  EXPECT_EQ(s.Get("Dz"), std::nullopt);
}

TEST(Kvs, OverwriteHintMisses) {
  Store s;
  ASSERT_TRUE(s.kvs->Put("Da", "v1", false).ok());
  ASSERT_TRUE(s.kvs->Put("Da", "v2", true).ok());
  EXPECT_EQ(s.kvs->stats().overwrite_hint_misses, 0u);
  ASSERT_TRUE(s.kvs->Put("Db", "v", true).ok());
  EXPECT_EQ(s.kvs->stats().overwrite_hint_misses, 1u);
  ASSERT_TRUE(s.kvs->Put("Dc", "v", false).ok());
  ASSERT_TRUE(s.kvs->Put("Dc", "v", false).ok());
  EXPECT_EQ(s.kvs->stats().overwrite_hint_misses, 2u);
}

TEST(Kvs, HintMissesMatchMapReplay) {
  Store s;
  std::map<std::string, std::string> oracle;
  std::set<std::string> slots;  // a delete leaves the slot with a marker
  std::mt19937_64 rng(3);
  uint64_t misses = 0;
  for (int i = 0; i < 2000; ++i) {
    std::string key = "k" + std::to_string(rng() % 50);
    if (rng() % 4 == 0) {
      ASSERT_TRUE(s.kvs->Delete(key).ok());
      oracle.erase(key);
      continue;
    }
    bool hint = rng() % 2;
    misses += hint != (slots.count(key) > 0);
    ASSERT_TRUE(s.kvs->Put(key, std::to_string(i), hint).ok());
    oracle[key] = std::to_string(i);
    slots.insert(key);
  }
  EXPECT_EQ(s.kvs->stats().overwrite_hint_misses, misses);
}

TEST(Kvs, DeleteIsIdempotent) {
  Store s;
  bool existed = true;
  ASSERT_TRUE(s.kvs->Delete("absent", &existed).ok());
  EXPECT_FALSE(existed);
  ASSERT_TRUE(s.kvs->Put("k", "v", false).ok());
  ASSERT_TRUE(s.kvs->Delete("k", &existed).ok());
  EXPECT_TRUE(existed);
  ASSERT_TRUE(s.kvs->Delete("k", &existed).ok());
  EXPECT_FALSE(existed);
  EXPECT_EQ(s.Get("k"), std::nullopt);
  EXPECT_TRUE(s.Scan().empty());
}

TEST(Kvs, DeleteIfChecksValue) {
  Store s;
  ASSERT_TRUE(s.kvs->Put("k", "keep", false).ok());
  bool deleted = true;
  ASSERT_TRUE(s.kvs->DeleteIf("k", [](std::string_view v) { return v == "drop"; }, &deleted).ok());
  EXPECT_FALSE(deleted);
  EXPECT_EQ(s.Get("k"), "keep");
  ASSERT_TRUE(s.kvs->DeleteIf("k", [](std::string_view v) { return v == "keep"; }, &deleted).ok());
  EXPECT_TRUE(deleted);
  EXPECT_EQ(s.Get("k"), std::nullopt);
}

TEST(Kvs, SizeLimits) {
  Store s;
  EXPECT_FALSE(s.kvs->Put("", "v", false).ok());
  EXPECT_FALSE(s.kvs->Put(std::string(kMaxStoreKeyBytes + 1, 'k'), "v", false).ok());
  EXPECT_TRUE(s.kvs->Put(std::string(kMaxStoreKeyBytes, 'k'), "v", false).ok());
  EXPECT_FALSE(s.kvs->Put("k", std::string(kMaxStoreValueBytes + 1, 'v'), false).ok());
}

TEST(Kvs, ClosedStoreRejectsOps) {
  Store s;
  ASSERT_TRUE(s.kvs->Close().ok());
  std::string v;
  EXPECT_FALSE(s.kvs->Put("k", "v", false).ok());
  EXPECT_FALSE(s.kvs->Get("k", &v).ok());
  EXPECT_FALSE(s.kvs->Delete("k").ok());
  EXPECT_FALSE(s.kvs->ScanUnordered([](auto, auto) {}).ok());
}

TEST(Kvs, ScanEmitsLiveMap) {
  Store s;
  EXPECT_TRUE(s.Scan().empty());
  ASSERT_TRUE(s.kvs->Put("a", "1", false).ok());
  ASSERT_TRUE(s.kvs->Put("b", "2", false).ok());
  ASSERT_TRUE(s.kvs->Put("c", "3", false).ok());
  ASSERT_TRUE(s.kvs->Delete("b").ok());
  std::map<std::string, std::string> expected{{"a", "1"}, {"c", "3"}};
  EXPECT_EQ(s.Scan(), expected);
}

TEST(Kvs, GcWithNoDeadBytesReclaimsNothing) {
  Store s;
  ASSERT_TRUE(s.kvs->Put("a", "1", false).ok());
  auto r = s.kvs->Gc();
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(*r, 0u);
}

TEST(Kvs, GcReclaimsOverwrittenPayloads) {
  Store s;
  const std::string value(100, 'x');
  for (int i = 0; i < 10; ++i) ASSERT_TRUE(s.kvs->Put("key", value, i > 0).ok());
  // Record: 8 header bytes, key, value, 4 crc bytes.
  const uint64_t record = 8 + 3 + value.size() + 4;
  auto r = s.kvs->Gc();
  ASSERT_TRUE(r.ok());
  EXPECT_GE(*r, 9 * record);
  EXPECT_EQ(s.Get("key"), value);
  EXPECT_EQ(s.kvs->live_records(), 1u);
}

TEST(Kvs, RandomOpsMatchMapAcrossGcAndReopen) {
  KvsOptions o;
  o.segment_bytes = 16 << 10;
  Store s(o);
  std::map<std::string, std::string> oracle;
  std::mt19937_64 rng(11);
  for (int i = 0; i < 10000; ++i) {
    std::string key = "k" + std::to_string(rng() % 1000);
    if (rng() % 3 == 0) {
      ASSERT_TRUE(s.kvs->Delete(key).ok());
      oracle.erase(key);
    } else {
      std::string v(rng() % 64, static_cast<char>('a' + i % 26));
      ASSERT_TRUE(s.kvs->Put(key, v, oracle.count(key) > 0).ok());
      oracle[key] = v;
    }
    if (i % 2500 == 2499) {
      auto before = s.Scan();
      ASSERT_TRUE(s.kvs->Gc().ok());
      EXPECT_EQ(s.Scan(), before);
    }
  }
  for (int i = 0; i < 1000; ++i) {
    std::string key = "k" + std::to_string(i);
    auto it = oracle.find(key);
    EXPECT_EQ(s.Get(key), it == oracle.end() ? std::nullopt : std::optional(it->second)) << key;
  }
  EXPECT_EQ(s.Scan(), oracle);
  ASSERT_TRUE(s.kvs->Sync().ok());
  s.Reopen();
  EXPECT_EQ(s.Scan(), oracle);
}

TEST(Kvs, SyncedWritesSurviveCrash) {
  MemEnv env;
  {
    Store s({}, &env);
    ASSERT_TRUE(s.kvs->Put("k", "v", false).ok());
    ASSERT_TRUE(s.kvs->Sync().ok());
    ASSERT_TRUE(s.kvs->Put("lost", "v", false).ok());
    auto crashed = env.CrashNow();
    Store after({}, crashed.get());
    EXPECT_EQ(after.Get("k"), "v");
    EXPECT_EQ(after.Get("lost"), std::nullopt);
  }
}

TEST(Kvs, SyncOfEmptyBufferWritesNothing) {
  MemEnv env;
  Store s({}, &env);
  ASSERT_TRUE(s.kvs->Sync().ok());
  uint64_t events = env.event_count();
  ASSERT_TRUE(s.kvs->Sync().ok());
  EXPECT_EQ(env.event_count(), events);
}

// Crash at every durability event: the recovered map equals the oracle as
// of the last sync that completed within the retained prefix.
TEST(Kvs, CrashAtEverySyncBoundary) {
  MemEnv env(true);
  KvsOptions o;
  o.segment_bytes = 4 << 10;
  std::vector<std::pair<uint64_t, std::map<std::string, std::string>>> synced;
  {
    Store s(o, &env);
    synced.emplace_back(env.event_count(), std::map<std::string, std::string>{});
    std::map<std::string, std::string> oracle;
    std::mt19937_64 rng(5);
    for (int i = 0; i < 400; ++i) {
      std::string key = "k" + std::to_string(rng() % 40);
      if (rng() % 4 == 0) {
        ASSERT_TRUE(s.kvs->Delete(key).ok());
        oracle.erase(key);
      } else {
        std::string v(rng() % 200, static_cast<char>('a' + i % 26));
        ASSERT_TRUE(s.kvs->Put(key, v, false).ok());
        oracle[key] = v;
      }
      if (i % 20 == 19) {
        ASSERT_TRUE(s.kvs->Sync().ok());
        synced.emplace_back(env.event_count(), oracle);
      }
    }
  }
  for (size_t k = 0; k < synced.size(); ++k) {
    auto image = env.CrashAt(synced[k].first);
    Store after(o, image.get());
    EXPECT_EQ(after.Scan(), synced[k].second) << "sync " << k;
  }
}

}  // namespace
}  // namespace tandem
