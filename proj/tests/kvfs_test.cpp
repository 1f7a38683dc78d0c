#include <gtest/gtest.h>

#include <random>

#include "tandem/kvfs.hpp"

namespace tandem {
namespace {

struct Fs {
  Fs() {
    auto r = LogStore::Open(&env, {});
    EXPECT_TRUE(r.ok());
    kvs = std::move(r).value();
    fs = std::make_unique<Kvfs>(kvs.get());
  }
  ExtentId Create(const std::string& name, std::string_view data = {}, FileKind kind = FileKind::kSst) {
    auto w = fs->Create(name, kind);
    EXPECT_TRUE(w.ok()) << w.status().ToString();
    if (!data.empty()) EXPECT_TRUE((*w)->Append(data).ok());
    EXPECT_TRUE((*w)->Sync().ok());
    EXPECT_TRUE(fs->Seal(**w).ok());
    return (*w)->extent();
  }
  uint64_t BlockRecords(ExtentId extent) {
    uint64_t n = 0;
    std::string prefix = BlockKey(extent, 0).substr(0, 5);
    (void)kvs->ScanUnordered([&](std::string_view k, std::string_view) { n += k.substr(0, 5) == prefix; });
    return n;
  }

  MemEnv env;
  std::unique_ptr<LogStore> kvs;
  std::unique_ptr<Kvfs> fs;
};

TEST(Kvfs, BlockKeyLayout) {
  EXPECT_EQ(BlockKey(0x01020304, 0x0a0b0c0d), std::string("F\x01\x02\x03\x04\x0a\x0b\x0c\x0d", 9));
}

TEST(Kvfs, FirstExtentIsZero) {
  Fs f;
  EXPECT_EQ(f.Create("sst/1"), 0u);
}

TEST(Kvfs, DeletedExtentIsReused) {
  Fs f;
  ExtentId a = f.Create("f1");
  ASSERT_TRUE(f.fs->Delete("f1").ok());
  EXPECT_EQ(f.Create("f2"), a);
}

TEST(Kvfs, PoolStateAfterMiddleDelete) {
  Fs f;
  EXPECT_EQ(f.Create("a"), 0u);
  EXPECT_EQ(f.Create("b"), 1u);
  EXPECT_EQ(f.Create("c"), 2u);
  ASSERT_TRUE(f.fs->Delete("b").ok());
  EXPECT_EQ(f.fs->free_pool(), std::set<ExtentId>{1});
  EXPECT_EQ(f.Create("d"), 1u);
  EXPECT_TRUE(f.fs->free_pool().empty());
  EXPECT_EQ(f.fs->next_fresh(), 3u);
}

TEST(Kvfs, CreateExistingNameFails) {
  Fs f;
  f.Create("a");
  EXPECT_FALSE(f.fs->Create("a", FileKind::kSst).ok());
}

TEST(Kvfs, FullBlockIsOneRecord) {
  Fs f;
  ExtentId e = f.Create("sst/1", std::string(4096, 'x'));
  EXPECT_EQ(f.BlockRecords(e), 1u);
}

TEST(Kvfs, PartialTailIsRewrittenInPlace) {
  Fs f;
  auto w = f.fs->Create("sst/1", FileKind::kSst);
  ASSERT_TRUE(w.ok());
  ASSERT_TRUE((*w)->Append(std::string(5000, 'a')).ok());
  ASSERT_TRUE((*w)->Sync().ok());
  EXPECT_EQ(f.BlockRecords((*w)->extent()), 2u);
  const uint64_t misses = f.kvs->stats().overwrite_hint_misses;
  ASSERT_TRUE((*w)->Append(std::string(100, 'b')).ok());
  ASSERT_TRUE((*w)->Sync().ok());
  EXPECT_EQ(f.BlockRecords((*w)->extent()), 2u);
  EXPECT_EQ(f.kvs->stats().overwrite_hint_misses, misses);
  ASSERT_TRUE(f.fs->Seal(**w).ok());
  std::string out;
  ASSERT_TRUE(f.fs->ReadAll("sst/1", &out).ok());
  EXPECT_EQ(out, std::string(5000, 'a') + std::string(100, 'b'));
}

TEST(Kvfs, RecycledExtentWritesWithCorrectHints) {
  Fs f;
  f.Create("a", std::string(3 * 4096, 'a'));
  ASSERT_TRUE(f.fs->Delete("a").ok());
  const uint64_t misses = f.kvs->stats().overwrite_hint_misses;
  f.Create("b", std::string(3 * 4096, 'b'));
  EXPECT_EQ(f.kvs->stats().overwrite_hint_misses, misses);
}

TEST(Kvfs, RoundTripAtAnyOffset) {
  Fs f;
  std::mt19937_64 rng(2);
  std::string all;
  auto w = f.fs->Create("wal/1", FileKind::kWal);
  ASSERT_TRUE(w.ok());
  for (int i = 0; i < 50; ++i) {
    std::string chunk(rng() % 9000, static_cast<char>('a' + i % 26));
    all += chunk;
    ASSERT_TRUE((*w)->Append(chunk).ok());
    if (i % 7 == 0) ASSERT_TRUE((*w)->Sync().ok());
  }
  ASSERT_TRUE((*w)->Sync().ok());
  ASSERT_TRUE(f.fs->Seal(**w).ok());
  std::string out;
  ASSERT_TRUE(f.fs->ReadAll("wal/1", &out).ok());
  EXPECT_EQ(out, all);
  for (int i = 0; i < 200; ++i) {
    uint64_t off = rng() % all.size();
    size_t len = rng() % (all.size() - off + 1);
    ASSERT_TRUE(f.fs->ReadAt("wal/1", off, len, &out).ok());
    EXPECT_EQ(out, all.substr(off, len));
  }
}

TEST(Kvfs, ReadPastEndFails) {
  Fs f;
  f.Create("a", "hello");
  std::string out;
  EXPECT_FALSE(f.fs->ReadAt("a", 5, 1, &out).ok());
  EXPECT_TRUE(f.fs->ReadAt("a", 4, 1, &out).ok());
}

TEST(Kvfs, DeleteRemovesBlocksAndName) {
  Fs f;
  ExtentId e = f.Create("sst/1", std::string(10000, 'x'));
  ASSERT_TRUE(f.fs->Delete("sst/1").ok());
  EXPECT_TRUE(f.fs->List("").empty());
  EXPECT_EQ(f.BlockRecords(e), 0u);
  EXPECT_TRUE(f.fs->Delete("sst/1").IsNotFound());
}

TEST(Kvfs, ListByPrefix) {
  Fs f;
  f.Create("sst/1");
  f.Create("wal/1", {}, FileKind::kWal);
  EXPECT_EQ(f.fs->List("sst/"), std::vector<std::string>{"sst/1"});
}

TEST(Kvfs, LiveExtentsStayDistinct) {
  Fs f;
  std::mt19937_64 rng(8);
  std::set<std::string> live;
  for (int i = 0; i < 500; ++i) {
    if (!live.empty() && rng() % 2) {
      auto it = std::next(live.begin(), rng() % live.size());
      ASSERT_TRUE(f.fs->Delete(*it).ok());
      live.erase(it);
    } else {
      std::string name = "f" + std::to_string(i);
      f.Create(name, std::string(rng() % 5000, 'z'));
      live.insert(name);
    }
    std::set<ExtentId> extents;
    for (const auto& info : f.fs->Files()) {
      EXPECT_TRUE(extents.insert(info.extent).second);
      EXPECT_FALSE(f.fs->free_pool().count(info.extent));
    }
  }
}

}  // namespace
}  // namespace tandem
