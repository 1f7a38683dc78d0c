#include <gtest/gtest.h>

#include <map>
#include <random>

#include "tandem/db.hpp"
#include "tandem/harness/audit.hpp"
#include "tandem/harness/oracle.hpp"

namespace tandem {
namespace {

struct Fixture {
  explicit Fixture(EngineConfig config = Config()) : config(config) { Open(); }

  static EngineConfig Config() {
    EngineConfig c;
    c.deterministic = true;
    c.lsm.l0_trigger = 2;
    return c;
  }
  void Open(RecoveryReport* report = nullptr) {
    db.reset();
    DbOptions o;
    o.env = env.get();
    o.config = config;
    auto r = Db::Open(o, report);
    ASSERT_TRUE(r.ok()) << r.status().ToString();
    db = std::move(r).value();
  }
  // Drops unsynced state and reopens.
  void Crash(RecoveryReport* report = nullptr) {
    (void)db->SyncWal();
    auto image = env->CrashNow();
    db.reset();
    env = std::move(image);
    Open(report);
  }
  std::optional<std::string> Get(std::string_view key) {
    auto r = db->Get(key);
    EXPECT_TRUE(r.ok()) << r.status().ToString();
    return r.ok() ? *r : std::nullopt;
  }
  std::optional<std::string> GetAt(std::string_view key, Snapshot s) {
    auto r = db->GetAt(key, s);
    EXPECT_TRUE(r.ok()) << r.status().ToString();
    return r.ok() ? *r : std::nullopt;
  }
  bool HasRecord(const std::string& store_key) { return db->kvs()->Contains(store_key); }
  void Put(std::string_view k, std::string_view v) { ASSERT_TRUE(db->Put(k, v).ok()); }

  EngineConfig config;
  std::unique_ptr<MemEnv> env = std::make_unique<MemEnv>();
  std::unique_ptr<Db> db;
};

// ---------------------------------------------------------------------------
// Point reads

TEST(Engine, RandomOpsMatchOracle) {
  Fixture f;
  harness::OracleDb oracle;
  std::mt19937_64 rng(21);
  for (int i = 0; i < 10000; ++i) {
    std::string key = "k" + std::to_string(rng() % 300);
    if (rng() % 4 == 0) {
      ASSERT_TRUE(f.db->Delete(key).ok());
      oracle.Delete(key);
    } else {
      std::string v = "v" + std::to_string(i);
      f.Put(key, v);
      oracle.Put(key, v);
    }
    if (i % 1500 == 0) ASSERT_TRUE(f.db->FlushNow().ok());
    if (i % 4000 == 0) ASSERT_TRUE(f.db->CompactUntilQuiescent().ok());
  }
  for (int i = 0; i < 300; ++i) {
    std::string key = "k" + std::to_string(i);
    EXPECT_EQ(f.Get(key), oracle.Get(key)) << key;
  }
}

TEST(Engine, CompactedSingleVersionGetBypassesTheLsm) {
  Fixture f;
  f.Put("a", "v1");
  ASSERT_TRUE(f.db->CompactRange().ok());
  auto before = f.db->counters();
  EXPECT_EQ(f.Get("a"), "v1");
  auto d = f.db->counters() - before;
  EXPECT_EQ(d.sst_block_reads, 0u);
  EXPECT_EQ(d.kvs_value_reads, 1u);
}

TEST(Engine, VersionedGetReadsOneBlockAndOneValue) {
  Fixture f;
  f.Put("a", "v1");
  ASSERT_TRUE(f.db->CompactRange().ok());
  auto snap = f.db->CreateSnapshot();
  ASSERT_TRUE(snap.ok());
  f.Put("a", "v2");
  ASSERT_TRUE(f.db->FlushNow().ok());
  auto before = f.db->counters();
  EXPECT_EQ(f.Get("a"), "v2");
  auto d = f.db->counters() - before;
  EXPECT_EQ(d.sst_block_reads, 1u);
  EXPECT_EQ(d.kvs_value_reads, 1u);
  EXPECT_EQ(f.GetAt("a", *snap), "v1");
}

TEST(Engine, RenamedUnderTheReaderFallsBackToDirect) {
  Fixture f;
  auto snap = f.db->CreateSnapshot();
  ASSERT_TRUE(snap.ok());
  f.Put("a", "v");
  const SeqNum sn = f.db->clock();
  ASSERT_TRUE(f.db->FlushNow().ok());
  ASSERT_TRUE(f.HasRecord(VersionedKey("a", sn)));
  // What a concurrent rename leaves behind once it has finished.
  ASSERT_TRUE(f.db->kvs()->Put(DirectKey("a"), DirectValue(sn, "v"), false).ok());
  ASSERT_TRUE(f.db->kvs()->Delete(VersionedKey("a", sn)).ok());
  auto before = f.db->counters();
  EXPECT_EQ(f.Get("a"), "v");
  EXPECT_EQ((f.db->counters() - before).fallback_reads, 1u);
}

TEST(Engine, GetAtSnapshot) {
  Fixture f;
  f.Put("a", "v1");
  auto s = f.db->CreateSnapshot();
  ASSERT_TRUE(s.ok());
  f.Put("a", "v2");
  f.Put("b", "born later");
  ASSERT_TRUE(f.db->Delete("a").ok());
  EXPECT_EQ(f.GetAt("a", *s), "v1");
  EXPECT_EQ(f.GetAt("b", *s), std::nullopt);
  EXPECT_EQ(f.Get("a"), std::nullopt);
  ASSERT_TRUE(f.db->CompactRange().ok());
  EXPECT_EQ(f.GetAt("a", *s), "v1");
  EXPECT_EQ(f.GetAt("b", *s), std::nullopt);
}

// ---------------------------------------------------------------------------
// Snapshots

TEST(Engine, SnapshotListIsSortedAndDoesNotSurviveRestart) {
  Fixture f;
  f.Put("a", "v");
  auto s1 = f.db->CreateSnapshot();
  auto s2 = f.db->CreateSnapshot();
  ASSERT_TRUE(s1.ok() && s2.ok());
  EXPECT_EQ(s2->sn, f.db->clock());
  EXPECT_EQ(f.db->ActiveSnapshots(), (std::vector<SeqNum>{s1->sn, s2->sn}));
  f.Crash();
  EXPECT_TRUE(f.db->ActiveSnapshots().empty());
  EXPECT_EQ(f.Get("a"), "v");
  ASSERT_TRUE(f.db->ReleaseSnapshot(*f.db->CreateSnapshot()).ok());
  EXPECT_TRUE(f.db->ActiveSnapshots().empty());
}

// ---------------------------------------------------------------------------
// Iteration

TEST(Engine, IterateRangesAndWorkerCounts) {
  Fixture f;
  for (const char* k : {"a", "b", "c", "d"}) f.Put(k, std::string("v") + k);
  ASSERT_TRUE(f.db->Delete("b").ok());
  auto empty = f.db->Iterate("x", std::string("z"));
  ASSERT_TRUE(empty.ok());
  EXPECT_TRUE(empty->empty());
  auto rows = f.db->Iterate("a", std::string("c"));
  ASSERT_TRUE(rows.ok());
  EXPECT_EQ(*rows, (std::vector<Db::KV>{{"a", "va"}, {"c", "vc"}}));

  for (int i = 0; i < 500; ++i) f.Put("k" + std::to_string(i), std::to_string(i));
  ASSERT_TRUE(f.db->FlushNow().ok());
  auto snap = f.db->CreateSnapshot();
  ASSERT_TRUE(snap.ok());
  for (int i = 0; i < 500; i += 3) f.Put("k" + std::to_string(i), "new");
  auto one = f.db->IterateAt("k", std::nullopt, *snap, 1);
  auto eight = f.db->IterateAt("k", std::nullopt, *snap, 8);
  ASSERT_TRUE(one.ok() && eight.ok());
  EXPECT_EQ(one->size(), 500u);
  EXPECT_EQ(*one, *eight);
}

// ---------------------------------------------------------------------------
// Direct-mode safety and flush

TEST(Engine, DirectModeSafety) {
  Fixture f;
  EXPECT_TRUE(f.db->IsDirectModeSafe("a", 10, 0));
  auto snap = f.db->CreateSnapshot();
  ASSERT_TRUE(snap.ok());
  EXPECT_FALSE(f.db->IsDirectModeSafe("a", snap->sn + 1, 0));
  EXPECT_TRUE(f.db->IsDirectModeSafe("a", snap->sn, 0));
  // Leave a versioned "a" on the bottom level.
  f.Put("a", "v1");
  ASSERT_TRUE(f.db->CompactRange().ok());
  const int bottom = f.db->current()->DeepestNonEmpty();
  ASSERT_GE(bottom, 1);
  ASSERT_TRUE(f.db->ReleaseSnapshot(*snap).ok());
  const SeqNum next = f.db->clock() + 1;
  EXPECT_FALSE(f.db->IsDirectModeSafe("a", next, 0));
  EXPECT_FALSE(f.db->IsDirectModeSafe("a", next, bottom - 1));
  EXPECT_TRUE(f.db->IsDirectModeSafe("a", next, bottom));
  EXPECT_TRUE(f.db->IsDirectModeSafe("b", next, 0));
}

TEST(Engine, FlushWritesDirectWithoutSnapshots) {
  Fixture f;
  f.Put("a", "v");
  const SeqNum sn = f.db->clock();
  ASSERT_TRUE(f.db->FlushNow().ok());
  EXPECT_TRUE(f.HasRecord(DirectKey("a")));
  EXPECT_FALSE(f.HasRecord(VersionedKey("a", sn)));
  EXPECT_FALSE(f.db->current()->level(0)[0]->reader->InBloom("a"));
}

TEST(Engine, FlushUnderSnapshotKeepsBothVersions) {
  Fixture f;
  f.Put("a", "v1");
  const SeqNum old_sn = f.db->clock();
  auto snap = f.db->CreateSnapshot();
  ASSERT_TRUE(snap.ok());
  f.Put("a", "v2");
  const SeqNum new_sn = f.db->clock();
  ASSERT_TRUE(f.db->FlushNow().ok());
  EXPECT_TRUE(f.HasRecord(VersionedKey("a", new_sn)));
  EXPECT_TRUE(f.HasRecord(DirectKey("a")) || f.HasRecord(VersionedKey("a", old_sn)));
  EXPECT_TRUE(f.db->current()->level(0)[0]->reader->InBloom("a"));
  EXPECT_TRUE(harness::AuditInvariant1(*f.db).ok());
  EXPECT_EQ(f.GetAt("a", *snap), "v1");
  EXPECT_EQ(f.Get("a"), "v2");
}

// ---------------------------------------------------------------------------
// Compaction

TEST(Engine, CompactionDropsOlderVersionAndItsRecord) {
  Fixture f;
  f.Put("a", "old");
  ASSERT_TRUE(f.db->FlushNow().ok());
  f.Put("a", "new");
  const SeqNum new_sn = f.db->clock();
  ASSERT_TRUE(f.db->FlushNow().ok());
  ASSERT_TRUE(f.db->CompactRange().ok());
  std::vector<LsmEntry> all;
  for (const auto& file : f.db->current()->AllFiles()) ASSERT_TRUE(file->reader->ReadAll(&all).ok());
  ASSERT_EQ(all.size(), 1u);
  EXPECT_EQ(all[0].sn, new_sn);
  std::string stored;
  ASSERT_TRUE(f.db->kvs()->Get(DirectKey("a"), &stored).ok());
  SeqNum embedded;
  std::string_view value;
  ASSERT_TRUE(ParseDirectValue(stored, &embedded, &value));
  EXPECT_EQ(embedded, new_sn);
  EXPECT_EQ(value, "new");
}

TEST(Engine, BottomTombstoneIsDropped) {
  Fixture f;
  f.Put("a", "v");
  ASSERT_TRUE(f.db->CompactRange().ok());
  ASSERT_TRUE(f.db->Delete("a").ok());
  ASSERT_TRUE(f.db->CompactRange().ok());
  EXPECT_EQ(f.db->current()->file_count(), 0u);
  EXPECT_FALSE(f.HasRecord(DirectKey("a")));
  EXPECT_EQ(f.Get("a"), std::nullopt);
}

TEST(Engine, ReleasedVersionIsRenamedAtTheBottom) {
  Fixture f;
  auto snap = f.db->CreateSnapshot();
  ASSERT_TRUE(snap.ok());
  f.Put("a", "v");
  const SeqNum sn = f.db->clock();
  ASSERT_TRUE(f.db->FlushNow().ok());
  ASSERT_TRUE(f.HasRecord(VersionedKey("a", sn)));
  ASSERT_TRUE(f.db->ReleaseSnapshot(*snap).ok());
  auto before = f.db->counters();
  ASSERT_TRUE(f.db->CompactRange().ok());
  EXPECT_EQ((f.db->counters() - before).renames, 1u);
  EXPECT_FALSE(f.HasRecord(VersionedKey("a", sn)));
  EXPECT_TRUE(f.HasRecord(DirectKey("a")));
  std::vector<LsmEntry> all;
  for (const auto& file : f.db->current()->AllFiles()) ASSERT_TRUE(file->reader->ReadAll(&all).ok());
  ASSERT_EQ(all.size(), 1u);
  EXPECT_EQ(all[0].kind, EntryKind::kDirect);
}

TEST(Engine, DirectEntriesCompactWithoutValueTraffic) {
  Fixture f;
  for (int i = 0; i < 100; ++i) f.Put("k" + std::to_string(i), "v");
  ASSERT_TRUE(f.db->FlushNow().ok());
  auto value_records = [&] {
    std::map<std::string, std::string> out;
    EXPECT_TRUE(f.db->kvs()->ScanUnordered([&](std::string_view k, std::string_view v) {
      if (k[0] == kDirectTag || k[0] == kVersionedTag) out.emplace(k, v);
    }).ok());
    return out;
  };
  auto before = value_records();
  auto counters = f.db->counters();
  ASSERT_TRUE(f.db->CompactRange().ok());
  EXPECT_EQ(value_records(), before);
  EXPECT_EQ(f.db->counters().kvs_value_writes(), counters.kvs_value_writes());
}

TEST(Engine, VersionedStaysVersionedUnderEarlierSnapshot) {
  Fixture f;
  auto snap = f.db->CreateSnapshot();
  ASSERT_TRUE(snap.ok());
  f.Put("a", "v");
  const SeqNum sn = f.db->clock();
  ASSERT_TRUE(f.db->CompactRange().ok());
  EXPECT_TRUE(f.HasRecord(VersionedKey("a", sn)));
  EXPECT_EQ(f.db->counters().renames, 0u);
}

TEST(Engine, RenameToleratesAnAlreadyMovedValue) {
  Fixture f;
  auto snap = f.db->CreateSnapshot();
  ASSERT_TRUE(snap.ok());
  f.Put("a", "v");
  const SeqNum sn = f.db->clock();
  ASSERT_TRUE(f.db->FlushNow().ok());
  // An earlier, interrupted run already finished the rename.
  ASSERT_TRUE(f.db->kvs()->Put(DirectKey("a"), DirectValue(sn, "v"), false).ok());
  ASSERT_TRUE(f.db->kvs()->Delete(VersionedKey("a", sn)).ok());
  ASSERT_TRUE(f.db->ReleaseSnapshot(*snap).ok());
  ASSERT_TRUE(f.db->CompactRange().ok());
  EXPECT_EQ(f.Get("a"), "v");
  auto space = harness::AuditSpace(*f.db);
  EXPECT_TRUE(space.ok()) << space.ToJson();
}

TEST(Engine, ObsoleteVersionedAtBottomTakesDirectWithIt) {
  Fixture f;
  f.Put("a", "direct");
  ASSERT_TRUE(f.db->CompactRange().ok());
  auto snap = f.db->CreateSnapshot();
  ASSERT_TRUE(snap.ok());
  f.Put("a", "versioned");
  const SeqNum sn = f.db->clock();
  ASSERT_TRUE(f.db->FlushNow().ok());
  ASSERT_TRUE(f.db->ReleaseSnapshot(*snap).ok());
  ASSERT_TRUE(f.db->Delete("a").ok());
  ASSERT_TRUE(f.db->CompactRange().ok());
  EXPECT_FALSE(f.HasRecord(VersionedKey("a", sn)));
  EXPECT_FALSE(f.HasRecord(DirectKey("a")));
  EXPECT_EQ(f.db->current()->file_count(), 0u);
}

// ---------------------------------------------------------------------------
// Recovery

TEST(Engine, CleanReopenHasNothingToUndo) {
  Fixture f;
  f.Put("a", "v");
  ASSERT_TRUE(f.db->FlushNow().ok());
  ASSERT_TRUE(f.db->Close().ok());
  RecoveryReport report;
  f.Open(&report);
  EXPECT_EQ(report.orphans_deleted, 0u);
  EXPECT_EQ(report.wal_records_replayed, 0u);
  EXPECT_EQ(f.Get("a"), "v");
}

TEST(Engine, RecoveredClockPassesTheOldOne) {
  Fixture f;
  for (int i = 0; i < 50; ++i) f.Put("a", std::to_string(i));
  const SeqNum before = f.db->clock();
  RecoveryReport report;
  f.Crash(&report);
  EXPECT_GT(f.db->clock(), before);
  EXPECT_EQ(report.wal_records_replayed, 50u);
  EXPECT_EQ(f.Get("a"), "49");
}

// ---------------------------------------------------------------------------
// Checkpoints and backup

TEST(Engine, CheckpointReadsPreCheckpointValues) {
  Fixture f;
  for (int i = 0; i < 100; ++i) f.Put("k" + std::to_string(i), "old");
  auto c = f.db->CreateCheckpoint("c1");
  ASSERT_TRUE(c.ok());
  for (int i = 0; i < 100; ++i) f.Put("k" + std::to_string(i), "new");
  ASSERT_TRUE(f.db->CompactRange().ok());
  for (int i = 0; i < 100; i += 7) {
    auto v = f.db->CheckpointGet(*c, "k" + std::to_string(i));
    ASSERT_TRUE(v.ok());
    EXPECT_EQ(*v, "old");
  }
  f.Crash();
  EXPECT_EQ(f.db->ActiveSnapshots(), std::vector<SeqNum>{c->sn});
  auto rows = f.db->CheckpointIterate(*c, "", std::nullopt);
  ASSERT_TRUE(rows.ok());
  ASSERT_EQ(rows->size(), 100u);
  for (const auto& [k, v] : *rows) EXPECT_EQ(v, "old") << k;
}

TEST(Engine, EmptyCheckpointAndEmptyBackup) {
  Fixture f;
  auto c = f.db->CreateCheckpoint("empty");
  ASSERT_TRUE(c.ok());
  auto rows = f.db->CheckpointIterate(*c, "", std::nullopt);
  ASSERT_TRUE(rows.ok());
  EXPECT_TRUE(rows->empty());
  MemEnv target;
  auto backup = f.db->Backup(*c, &target, Fixture::Config());
  ASSERT_TRUE(backup.ok()) << backup.status().ToString();
  auto all = (*backup)->Iterate("", std::nullopt);
  ASSERT_TRUE(all.ok());
  EXPECT_TRUE(all->empty());
}

TEST(Engine, DroppedCheckpointReleasesItsVersions) {
  Fixture f;
  for (int i = 0; i < 50; ++i) f.Put("k" + std::to_string(i), "a");
  ASSERT_TRUE(f.db->CompactRange().ok());
  auto c = f.db->CreateCheckpoint("c1");
  ASSERT_TRUE(c.ok());
  for (int i = 0; i < 50; ++i) f.Put("k" + std::to_string(i), "b");
  ASSERT_TRUE(f.db->FlushNow().ok());
  ASSERT_TRUE(f.db->DropCheckpoint(*c).ok());
  EXPECT_FALSE(f.db->DropCheckpoint(*c).ok());
  ASSERT_TRUE(f.db->CompactRange().ok());
  ASSERT_TRUE(f.db->kvs()->Gc().ok());
  std::vector<LsmEntry> all;
  for (const auto& file : f.db->current()->AllFiles()) ASSERT_TRUE(file->reader->ReadAll(&all).ok());
  EXPECT_EQ(all.size(), 50u);
  for (const auto& e : all) EXPECT_EQ(e.kind, EntryKind::kDirect) << e.key;
  auto space = harness::AuditSpace(*f.db);
  EXPECT_TRUE(space.ok()) << space.ToJson();
  EXPECT_EQ(space.live_value_records, 50u);
}

TEST(Engine, QuiescentBackupMatchesPrimary) {
  Fixture f;
  std::mt19937_64 rng(4);
  for (int i = 0; i < 2000; ++i) {
    std::string key = "k" + std::to_string(rng() % 500);
    if (rng() % 5 == 0) {
      ASSERT_TRUE(f.db->Delete(key).ok());
    } else {
      f.Put(key, std::to_string(i));
    }
    if (i % 500 == 0) ASSERT_TRUE(f.db->FlushNow().ok());
  }
  auto c = f.db->CreateCheckpoint("c1");
  ASSERT_TRUE(c.ok());
  MemEnv target;
  auto backup = f.db->Backup(*c, &target, Fixture::Config());
  ASSERT_TRUE(backup.ok()) << backup.status().ToString();
  auto a = f.db->Iterate("", std::nullopt);
  auto b = (*backup)->Iterate("", std::nullopt);
  ASSERT_TRUE(a.ok() && b.ok());
  EXPECT_EQ(*a, *b);
}

// Versions newer than the checkpoint are already in the store when the
// scan runs; the backup must leave them out.
TEST(Engine, WritesAfterCheckpointStayOutOfTheBackup) {
  Fixture f;
  std::map<std::string, std::string> at_checkpoint;
  for (int i = 0; i < 200; ++i) {
    f.Put("k" + std::to_string(i), "old");
    at_checkpoint["k" + std::to_string(i)] = "old";
  }
  ASSERT_TRUE(f.db->FlushNow().ok());
  auto c = f.db->CreateCheckpoint("c1");
  ASSERT_TRUE(c.ok());
  for (int i = 0; i < 50; ++i) f.Put("k" + std::to_string(i * 4), "new");
  f.Put("zz", "born later");
  ASSERT_TRUE(f.db->FlushNow().ok());
  MemEnv target;
  BackupReport report;
  auto backup = f.db->Backup(*c, &target, Fixture::Config(), &report);
  ASSERT_TRUE(backup.ok()) << backup.status().ToString();
  auto rows = (*backup)->Iterate("", std::nullopt);
  ASSERT_TRUE(rows.ok());
  EXPECT_EQ(*rows, std::vector<Db::KV>(at_checkpoint.begin(), at_checkpoint.end()));
  EXPECT_GT(report.records_skipped, 0u);
}

}  // namespace
}  // namespace tandem
