#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "aulid/aulid_index.hpp"
#include "test_util.hpp"

using namespace aulid;
using aulid::test::TempFile;

namespace {

std::vector<KeyPayload> pairs_of(const std::vector<Key>& keys) {
  std::vector<KeyPayload> out;
  for (Key k : keys) out.push_back({k, k + 1});
  return out;
}

std::vector<Key> random_keys(std::size_t n, std::uint64_t seed, Key range = Key{1} << 40) {
  std::mt19937_64 rng(seed);
  std::set<Key> s;
  while (s.size() < n) s.insert(rng() % range);
  return {s.begin(), s.end()};
}

std::vector<KeyPayload> oracle_pairs(const std::multimap<Key, Payload>& m) {
  std::vector<KeyPayload> out;
  for (auto [k, p] : m) out.push_back({k, p});
  return out;
}

bool same_multiset(std::vector<KeyPayload> a, std::vector<KeyPayload> b) {
  auto lt = [](const KeyPayload& x, const KeyPayload& y) {
    return x.key != y.key ? x.key < y.key : x.payload < y.payload;
  };
  std::sort(a.begin(), a.end(), lt);
  std::sort(b.begin(), b.end(), lt);
  return a == b;
}

}  // namespace

TEST(AulidBulkload, TinyIndexIsOneLeaf) {
  TempFile f("aulid");
  std::vector<Key> keys = {5, 9, 13, 40, 41, 77, 100, 101, 300, 999};
  auto idx = AulidIndex::bulkload(f.path(), pairs_of(keys));
  EXPECT_FALSE(idx->has_inner());
  const InspectReport r = idx->inspect();
  EXPECT_EQ(r.leaves, 1u);
  EXPECT_EQ(r.inner.mixed_nodes, 0u);
  EXPECT_EQ(r.avg_depth, 0.0);
  for (Key k : keys) {
    idx->store().reset_counters();
    EXPECT_EQ(idx->lookup(k), k + 1);
    EXPECT_EQ(idx->store().counters().reads, 1u);
    EXPECT_TRUE(idx->last_trace().fast_path);
  }
  EXPECT_EQ(idx->lookup(6), std::nullopt);
}

TEST(AulidBulkload, EmptyIndex) {
  TempFile f("aulid");
  auto idx = AulidIndex::bulkload(f.path(), {});
  EXPECT_EQ(idx->lookup(1), std::nullopt);
  EXPECT_TRUE(idx->scan(0, ~Key{0}).empty());
  idx->insert(3, 4);
  EXPECT_EQ(idx->lookup(3), 4u);
  EXPECT_EQ(idx->check(), "");
}

TEST(AulidBulkload, ThousandKeysFourLeavesThreeEntries) {
  TempFile f("aulid");
  auto idx = AulidIndex::bulkload(f.path(), pairs_of(random_keys(1000, 1)));
  ASSERT_EQ(idx->leaf_capacity(), 254u);
  const InspectReport r = idx->inspect();
  EXPECT_EQ(r.leaves, 4u);  // ceil(1000 / 254)
  EXPECT_EQ(idx->inner_items().size(), 3u);
  EXPECT_EQ(r.inner_items, 3u);
  EXPECT_EQ(idx->check(), "");
}

TEST(AulidBulkload, RejectsUnsortedAndBadConfig) {
  TempFile f("aulid");
  std::vector<KeyPayload> bad = {{3, 1}, {2, 1}};
  EXPECT_THROW(AulidIndex::bulkload(f.path(), bad), Error);
  AulidConfig c;
  c.alpha = 0;
  EXPECT_THROW(AulidIndex::bulkload(f.path(), {}, c), Error);
  c = {};
  c.leaf_fill = 1.5;
  EXPECT_THROW(AulidIndex::bulkload(f.path(), {}, c), Error);
}

TEST(AulidLookup, PayloadRuleAndMisses) {
  TempFile f("aulid");
  std::vector<Key> keys;
  for (Key k = 10; k <= 10000; k += 10) keys.push_back(k);
  auto idx = AulidIndex::bulkload(f.path(), pairs_of(keys));
  EXPECT_EQ(idx->lookup(500), 501u);
  EXPECT_EQ(idx->lookup(5), std::nullopt);
  EXPECT_EQ(idx->lookup(505), std::nullopt);
  EXPECT_EQ(idx->lookup(10001), std::nullopt);
}

TEST(AulidLookup, MatchesOracleOnRandomIndex) {
  TempFile f("aulid");
  const auto keys = random_keys(100000, 2);
  auto idx = AulidIndex::bulkload(f.path(), pairs_of(keys));
  const std::set<Key> present(keys.begin(), keys.end());
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100000; ++i) {
    const Key k = i % 2 ? keys[rng() % keys.size()] : rng() % (Key{1} << 40);
    const auto want = present.count(k) ? std::optional<Payload>(k + 1) : std::nullopt;
    ASSERT_EQ(idx->lookup(k), want) << k;
  }
}

TEST(AulidLookup, ScanfwardChangesCostNotResults) {
  TempFile f("aulid");
  const auto keys = random_keys(50000, 4);
  auto idx = AulidIndex::bulkload(f.path(), pairs_of(keys));
  std::mt19937_64 rng(5);
  std::uint64_t on = 0, off = 0;
  for (int i = 0; i < 20000; ++i) {
    const Key k = rng() % 2 ? keys[rng() % keys.size()] : rng() % (Key{1} << 40);
    idx->set_scanfward(true);
    idx->store().reset_counters();
    const auto a = idx->lookup(k);
    on += idx->store().counters().reads;
    idx->set_scanfward(false);
    idx->store().reset_counters();
    const auto b = idx->lookup(k);
    off += idx->store().counters().reads;
    ASSERT_EQ(a, b);
  }
  EXPECT_LE(on, off);
}

TEST(AulidLookup, LowConflictCostBound) {
  TempFile f("aulid");
  std::vector<Key> keys;
  for (Key k = 0; k < 200000; ++k) keys.push_back(k * 1000);
  auto idx = AulidIndex::bulkload(f.path(), pairs_of(keys));
  const SubtreeScan sc = idx->scan_inner();
  ASSERT_EQ(sc.counts.mixed_nodes, 1u);
  ASSERT_EQ(sc.counts.btrees, 0u);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 5000; ++i) {
    const Key k = keys[rng() % keys.size()] + (i % 3 == 0 ? 1 : 0);
    idx->store().reset_counters();
    idx->lookup(k);
    const auto reads = idx->store().counters().reads;
    if (idx->last_trace().fast_path) {
      ASSERT_EQ(reads, 1u);
    } else {
      ASSERT_LE(reads, 4u);
    }
  }
}

TEST(AulidScan, RangesAndCounts) {
  TempFile f("aulid");
  std::vector<Key> keys;
  for (Key k = 10; k <= 100000; k += 10) keys.push_back(k);
  auto idx = AulidIndex::bulkload(f.path(), pairs_of(keys));
  auto r = idx->scan(100, 250);
  ASSERT_EQ(r.size(), 16u);
  EXPECT_EQ(r.front().key, 100u);
  EXPECT_EQ(r.back().key, 250u);
  EXPECT_TRUE(idx->scan(5, 6).empty());
  EXPECT_TRUE(idx->scan(7, 3).empty());
  std::mt19937_64 rng(9);
  for (int i = 0; i < 500; ++i) {
    const std::size_t at = rng() % keys.size();
    const auto got = idx->scan_count(keys[at], 100);
    const std::size_t want = std::min<std::size_t>(100, keys.size() - at);
    ASSERT_EQ(got.size(), want);
    for (std::size_t j = 0; j < want; ++j) ASSERT_EQ(got[j].key, keys[at + j]);
  }
}

TEST(AulidInsert, NonSplitInsertWritesOnlyTheLeaf) {
  TempFile f("aulid");
  auto idx = AulidIndex::bulkload(f.path(), pairs_of(random_keys(20000, 6)), AulidConfig{.leaf_fill = 0.5});
  std::mt19937_64 rng(7);
  for (int i = 0; i < 200; ++i) {
    const Key k = rng() % (Key{1} << 40);
    const std::uint64_t splits = idx->smo().leaf_splits;
    idx->store().reset_counters();
    idx->insert(k, k + 1);
    if (idx->smo().leaf_splits == splits) ASSERT_EQ(idx->store().counters().writes, 1u);
  }
}

TEST(AulidInsert, SplitAddsLeftEntryAndKeepsOriginal) {
  TempFile f("aulid");
  std::vector<Key> keys;
  for (Key k = 0; k < 2000; ++k) keys.push_back(k * 100);
  auto idx = AulidIndex::bulkload(f.path(), pairs_of(keys));
  std::vector<SplitEvent> events;
  idx->set_split_observer([&](const SplitEvent& e) { events.push_back(e); });
  const auto before = idx->inner_items();
  idx->insert(550, 1);  // lands in a full non-last leaf
  ASSERT_EQ(events.size(), 1u);
  const SplitEvent& e = events[0];
  EXPECT_EQ(e.left.size(), (idx->leaf_capacity() + 1) / 2);
  const auto after = idx->inner_items();
  ASSERT_EQ(after.size(), before.size() + 1);
  EXPECT_TRUE(std::find(after.begin(), after.end(), KeyBlock{e.left_max, e.left_id}) != after.end());
  for (const auto& kb : before) EXPECT_TRUE(std::find(after.begin(), after.end(), kb) != after.end());
  EXPECT_EQ(idx->check(), "");
}

TEST(AulidInsert, RandomInsertsMatchOracle) {
  TempFile f("aulid");
  const auto keys = random_keys(20000, 8);
  auto idx = AulidIndex::bulkload(f.path(), pairs_of(keys));
  std::multimap<Key, Payload> oracle;
  for (Key k : keys) oracle.emplace(k, k + 1);
  std::mt19937_64 rng(9);
  for (int i = 0; i < 100000; ++i) {
    const Key k = rng() % (Key{1} << 40);
    idx->insert(k, k + 1);
    oracle.emplace(k, k + 1);
  }
  EXPECT_EQ(idx->all_pairs(), oracle_pairs(oracle));
  EXPECT_EQ(idx->scan(0, ~Key{0}), oracle_pairs(oracle));
  EXPECT_EQ(idx->check(), "");
}

TEST(AulidInsert, SequentialGapFillEscalatesStructures) {
  // Appending into one gap makes every new fence predict the same root slot.
  TempFile f("aulid");
  std::vector<Key> keys;
  for (Key k = 0; k < 4000; ++k) keys.push_back(k * 1000000);
  keys.push_back(Key{1} << 45);
  auto idx = AulidIndex::bulkload(f.path(), pairs_of(keys));
  const Key base = 3999 * 1000000ULL + 1;
  for (Key i = 0; i < 300000; ++i) idx->insert(base + i, 1);
  const SmoCounters& s = idx->smo();
  EXPECT_GT(s.packed_created, 0u);
  EXPECT_GT(s.packed_grown, 0u);
  EXPECT_GT(s.btree_created, 0u);
  EXPECT_EQ(idx->check(), "");
  for (Key i = 0; i < 300000; i += 997) ASSERT_EQ(idx->lookup(base + i), 1u);
}

TEST(AulidDuplicates, ThousandCopiesOneEntry) {
  TempFile f("aulid");
  std::vector<Key> keys;
  for (Key k = 1000; k < 60000; k += 10) keys.push_back(k);
  auto idx = AulidIndex::bulkload(f.path(), pairs_of(keys));
  std::size_t run_splits = 0;
  idx->set_split_observer([&](const SplitEvent& e) { run_splits += e.before.front().key == 7 ? 1 : 0; });
  std::multiset<Payload> payloads;
  for (Payload p = 0; p < 1000; ++p) {
    idx->insert(7, p);
    payloads.insert(p);
    // One entry for 7, addressing the first leaf of the run.
    const auto items = idx->inner_items();
    const auto it = std::find_if(items.begin(), items.end(), [](auto& kb) { return kb.k_max == 7; });
    if (it == items.end()) continue;
    ASSERT_EQ(std::count_if(items.begin(), items.end(), [](auto& kb) { return kb.k_max == 7; }), 1);
    const LeafNode leaf = read_leaf(idx->store(), it->block, idx->leaf_capacity());
    ASSERT_EQ(leaf.pairs.back().key, 7u);
    if (leaf.prev != kNoBlock) {
      ASSERT_LT(read_leaf(idx->store(), leaf.prev, idx->leaf_capacity()).pairs.back().key, 7u);
    }
  }
  EXPECT_GT(run_splits, 0u);
  const auto items = idx->inner_items();
  EXPECT_EQ(std::count_if(items.begin(), items.end(), [](const KeyBlock& kb) { return kb.k_max == 7; }), 1);
  const auto sevens = idx->scan(7, 7);
  ASSERT_EQ(sevens.size(), 1000u);
  std::multiset<Payload> got;
  for (const auto& kp : sevens) got.insert(kp.payload);
  EXPECT_EQ(got, payloads);
  EXPECT_EQ(idx->lookup(7), sevens.front().payload);
  EXPECT_EQ(idx->check(), "");
  EXPECT_GT(idx->smo().leaf_splits, 3u);
}

TEST(AulidDuplicates, EntryPointsAtFirstLeafOfRun) {
  TempFile f("aulid");
  std::vector<KeyPayload> pairs;
  for (Key k = 0; k < 300; ++k) pairs.push_back({k, 0});
  for (Payload p = 0; p < 900; ++p) pairs.push_back({500, p});
  for (Key k = 600; k < 2000; ++k) pairs.push_back({k, 0});
  auto idx = AulidIndex::bulkload(f.path(), pairs);
  const auto items = idx->inner_items();
  const auto it = std::find_if(items.begin(), items.end(), [](auto& kb) { return kb.k_max == 500; });
  ASSERT_NE(it, items.end());
  const LeafNode leaf = read_leaf(idx->store(), it->block, idx->leaf_capacity());
  EXPECT_EQ(leaf.pairs.back().key, 500u);
  EXPECT_LT(leaf.pairs.front().key, 500u);  // the run starts in this leaf
  EXPECT_EQ(idx->lookup(500), 0u);
  EXPECT_EQ(idx->scan(500, 500).size(), 900u);
}

TEST(AulidAdjust, Thresholds) {
  AulidConfig c;
  MixedHeader h;
  h.init_size = 100;
  h.size = 121;
  h.l3_item = 7;  // 121 >= 120, 7 >= 6.05
  EXPECT_TRUE(adjust_eligible(h, c));
  h.l3_item = 6;  // 6 < 6.05
  EXPECT_FALSE(adjust_eligible(h, c));
  h.size = 110;
  h.l3_item = 100;
  EXPECT_FALSE(adjust_eligible(h, c));
  h.size = 120;
  h.l3_item = 6;  // 120 >= 120, 6 >= 6
  EXPECT_TRUE(adjust_eligible(h, c));
}

TEST(AulidAdjust, ForcedRebuildConservesItems) {
  TempFile f("aulid");
  std::vector<Key> keys;
  std::mt19937_64 rng(12);
  for (int c = 0; c < 30; ++c) {
    const Key base = rng() % (Key{1} << 44);
    for (int i = 0; i < 3000; ++i) keys.push_back(base + rng() % 40000);
  }
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  AulidConfig cfg;
  cfg.lippb = true;
  auto idx = AulidIndex::bulkload(f.path(), pairs_of(keys), cfg);
  std::vector<RebuildEvent> ev;
  idx->set_rebuild_observer([&](const RebuildEvent& e) { ev.push_back(e); });
  const auto before = idx->inner_items();
  for (std::size_t level = 0; level < 4; ++level) ASSERT_TRUE(idx->force_rebuild(keys[keys.size() / 3], level));
  ASSERT_EQ(ev.size(), 4u);
  for (const auto& e : ev) {
    EXPECT_EQ(e.before, e.after);
    EXPECT_LE(e.new_max_depth, e.old_max_depth);
  }
  EXPECT_EQ(idx->inner_items(), before);
  EXPECT_EQ(idx->check(), "");
}

TEST(AulidAdjust, RebuildOfLowConflictNodeHasNoDeepItems) {
  TempFile f("aulid");
  std::vector<Key> keys;
  for (Key k = 0; k < 100000; ++k) keys.push_back(k * 7919);
  auto idx = AulidIndex::bulkload(f.path(), pairs_of(keys));
  ASSERT_TRUE(idx->force_rebuild(0, 0));
  EXPECT_EQ(read_mixed_header(idx->store(), idx->root()).l3_item, 0u);
  EXPECT_EQ(idx->check(), "");
}

TEST(AulidDelete, AbsentKeyAndMaxOfSurvivingLeaf) {
  TempFile f("aulid");
  std::vector<Key> keys;
  for (Key k = 0; k < 5000; ++k) keys.push_back(k * 10);
  auto idx = AulidIndex::bulkload(f.path(), pairs_of(keys));
  idx->store().reset_counters();
  EXPECT_FALSE(idx->erase(15));
  EXPECT_EQ(idx->store().counters().writes, 0u);
  const auto items = idx->inner_items();
  // The first leaf holds 0..2530; its max is 2530.
  const Key first_max = items.front().k_max;
  EXPECT_TRUE(idx->erase(first_max));
  EXPECT_EQ(idx->inner_items(), items);
  EXPECT_EQ(idx->lookup(first_max), std::nullopt);
  EXPECT_EQ(idx->check(), "");
}

TEST(AulidDelete, InterleavedStreamMatchesOracle) {
  TempFile f("aulid");
  const auto keys = random_keys(30000, 13, 1 << 20);
  auto idx = AulidIndex::bulkload(f.path(), pairs_of(keys));
  std::multimap<Key, Payload> oracle;
  for (Key k : keys) oracle.emplace(k, k + 1);
  std::mt19937_64 rng(14);
  for (int i = 1; i <= 60000; ++i) {
    Key k = rng() % (1 << 20);
    if (rng() % 100 < 55) {
      auto near = oracle.lower_bound(k);
      if (near != oracle.end() && rng() % 4 != 0) k = near->first;
      const bool want = oracle.count(k) != 0;
      if (want) oracle.erase(oracle.find(k));
      ASSERT_EQ(idx->erase(k), want);
    } else {
      idx->insert(k, k + 1);
      oracle.emplace(k, k + 1);
    }
    if (i % 10000 == 0) {
      ASSERT_EQ(idx->all_pairs(), oracle_pairs(oracle)) << i;
      ASSERT_EQ(idx->check(), "") << i;
    }
  }
  EXPECT_GT(idx->smo().leaf_merges + idx->smo().leaf_borrows, 0u);
}

TEST(AulidDelete, DrainToEmptyAndRefill) {
  TempFile f("aulid");
  const auto keys = random_keys(5000, 15);
  auto idx = AulidIndex::bulkload(f.path(), pairs_of(keys));
  std::vector<Key> order = keys;
  std::shuffle(order.begin(), order.end(), std::mt19937_64(1));
  for (Key k : order) ASSERT_TRUE(idx->erase(k));
  EXPECT_TRUE(idx->all_pairs().empty());
  EXPECT_EQ(idx->check(), "");
  for (Key k : keys) idx->insert(k, k + 1);
  EXPECT_EQ(idx->all_pairs(), pairs_of(keys));
  EXPECT_EQ(idx->check(), "");
}

TEST(AulidUpdate, PayloadAndKey) {
  TempFile f("aulid");
  std::vector<Key> keys;
  for (Key k = 0; k < 3000; ++k) keys.push_back(k);
  auto idx = AulidIndex::bulkload(f.path(), pairs_of(keys));
  EXPECT_TRUE(idx->update(500, 0));
  EXPECT_EQ(idx->lookup(500), 0u);
  EXPECT_FALSE(idx->update(99999, 1));
  EXPECT_EQ(idx->all_pairs().size(), 3000u);
  std::multimap<Key, Payload> oracle;
  for (Key k : keys) oracle.emplace(k, k == 500 ? 0 : k + 1);
  EXPECT_TRUE(idx->update_key(500, 501, 777));
  oracle.erase(oracle.find(500));
  oracle.emplace(501, 777);
  EXPECT_TRUE(same_multiset(idx->all_pairs(), oracle_pairs(oracle)));
  EXPECT_FALSE(idx->update_key(500, 502, 1));
}

TEST(AulidFormat, ReopenRestoresEverything) {
  TempFile f("aulid");
  const auto keys = random_keys(30000, 16);
  AulidConfig cfg;
  cfg.alpha = 0.1;
  cfg.fulfill = true;
  {
    auto idx = AulidIndex::bulkload(f.path(), pairs_of(keys), cfg, 2048);
    for (int i = 0; i < 5000; ++i) idx->insert(keys[i] + 1, 5);
    idx->flush();
  }
  auto idx = AulidIndex::open(f.path());
  EXPECT_EQ(idx->store().counters(), IoStats{});
  EXPECT_EQ(idx->store().block_size(), 2048u);
  EXPECT_EQ(idx->config().alpha, 0.1);
  EXPECT_EQ(idx->smo().leaf_splits > 0, true);
  for (Key k : keys) ASSERT_EQ(idx->lookup(k), k + 1);
  EXPECT_EQ(idx->lookup(keys[10] + 1), 5u);
  EXPECT_EQ(idx->check(), "");
}

TEST(AulidFulfill, NoNullCrossingsOnFreshIndex) {
  TempFile f("aulid");
  std::vector<Key> keys;
  std::mt19937_64 rng(17);
  for (int c = 0; c < 50; ++c) {
    const Key base = rng() % (Key{1} << 44);
    for (int i = 0; i < 2000; ++i) keys.push_back(base + rng() % 5000000);
  }
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  AulidConfig cfg;
  cfg.fulfill = true;
  auto idx = AulidIndex::bulkload(f.path(), pairs_of(keys), cfg);
  EXPECT_TRUE(idx->fulfill_active());
  for (int i = 0; i < 20000; ++i) {
    const Key k = i % 2 ? keys[rng() % keys.size()] : rng() % (Key{1} << 44);
    const auto got = idx->lookup(k);
    ASSERT_EQ(idx->last_trace().null_crossings, 0u);
    if (i % 2) ASSERT_EQ(got, k + 1);
  }
  // A write turns the copies off and keeps results intact.
  idx->insert(keys[5] + 1, 3);
  for (int i = 0; i < 200; ++i) ASSERT_EQ(idx->lookup(keys[i * 7]), keys[i * 7] + 1);
  EXPECT_EQ(idx->check(), "");
}
