// Acceptance gate: one line per criterion, non-zero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "aulid/aulid_index.hpp"
#include "aulid/btree_index.hpp"
#include "aulid/workload.hpp"
#include "test_util.hpp"

using namespace aulid;
using aulid::test::TempFile;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::vector<KeyPayload> pairs_of(const std::vector<Key>& keys) { return with_payloads(keys); }

std::vector<Key> dataset(DatasetKind kind, std::size_t n, std::uint64_t seed) {
  DatasetSpec s;
  s.kind = kind;
  s.n = n;
  s.seed = seed;
  return gen_dataset(s);
}

const DatasetKind kKinds[] = {DatasetKind::kUniform, DatasetKind::kLognormal, DatasetKind::kClusteredHotspot,
                              DatasetKind::kAdversarialConflict};

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

// 1. Oracle equivalence over every dataset kind, workload and seed.
Outcome oracle_equivalence() {
  std::size_t runs = 0, mismatches = 0, ops = 0;
  std::string first;
  for (auto kind : kKinds) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const auto keys = dataset(kind, 100000, seed);
      for (int w = 0; w < 6; ++w) {
        TempFile f("c1");
        WorkloadSpec spec;
        spec.kind = static_cast<WorkloadKind>(w);
        spec.op_count = 20000;
        spec.seed = seed * 31 + static_cast<std::uint64_t>(w);
        spec.delete_share = 0.1;
        spec.update_share = 0.1;
        RunOptions o;
        o.file = f.path();
        o.verify = true;
        const RunResult r = run_workload(keys, spec, o);
        ++runs;
        ops += r.metrics.ops;
        mismatches += r.metrics.mismatches;
        if (r.metrics.mismatches && first.empty()) {
          first = std::string(dataset_name(kind)) + "/" + workload_name(spec.kind) + ": " + r.metrics.mismatch_samples.front();
        }
      }
    }
  }
  return {mismatches == 0 && runs == 72,
          std::to_string(runs) + " runs, " + std::to_string(ops) + " ops, " + std::to_string(mismatches) +
              " mismatches" + (first.empty() ? "" : " (first: " + first + ")")};
}

// Shared 10^6-key indexes for criteria 2 and 7.
struct BigIndexes {
  std::uint64_t size_aulid_uniform = 0, size_btree_uniform = 0;
  std::uint64_t size_aulid_adv = 0, size_lippb_adv = 0;
  double reads_aulid_uniform = 0, reads_btree_uniform = 0;
  double reads_aulid_adv = 0, reads_lippb_adv = 0;
  std::size_t btree_height = 0;
  std::size_t lookups = 0;
  std::size_t mismatches = 0;
};

double w1_reads(OrderedIndex& idx, const std::vector<Key>& keys, std::size_t ops, BigIndexes& out) {
  WorkloadSpec spec;
  spec.kind = WorkloadKind::kW1;
  spec.op_count = ops;
  spec.seed = 7;
  Oracle oracle(pairs_of(keys));
  const RunResult r = run_on_index(idx, keys, {}, spec, &oracle, false);
  out.mismatches += r.metrics.mismatches;
  out.lookups = r.metrics.op_counts.at("lookup");
  return r.metrics.blocks_read_per_lookup;
}

BigIndexes build_big() {
  BigIndexes b;
  const std::size_t ops = 20000;
  {
    const auto keys = dataset(DatasetKind::kUniform, 1000000, 1);
    TempFile fa("c2"), fb("c2");
    auto a = AulidIndex::bulkload(fa.path(), pairs_of(keys));
    a->flush();
    b.size_aulid_uniform = a->store().file_size_bytes();
    b.reads_aulid_uniform = w1_reads(*a, keys, ops, b);
    auto t = BTreeIndex::bulkload(fb.path(), pairs_of(keys));
    t->flush();
    b.size_btree_uniform = t->store().file_size_bytes();
    b.btree_height = t->height();
    b.reads_btree_uniform = w1_reads(*t, keys, ops, b);
  }
  {
    const auto keys = dataset(DatasetKind::kAdversarialConflict, 1000000, 1);
    TempFile fa("c2"), fl("c2");
    auto a = AulidIndex::bulkload(fa.path(), pairs_of(keys));
    a->flush();
    b.size_aulid_adv = a->store().file_size_bytes();
    b.reads_aulid_adv = w1_reads(*a, keys, ops, b);
    AulidConfig cfg;
    cfg.lippb = true;
    auto l = AulidIndex::bulkload(fl.path(), pairs_of(keys), cfg);
    l->flush();
    b.size_lippb_adv = l->store().file_size_bytes();
    b.reads_lippb_adv = w1_reads(*l, keys, ops, b);
  }
  return b;
}

// 2. Fewer blocks per lookup than the B+-tree and than lippb mode.
Outcome lookup_blocks(const BigIndexes& b) {
  const bool ok = b.mismatches == 0 && b.lookups >= 20000 && b.btree_height == 3 &&
                  b.reads_btree_uniform == 3.0 && b.reads_aulid_uniform <= b.reads_btree_uniform &&
                  b.reads_aulid_adv <= b.reads_lippb_adv;
  return {ok, "uniform aulid " + fmt_double(b.reads_aulid_uniform) + " vs btree " + fmt_double(b.reads_btree_uniform) +
                  " (height " + std::to_string(b.btree_height) + "); adversarial aulid " +
                  fmt_double(b.reads_aulid_adv) + " vs lippb " + fmt_double(b.reads_lippb_adv) + "; " +
                  std::to_string(b.lookups) + " lookups each"};
}

// 3. Ablation ordering and no NULL-path block crossings under Fulfill.
Outcome ablation_ordering() {
  bool ok = true;
  std::ostringstream os;
  for (auto kind : kKinds) {
    const auto keys = dataset(kind, 200000, 2);
    std::map<AblationOpt, AblationResult> r;
    for (auto opt : {AblationOpt::kNone, AblationOpt::kScanFward, AblationOpt::kFulfill, AblationOpt::kBoth}) {
      TempFile f("c3");
      r[opt] = ablation_extra_blocks(keys, opt, 20000, 3, f.path(), 4096);
      ok = ok && r[opt].mismatches == 0;
    }
    const auto& none = r[AblationOpt::kNone];
    const auto& sf = r[AblationOpt::kScanFward];
    const auto& ff = r[AblationOpt::kFulfill];
    const auto& both = r[AblationOpt::kBoth];
    ok = ok && none.extra_blocks >= sf.extra_blocks && sf.extra_blocks >= both.extra_blocks &&
         ff.null_crossings == 0 && both.null_crossings == 0;
    os << dataset_name(kind) << " " << none.extra_blocks << "/" << sf.extra_blocks << "/" << ff.extra_blocks << "/"
       << both.extra_blocks << " (null crossings with fulfill " << ff.null_crossings + both.null_crossings << "); ";
  }
  std::string d = os.str();
  d.resize(d.size() - 2);
  return {ok, "extra none/scanfward/fulfill/both: " + d};
}

// 4. Exact escalation chain and both boundary inserts.
Outcome escalation_chain() {
  TempFile f("c4");
  BlockStore s = BlockStore::open(f.path(), 4096, OpenMode::kCreate);
  const InnerFormat fmt{};
  const LinearModel one{1e-30, 0.0, 1};
  std::vector<KeyBlock> all;
  for (std::size_t i = 0; i < 1100; ++i) all.push_back({10 * (i + 1), 1000 + i});
  std::vector<std::string> chain;
  auto name = [](const InnerSlot& sl) -> std::string {
    switch (sl.tag) {
      case SlotTag::kData: return "DATA";
      case SlotTag::kNodePacked: return "packed(" + std::to_string(packed_capacity(sl.size_class)) + ")";
      case SlotTag::kNodeBTree: return "btree";
      case SlotTag::kNodeMixed: return "mixed";
      default: return "?";
    }
  };
  auto slot_for = [&](std::size_t n) {
    const MixedBuild b = mixed_create_with_model(s, std::span(all).first(n), one, fmt);
    return slot_fetch(s, b.root, 1, 0).slot;
  };
  bool ok = slot_for(1).tag == SlotTag::kData;
  chain.push_back(name(slot_for(1)));
  InnerSlot sl = slot_for(2);
  ok = ok && sl.tag == SlotTag::kNodePacked && sl.size_class == 1;
  chain.push_back(name(sl));
  std::size_t grew_at[5] = {0, 0, 0, 0, 0};
  std::size_t btree_at = 0;
  for (std::size_t i = 2; i < 65; ++i) {
    const StructureInsert r = packed_insert(s, sl, all[i], fmt);
    sl = r.slot;
    if (r.grew_class) {
      grew_at[sl.size_class] = i + 1;
      chain.push_back(name(sl));
    }
    if (r.became_btree) {
      btree_at = i + 1;
      chain.push_back(name(sl));
    }
  }
  ok = ok && grew_at[2] == 9 && grew_at[3] == 17 && grew_at[4] == 33 && btree_at == 65 &&
       sl.tag == SlotTag::kNodeBTree && read_btree_root(s, sl.child).total == 65;
  const InnerSlot full = InnerSlot::btree(btree2_build(s, std::span(all).first(1020), fmt));
  const bool full_at_1021 = btree2_insert(s, full, all[1020], fmt).full;
  const bool tree_1020 = slot_for(1020).tag == SlotTag::kNodeBTree;
  const bool mixed_1021 = slot_for(1021).tag == SlotTag::kNodeMixed;
  ok = ok && full_at_1021 && tree_1020 && mixed_1021;
  chain.push_back("mixed");
  std::string c;
  for (const auto& x : chain) c += (c.empty() ? "" : " -> ") + x;
  return {ok, c + "; growth at items 9/17/33, tree at 65, tree full at 1021"};
}

double deep_fraction(AulidIndex& idx) {
  const SubtreeScan sc = idx.scan_inner();
  if (sc.items.empty()) return 0;
  const auto deep = std::count_if(sc.depths.begin(), sc.depths.end(), [](std::uint8_t d) { return d > 3; });
  return static_cast<double>(deep) / static_cast<double>(sc.items.size());
}

// 5. Height bound after skewed inserts, and the gap without adjustment.
Outcome adjustment_bound() {
  const auto keys = dataset(DatasetKind::kUniform, 100000, 5);
  const auto ins = gen_skewed_inserts(keys, 500000, 0.9, 5);
  double frac[2];
  std::uint64_t rebuilds[2];
  std::string fault;
  for (int adjust = 1; adjust >= 0; --adjust) {
    TempFile f("c5");
    AulidConfig cfg;
    cfg.adjust = adjust != 0;
    auto idx = AulidIndex::bulkload(f.path(), pairs_of(keys), cfg);
    for (Key k : ins) idx->insert(k, payload_for(k));
    frac[adjust] = deep_fraction(*idx);
    rebuilds[adjust] = idx->smo().rebuilds;
    if (fault.empty()) fault = idx->check();
  }
  const double bound = 2 * AulidConfig{}.alpha;
  const bool ok = fault.empty() && frac[1] <= bound && frac[0] > bound;
  return {ok, "depth>3 share with adjust " + fmt_double(frac[1]) + " (" + std::to_string(rebuilds[1]) +
                  " rebuilds), without " + fmt_double(frac[0]) + ", bound " + fmt_double(bound) +
                  (fault.empty() ? "" : "; check: " + fault)};
}

// 6. Split invariants over a 10^5 insert fuzz.
Outcome split_invariants() {
  TempFile f("c6");
  const auto keys = dataset(DatasetKind::kClusteredHotspot, 20000, 6);
  auto idx = AulidIndex::bulkload(f.path(), pairs_of(keys));
  const std::size_t half = (idx->leaf_capacity() + 1) / 2;
  std::vector<SplitEvent> events;
  idx->set_split_observer([&](const SplitEvent& e) { events.push_back(e); });
  auto entry_map = [&] {
    std::map<BlockId, Key> m;
    for (const auto& kb : idx->inner_items()) m[kb.block] = kb.k_max;
    return m;
  };
  auto entries = entry_map();
  std::mt19937_64 rng(6);
  std::size_t splits = 0, bad_multiset = 0, bad_size = 0, bad_entry = 0;
  for (int i = 0; i < 100000; ++i) {
    // One insert in eight repeats an existing key.
    const Key k = rng() % 8 == 0 ? keys[rng() % keys.size()] : rng() >> 16;
    events.clear();
    idx->insert(k, rng());
    if (events.empty()) continue;
    const auto after = entry_map();
    for (const auto& e : events) {
      ++splits;
      std::vector<KeyPayload> lhs = e.before;
      lhs.push_back(e.pending);
      std::vector<KeyPayload> rhs = e.left;
      rhs.insert(rhs.end(), e.original_after.begin(), e.original_after.end());
      auto lt = [](const KeyPayload& a, const KeyPayload& b) {
        return a.key != b.key ? a.key < b.key : a.payload < b.payload;
      };
      std::sort(lhs.begin(), lhs.end(), lt);
      std::sort(rhs.begin(), rhs.end(), lt);
      if (lhs != rhs) ++bad_multiset;
      if (e.left.size() != half) ++bad_size;
      auto it = entries.find(e.original_id);
      if (it != entries.end()) {
        // Same key, still addressing the original, or the left half when it
        // now holds the first copy of that key.
        auto a = after.find(e.original_id);
        auto l = after.find(e.left_id);
        const bool kept = (a != after.end() && a->second == it->second) ||
                          (l != after.end() && l->second == it->second && e.left_max == it->second);
        if (!kept) ++bad_entry;
      }
    }
    entries = after;
  }
  const std::string fault = idx->check();
  const bool ok = splits > 0 && bad_multiset == 0 && bad_size == 0 && bad_entry == 0 && fault.empty();
  return {ok, std::to_string(splits) + " splits; multiset violations " + std::to_string(bad_multiset) +
                  ", left size != " + std::to_string(half) + ": " + std::to_string(bad_size) +
                  ", original entry changed: " + std::to_string(bad_entry) + (fault.empty() ? "" : "; check: " + fault)};
}

// 7. Storage proximity to the B+-tree, and less than lippb mode.
Outcome storage(const BigIndexes& b) {
  const double ratio = static_cast<double>(b.size_aulid_uniform) / static_cast<double>(b.size_btree_uniform);
  const bool ok = ratio <= 1.5 && b.size_lippb_adv > b.size_aulid_adv;
  return {ok, "uniform aulid/btree " + fmt_double(ratio) + " (" + std::to_string(b.size_aulid_uniform) + " / " +
                  std::to_string(b.size_btree_uniform) + " B); adversarial lippb " + std::to_string(b.size_lippb_adv) +
                  " B vs aulid " + std::to_string(b.size_aulid_adv) + " B"};
}

// 8. No new mixed nodes on a uniform write-only run.
Outcome smo_quiescence() {
  const auto keys = dataset(DatasetKind::kUniform, 100000, 8);
  TempFile f("c8");
  WorkloadSpec spec;
  spec.kind = WorkloadKind::kW3;
  spec.op_count = 20000;
  spec.seed = 8;
  RunOptions o;
  o.file = f.path();
  o.verify = true;
  const RunResult r = run_workload(keys, spec, o);
  const SmoCounters& d = r.metrics.smo_delta;
  const bool ok = d.mixed_created == 0 && d.rebuilds == 0 && r.metrics.mismatches == 0;
  return {ok, "new mixed nodes " + std::to_string(d.mixed_created) + ", rebuilds " + std::to_string(d.rebuilds) +
                  "; leaf splits " + std::to_string(d.leaf_splits) + ", packed created " +
                  std::to_string(d.packed_created) + ", packed grown " + std::to_string(d.packed_grown) +
                  ", trees created " + std::to_string(d.btree_created)};
}

// 9. Forced rebuilds conserve items and never deepen the subtree.
Outcome rebuild_conservation() {
  std::size_t events = 0, changed = 0, deeper = 0, declined = 0;
  std::set<std::size_t> levels;
  std::string fault;
  std::uint64_t round = 0;
  while (events < 1000) {
    ++round;
    const auto kind = kKinds[round % 4];
    const auto keys = dataset(kind, 30000, 100 + round);
    TempFile f("c9");
    AulidConfig cfg;
    cfg.lippb = round % 3 == 0;
    cfg.adjust = round % 2 == 0;
    auto idx = AulidIndex::bulkload(f.path(), pairs_of(std::vector<Key>(keys.begin(), keys.begin() + 15000)), cfg);
    idx->set_rebuild_observer([&](const RebuildEvent& e) {
      if (!e.forced) return;
      ++events;
      if (e.before != e.after) ++changed;
      if (e.new_max_depth > e.old_max_depth) ++deeper;
      if (e.declined) ++declined;
      levels.insert(e.level);
    });
    std::mt19937_64 rng(round);
    const std::size_t stop = std::min<std::size_t>(1000, events + 125);
    std::size_t inserted = 15000;
    for (std::size_t i = 15000; i < keys.size() && events < stop; ++i, inserted = i) {
      idx->insert(keys[i], payload_for(keys[i]));
      if (i % 15 == 0) {
        const auto items_before = idx->inner_items();
        idx->force_rebuild(keys[rng() % i], rng() % 4);
        if (idx->inner_items() != items_before) ++changed;
      }
    }
    if (fault.empty()) fault = idx->check();
    for (std::size_t i = 0; i < inserted; i += 97) {
      if (idx->lookup(keys[i]) != payload_for(keys[i]) && fault.empty()) fault = "lookup lost key";
    }
  }
  const bool ok = events >= 1000 && changed == 0 && deeper == 0 && fault.empty();
  return {ok, std::to_string(events) + " forced rebuilds over " + std::to_string(round) + " indexes, " +
                  std::to_string(levels.size()) + " distinct levels, " + std::to_string(declined) +
                  " kept the old subtree; item changes " +
                  std::to_string(changed) + ", deeper results " + std::to_string(deeper) +
                  (fault.empty() ? "" : "; " + fault)};
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// 10. Reopen durability.
Outcome format_durability() {
  bool ok = true;
  std::ostringstream os;
  for (auto kind : {IndexKind::kAulid, IndexKind::kBTree, IndexKind::kAulidLippb}) {
    const auto keys = dataset(DatasetKind::kLognormal, 100000, 10);
    TempFile f("c10");
    IndexOptions io;
    io.kind = kind;
    {
      auto idx = build_index(f.path(), pairs_of(keys), io);
      idx->flush();
    }
    const std::string bytes = file_bytes(f.path());
    auto idx = open_index(f.path());
    const IoStats at_open = idx->store().counters();
    WorkloadSpec spec;
    spec.kind = WorkloadKind::kW1;
    spec.op_count = 100000;
    Oracle oracle(pairs_of(keys));
    const RunResult r = run_on_index(*idx, keys, {}, spec, &oracle, false);
    std::size_t wrong = 0;
    for (Key k : keys) wrong += idx->lookup(k) != payload_for(k);
    const bool same_pairs = idx->all_pairs() == pairs_of(keys);
    idx->flush();
    idx.reset();
    const bool same_bytes = file_bytes(f.path()) == bytes;
    const bool this_ok = at_open == IoStats{} && r.metrics.mismatches == 0 && wrong == 0 && same_pairs && same_bytes;
    ok = ok && this_ok;
    os << index_name(kind) << (this_ok ? " ok" : " FAILED") << " (io at open " << at_open.reads << "/"
       << at_open.writes << ", mismatches " << r.metrics.mismatches + wrong << ", bytes "
       << (same_bytes ? "identical" : "differ") << "); ";
  }
  std::string d = os.str();
  d.resize(d.size() - 2);
  return {ok, d};
}

}  // namespace

int main(int argc, char** argv) {
  // Optional argument: run only the criterion with this id, e.g. C5.
  const std::string only = argc > 1 ? std::string(argv[1]) + " " : "";
  using Clock = std::chrono::steady_clock;
  int failed = 0;
  BigIndexes big;
  bool big_built = false;
  auto big_ref = [&]() -> const BigIndexes& {
    if (!big_built) {
      big = build_big();
      big_built = true;
    }
    return big;
  };
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"C1 oracle equivalence", oracle_equivalence},
      {"C2 lookup block count", [&] { return lookup_blocks(big_ref()); }},
      {"C3 ablation ordering", ablation_ordering},
      {"C4 structure thresholds", escalation_chain},
      {"C5 adjustment height bound", adjustment_bound},
      {"C6 split invariants", split_invariants},
      {"C7 storage proximity", [&] { return storage(big_ref()); }},
      {"C8 low-conflict SMO quiescence", smo_quiescence},
      {"C9 rebuild conservation", rebuild_conservation},
      {"C10 format durability", format_durability},
  };
  std::size_t ran = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && name.rfind(only, 0) != 0) continue;
    ++ran;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    std::printf("%s  %-32s %s  [%.1fs]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(ran) - failed, ran);
  return failed == 0 ? 0 : 1;
}
