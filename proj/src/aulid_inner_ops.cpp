// Inner-tree mutation for AulidIndex: entry upsert/erase, statistics,
// adjustment rebuilds, and the inspection helpers.
#include <algorithm>
#include <string>

#include "aulid/aulid_index.hpp"

namespace aulid {
namespace {

std::int64_t at_least3(std::size_t depth) { return depth >= 3 ? 1 : 0; }

// Items of hist (relative to a node) counted from an ancestor `offset` levels up.
std::int64_t l3_shifted(const DepthHist& hist, std::size_t offset) {
  std::int64_t n = 0;
  for (std::size_t d = 1; d < hist.size(); ++d) {
    if (d + offset >= 3) n += static_cast<std::int64_t>(hist[d]);
  }
  return n;
}

}  // namespace

void AulidIndex::before_inner_mutation() {
  if (!fulfill_active_) return;
  if (root_ != kNoBlock) clear_copies(root_, root_model_.num_slots);
  fulfill_active_ = false;
}

void AulidIndex::clear_copies(BlockId node, std::uint32_t num_slots) {
  const std::size_t nblocks = fmt_.mixed_blocks(num_slots);
  const std::size_t bs = fmt_.block_size;
  for (std::size_t b = 0; b < nblocks; ++b) {
    Block buf = store_.read(node + b);
    bool dirty = false;
    const std::size_t begin = std::max(b * bs, kMixedHeaderBytes);
    const std::size_t end = std::min<std::size_t>((b + 1) * bs, kMixedHeaderBytes + std::size_t{num_slots} * kSlotBytes);
    for (std::size_t byte = begin; byte < end; byte += kSlotBytes) {
      const InnerSlot s = decode_slot(buf, byte - b * bs);
      if (s.tag == SlotTag::kDataCopy) {
        encode_slot(InnerSlot::null(), buf, byte - b * bs);
        dirty = true;
      } else if (s.tag == SlotTag::kNodeMixed) {
        clear_copies(s.child, s.model.num_slots);
      }
    }
    if (dirty) store_.write(node + b, buf);
  }
}

AulidIndex::Descent AulidIndex::find_entry(Key k) {
  Descent d;
  BlockId node = root_;
  LinearModel m = root_model_;
  for (;;) {
    const std::uint32_t j = m.predict(k);
    FetchedSlot f = slot_fetch(store_, node, m.num_slots, j);
    d.path.push_back({node, m.num_slots, j});
    if (f.slot.tag != SlotTag::kNodeMixed) {
      d.fetched = std::move(f);
      return d;
    }
    node = f.slot.child;
    m = f.slot.model;
  }
}

AulidIndex::Upsert AulidIndex::inner_upsert(KeyBlock kb, BlockId from) {
  before_inner_mutation();
  if (root_ == kNoBlock) {
    PhaseTimer timer(phases_.inner_create);
    const KeyBlock one[1] = {kb};
    const MixedBuild b = mixed_create(store_, one, fmt_);
    root_ = b.root;
    root_model_ = b.model;
    smo_.mixed_created += 1;
    return Upsert::kInserted;
  }
  Descent d;
  {
    PhaseTimer timer(phases_.inner_search);
    d = find_entry(kb.k_max);
  }
  FetchedSlot& f = d.fetched;
  const InnerSlot s = f.slot;
  const std::uint32_t j = d.path.back().slot;
  const std::size_t m = d.path.size() - 1;

  // Net change: one more pair; `old_moved` pairs at the terminal depth moved
  // into a new mixed node with histogram `moved_hist`.
  std::uint64_t old_moved = 0;
  DepthHist moved_hist;

  switch (s.tag) {
    case SlotTag::kNull:
    case SlotTag::kDataCopy: {
      PhaseTimer timer(phases_.inner_insert);
      slot_store(store_, f, j, InnerSlot::data(kb));
      break;
    }
    case SlotTag::kData: {
      if (s.pair.k_max == kb.k_max) {
        if (s.pair.block != from) return Upsert::kExisting;
        PhaseTimer timer(phases_.inner_insert);
        slot_store(store_, f, j, InnerSlot::data(kb));
        return Upsert::kRepointed;
      }
      const KeyBlock two[2] = {std::min(s.pair, kb, [](const KeyBlock& a, const KeyBlock& b) { return a.k_max < b.k_max; }),
                               std::max(s.pair, kb, [](const KeyBlock& a, const KeyBlock& b) { return a.k_max < b.k_max; })};
      PhaseTimer timer(phases_.inner_create);
      if (cfg_.lippb) {
        const MixedBuild q = mixed_create(store_, two, fmt_);
        slot_store(store_, f, j, InnerSlot::mixed(q.root, q.model));
        smo_.mixed_created += q.mixed_nodes;
        old_moved = 1;
        moved_hist = q.depth_hist;
      } else {
        PackedArray arr{1, {two[0], two[1]}};
        const BlockId id = store_.allocate();
        write_packed(store_, id, arr);
        slot_store(store_, f, j, InnerSlot::packed(id, 1));
        smo_.packed_created += 1;
      }
      break;
    }
    case SlotTag::kNodePacked: {
      PackedArray arr = read_packed(store_, s.child);
      auto it = std::lower_bound(arr.items.begin(), arr.items.end(), kb.k_max,
                                 [](const KeyBlock& a, Key k) { return a.k_max < k; });
      if (it != arr.items.end() && it->k_max == kb.k_max) {
        if (it->block != from) return Upsert::kExisting;
        PhaseTimer timer(phases_.inner_insert);
        it->block = kb.block;
        write_packed(store_, s.child, arr);
        return Upsert::kRepointed;
      }
      PhaseTimer timer(phases_.inner_insert);
      const StructureInsert r = packed_insert(store_, s, arr, kb, fmt_);
      if (r.grew_class) smo_.packed_grown += 1;
      if (r.became_btree) smo_.btree_created += 1;
      if (r.grew_class || r.became_btree) slot_store(store_, f, j, r.slot);
      break;
    }
    case SlotTag::kNodeBTree: {
      if (auto ex = structure_find(store_, s, kb.k_max, fmt_)) {
        if (ex->block != from) return Upsert::kExisting;
        PhaseTimer timer(phases_.inner_insert);
        structure_set_block(store_, s, kb.k_max, kb.block, fmt_);
        return Upsert::kRepointed;
      }
      StructureInsert r;
      {
        PhaseTimer timer(phases_.inner_insert);
        r = btree2_insert(store_, s, kb, fmt_);
      }
      if (r.child_split) smo_.btree_child_splits += 1;
      if (r.full) {
        PhaseTimer timer(phases_.inner_create);
        std::vector<KeyBlock> items = structure_items(store_, s, fmt_);
        old_moved = items.size();
        items.insert(std::lower_bound(items.begin(), items.end(), kb.k_max,
                                      [](const KeyBlock& a, Key k) { return a.k_max < k; }),
                     kb);
        for (BlockId b : structure_blocks(store_, s)) store_.free(b);
        const MixedBuild q = mixed_create(store_, items, fmt_);
        slot_store(store_, f, j, InnerSlot::mixed(q.root, q.model));
        smo_.mixed_created += q.mixed_nodes;
        moved_hist = q.depth_hist;
      }
      break;
    }
    case SlotTag::kNodeMixed:
      throw Error("find_entry stopped at a mixed slot");
  }

  std::vector<std::int64_t> dsize(m + 1, 1), dl3(m + 1, 0);
  for (std::size_t i = 0; i <= m; ++i) {
    const std::size_t depth = m - i + 1;  // terminal slot's depth relative to path node i
    if (moved_hist.empty()) {
      dl3[i] = at_least3(depth);
    } else {
      dl3[i] = l3_shifted(moved_hist, depth) - static_cast<std::int64_t>(old_moved) * at_least3(depth);
    }
  }
  apply_stats(d.path, dsize, dl3, true);
  return Upsert::kInserted;
}

void AulidIndex::inner_erase(Key k) {
  before_inner_mutation();
  if (root_ == kNoBlock) throw CorruptionError("erase of " + std::to_string(k) + " without an inner tree");
  Descent d;
  {
    PhaseTimer timer(phases_.inner_search);
    d = find_entry(k);
  }
  FetchedSlot& f = d.fetched;
  const InnerSlot s = f.slot;
  const std::uint32_t j = d.path.back().slot;
  {
    PhaseTimer timer(phases_.inner_insert);
    if (s.tag == SlotTag::kData && s.pair.k_max == k) {
      slot_store(store_, f, j, InnerSlot::null());
    } else if (s.is_structure()) {
      const StructureErase r = structure_erase(store_, s, k, fmt_);
      if (!r.removed) throw CorruptionError("inner entry " + std::to_string(k) + " missing from its structure");
      if (r.slot.tag != s.tag) {
        slot_store(store_, f, j, r.slot);
        smo_.collapses += 1;
      }
    } else {
      throw CorruptionError("inner entry " + std::to_string(k) + " not found");
    }
  }
  const std::size_t m = d.path.size() - 1;
  std::vector<std::int64_t> dsize(m + 1, -1), dl3(m + 1, 0);
  for (std::size_t i = 0; i <= m; ++i) dl3[i] = -at_least3(m - i + 1);
  apply_stats(d.path, dsize, dl3, false);
}

void AulidIndex::inner_repoint(Key k, BlockId from, BlockId to) {
  before_inner_mutation();
  if (root_ == kNoBlock) throw CorruptionError("repoint without an inner tree");
  Descent d;
  {
    PhaseTimer timer(phases_.inner_search);
    d = find_entry(k);
  }
  PhaseTimer timer(phases_.inner_insert);
  const InnerSlot s = d.fetched.slot;
  if (s.tag == SlotTag::kData && s.pair.k_max == k && s.pair.block == from) {
    slot_store(store_, d.fetched, d.path.back().slot, InnerSlot::data({k, to}));
    return;
  }
  if (s.is_structure()) {
    const auto ex = structure_find(store_, s, k, fmt_);
    if (ex && ex->block == from && structure_set_block(store_, s, k, to, fmt_)) return;
  }
  throw CorruptionError("inner entry " + std::to_string(k) + " does not point at block " + std::to_string(from));
}

bool adjust_eligible(const MixedHeader& h, const AulidConfig& cfg) {
  if (h.size == 0) return false;
  const double size = static_cast<double>(h.size);
  return size >= cfg.beta * static_cast<double>(h.init_size) && static_cast<double>(h.l3_item) >= cfg.alpha * size;
}

void AulidIndex::apply_stats(const std::vector<PathNode>& path, const std::vector<std::int64_t>& size,
                             const std::vector<std::int64_t>& l3, bool run_adjust) {
  std::vector<MixedHeader> headers;
  {
    PhaseTimer timer(phases_.inner_update);
    std::vector<StatsDelta> deltas(path.size());
    for (std::size_t i = 0; i < path.size(); ++i) deltas[i] = {path[i].node, size[i], l3[i]};
    headers = stats_update(store_, deltas);
  }
  if (!run_adjust || !cfg_.adjust) return;
  PhaseTimer timer(phases_.inner_adjust);
  // A rebuild of the shallowest eligible node also rebuilds every eligible
  // descendant on the path.
  for (std::size_t i = 0; i < headers.size(); ++i) {
    if (adjust_eligible(headers[i], cfg_)) {
      rebuild(path, i, false);
      return;
    }
  }
}

void AulidIndex::rebuild(const std::vector<PathNode>& path, std::size_t level, bool forced) {
  const PathNode& n = path[level];
  const SubtreeScan old = scan_subtree(store_, n.node, n.num_slots, fmt_);
  const MixedBuild b = mixed_create(store_, old.items, fmt_);
  if (hist_max_depth(b.depth_hist) > hist_max_depth(old.depth_hist)) {
    // The fresh model would nest deeper than what inserts produced: keep the
    // old subtree and restart its growth allowance instead.
    free_subtree(store_, b.root, b.model.num_slots, fmt_);
    Block hb = store_.read(n.node);
    MixedHeader h = decode_mixed_header(hb);
    h.init_size = h.size;
    encode_mixed_header(h, hb);
    store_.write(n.node, hb);
    if (on_rebuild_) {
      RebuildEvent ev;
      ev.level = level;
      ev.forced = forced;
      ev.declined = true;
      ev.before = old.items;
      ev.after = collect_items(store_, n.node, LinearModel{1.0, 0.0, n.num_slots}, fmt_);
      ev.old_max_depth = ev.new_max_depth = hist_max_depth(old.depth_hist);
      on_rebuild_(ev);
    }
    return;
  }
  if (level == 0) {
    root_ = b.root;
    root_model_ = b.model;
  } else {
    const PathNode& p = path[level - 1];
    FetchedSlot f = slot_fetch(store_, p.node, p.num_slots, p.slot);
    if (f.slot.tag != SlotTag::kNodeMixed || f.slot.child != n.node) {
      throw CorruptionError("parent slot no longer points at the rebuilt node");
    }
    slot_store(store_, f, p.slot, InnerSlot::mixed(b.root, b.model));
  }
  for (BlockId blk : old.blocks) store_.free(blk);
  smo_.rebuilds += 1;
  smo_.mixed_created += b.mixed_nodes;

  if (level > 0) {
    std::vector<StatsDelta> deltas;
    for (std::size_t a = 0; a < level; ++a) {
      const std::size_t offset = level - a;
      const std::int64_t dl3 = l3_shifted(b.depth_hist, offset) - l3_shifted(old.depth_hist, offset);
      if (dl3 != 0) deltas.push_back({path[a].node, 0, dl3});
    }
    stats_update(store_, deltas);
  }
  if (on_rebuild_) {
    RebuildEvent ev;
    ev.level = level;
    ev.forced = forced;
    ev.before = old.items;
    ev.after = collect_items(store_, b.root, b.model, fmt_);
    ev.old_max_depth = hist_max_depth(old.depth_hist);
    ev.new_max_depth = hist_max_depth(b.depth_hist);
    on_rebuild_(ev);
  }
}

bool AulidIndex::force_rebuild(Key k, std::size_t level) {
  if (root_ == kNoBlock) return false;
  before_inner_mutation();
  const Descent d = find_entry(k);
  rebuild(d.path, std::min(level, d.path.size() - 1), true);
  return true;
}

// ---------------------------------------------------------------------------
// Inspection

std::vector<KeyBlock> AulidIndex::inner_items() {
  if (root_ == kNoBlock) return {};
  return collect_items(store_, root_, root_model_, fmt_);
}

SubtreeScan AulidIndex::scan_inner() {
  if (root_ == kNoBlock) return {};
  return scan_subtree(store_, root_, root_model_.num_slots, fmt_);
}

InspectReport AulidIndex::inspect() {
  InspectReport r;
  const SubtreeScan sc = scan_inner();
  r.inner = sc.counts;
  r.inner_items = sc.items.size();
  std::uint64_t depth_sum = 0;
  for (std::size_t i = 0; i < sc.items.size(); ++i) {
    depth_sum += sc.depths[i];
    r.max_depth = std::max<std::size_t>(r.max_depth, sc.depths[i]);
    r.depth_hist[sc.depths[i]] += 1;
    r.fetch_hist[sc.fetches[i] + 1u] += 1;
  }
  if (!sc.items.empty()) r.avg_depth = static_cast<double>(depth_sum) / static_cast<double>(sc.items.size());
  for (BlockId id = first_leaf(); id != kNoBlock;) {
    const LeafNode l = read_leaf_at(id);
    r.leaves += 1;
    r.pairs += l.count();
    r.indexed_leaves += l.indexed ? 1 : 0;
    id = l.next;
  }
  r.file_size = store_.file_size_bytes();
  r.blocks_in_use = store_.watermark() - 1 - store_.free_count();
  r.smo = smo_;
  return r;
}

std::string AulidIndex::check() {
  std::string err;
  auto fail = [&](const std::string& what) {
    if (err.size() < 2000) err += what + "; ";
  };
  std::vector<KeyBlock> fences;
  BlockId id = first_leaf();
  BlockId prev = kNoBlock;
  bool seen_index = false;
  Key last_fence = 0;
  Key prev_key = 0;
  bool any_key = false;
  LeafNode l;
  std::size_t n = 0;
  for (; id != kNoBlock; prev = id, id = l.next) {
    if (++n > store_.watermark()) {
      fail("leaf chain loops");
      break;
    }
    l = read_leaf_at(id);
    const bool is_last = id == last_leaf_;
    if (l.prev != prev) fail("leaf " + std::to_string(id) + " has a stale prev link");
    if (l.empty() && !(is_last && prev == kNoBlock)) fail("empty leaf " + std::to_string(id));
    for (const auto& kp : l.pairs) {
      if (any_key && kp.key < prev_key) fail("keys out of order at leaf " + std::to_string(id));
      prev_key = kp.key;
      any_key = true;
    }
    if (is_last && l.next != kNoBlock) fail("last leaf has a successor");
    if (is_last && l.indexed) fail("last leaf is indexed");
    if (!l.empty() && seen_index && l.min_key() < last_fence) fail("leaf " + std::to_string(id) + " holds keys below the previous fence");
    if (l.indexed) {
      if (seen_index && l.fence <= last_fence) fail("fences not increasing at leaf " + std::to_string(id));
      if (!l.empty() && l.max_key() > l.fence) fail("leaf " + std::to_string(id) + " exceeds its fence");
      fences.push_back({l.fence, id});
      seen_index = true;
      last_fence = l.fence;
    } else if (!is_last) {
      if (!seen_index) fail("unindexed leaf " + std::to_string(id) + " before any indexed leaf");
      for (const auto& kp : l.pairs) {
        if (kp.key != last_fence) {
          fail("unindexed leaf " + std::to_string(id) + " holds a key other than the previous fence");
          break;
        }
      }
    }
    if (is_last) {
      if (l.empty() != last_empty_) fail("metanode empty flag is stale");
      if (!l.empty() && (l.min_key() != last_min_ || l.max_key() != last_max_)) fail("metanode last-leaf range is stale");
    }
  }
  if (prev != last_leaf_) fail("chain does not end at the metanode's last leaf");
  if (has_prev_ != seen_index) fail("has_prev flag is stale");
  if (seen_index && prev_max_ != last_fence) fail("prev_max is stale");
  const std::vector<KeyBlock> items = inner_items();
  if (items != fences) {
    fail("inner entries (" + std::to_string(items.size()) + ") differ from leaf fences (" +
         std::to_string(fences.size()) + ")");
  }
  if (root_ != kNoBlock) {
    const std::string s = audit_stats(store_, root_, root_model_.num_slots, fmt_);
    if (!s.empty()) fail(s);
  }
  return err;
}

}  // namespace aulid
