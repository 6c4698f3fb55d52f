#include "aulid/aulid_index.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "aulid/endian.hpp"

namespace aulid {
namespace {

constexpr std::uint8_t kMetaVersion = 1;
constexpr std::size_t kMetaBytes = 96 + 8 * SmoCounters::kFields;

}  // namespace

const char* smo_field_name(std::size_t i) {
  static const char* const names[SmoCounters::kFields] = {
      "leaf_splits",   "leaf_merges",        "leaf_borrows",  "packed_created",
      "packed_grown",  "btree_created",      "btree_child_splits", "mixed_created",
      "rebuilds",      "collapses",          "inner_splits",  "inner_merges"};
  return i < SmoCounters::kFields ? names[i] : "?";
}

AulidIndex::AulidIndex(BlockStore store, const AulidConfig& cfg)
    : store_(std::move(store)), cfg_(cfg) {
  fmt_.block_size = store_.block_size();
  fmt_.lippb = cfg_.lippb;
  cap_ = aulid::leaf_capacity(store_.block_size());
}

AulidIndex::~AulidIndex() {
  try {
    flush();
  } catch (...) {
  }
}

std::unique_ptr<AulidIndex> AulidIndex::bulkload(const std::filesystem::path& path,
                                                 std::span<const KeyPayload> pairs,
                                                 const AulidConfig& cfg, std::uint32_t block_size) {
  if (block_size < kMinBlockSize) {
    throw Error("the learned index needs blocks of at least " + std::to_string(kMinBlockSize) + " bytes");
  }
  if (!(cfg.leaf_fill > 0.0 && cfg.leaf_fill <= 1.0)) throw Error("leaf_fill must be in (0, 1]");
  if (!(cfg.alpha > 0.0 && cfg.alpha <= 1.0)) throw Error("alpha must be in (0, 1]");
  if (!(cfg.beta >= 1.0)) throw Error("beta must be >= 1");
  for (std::size_t i = 1; i < pairs.size(); ++i) {
    if (pairs[i].key < pairs[i - 1].key) throw Error("bulkload input is not sorted");
  }
  std::unique_ptr<AulidIndex> idx(
      new AulidIndex(BlockStore::open(path, block_size, OpenMode::kCreate), cfg));
  AulidIndex& x = *idx;

  const std::size_t per = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(cfg.leaf_fill * x.cap_)));
  const std::size_t nleaves = pairs.empty() ? 1 : (pairs.size() + per - 1) / per;
  const BlockId first = x.store_.allocate_run(nleaves);
  std::vector<KeyBlock> entries;
  LeafNode leaf;
  for (std::size_t i = 0; i < nleaves; ++i) {
    const std::size_t b = i * per;
    const std::size_t e = std::min(pairs.size(), b + per);
    leaf = LeafNode{};
    leaf.pairs.assign(pairs.begin() + static_cast<std::ptrdiff_t>(b), pairs.begin() + static_cast<std::ptrdiff_t>(e));
    leaf.prev = i == 0 ? kNoBlock : first + i - 1;
    leaf.next = i + 1 == nleaves ? kNoBlock : first + i + 1;
    if (i + 1 < nleaves) {
      const Key k = leaf.max_key();
      if (entries.empty() || entries.back().k_max != k) {
        entries.push_back({k, first + i});
        leaf.indexed = true;
        leaf.fence = k;
      }
    }
    x.write_leaf_at(first + i, leaf);
  }
  x.last_leaf_ = first + nleaves - 1;
  x.refresh_last(leaf);
  if (!entries.empty()) {
    BuildOptions opts;
    opts.fulfill = cfg.fulfill;
    const MixedBuild b = mixed_create(x.store_, entries, x.fmt_, opts);
    x.root_ = b.root;
    x.root_model_ = b.model;
    x.has_prev_ = true;
    x.prev_max_ = entries.back().k_max;
    x.fulfill_active_ = cfg.fulfill;
  }
  x.flush();
  return idx;
}

std::unique_ptr<AulidIndex> AulidIndex::open(const std::filesystem::path& path) {
  BlockStore store = BlockStore::open(path, 0, OpenMode::kOpenExisting);
  auto meta = store.metadata();
  if (meta.empty() || meta[0] != kKindAulid) throw Error(path.string() + " does not hold a learned index");
  std::unique_ptr<AulidIndex> idx(new AulidIndex(std::move(store), AulidConfig{}));
  idx->load_meta();
  return idx;
}

void AulidIndex::flush() {
  save_meta();
  store_.flush();
}

void AulidIndex::save_meta() {
  std::vector<std::uint8_t> m(kMetaBytes, 0);
  m[0] = kKindAulid;
  m[1] = kMetaVersion;
  m[2] = static_cast<std::uint8_t>((last_empty_ ? 1 : 0) | (has_prev_ ? 2 : 0) | (fulfill_active_ ? 4 : 0));
  m[4] = static_cast<std::uint8_t>((cfg_.scanfward ? 1 : 0) | (cfg_.fulfill ? 2 : 0) | (cfg_.lippb ? 4 : 0) |
                                   (cfg_.adjust ? 8 : 0));
  le::put_u64(m, 8, root_);
  encode_model(root_model_, m, 16);
  le::put_u64(m, 40, last_leaf_);
  le::put_u64(m, 48, last_min_);
  le::put_u64(m, 56, last_max_);
  le::put_u64(m, 64, prev_max_);
  le::put_f64(m, 72, cfg_.alpha);
  le::put_f64(m, 80, cfg_.beta);
  le::put_f64(m, 88, cfg_.leaf_fill);
  for (std::size_t i = 0; i < SmoCounters::kFields; ++i) le::put_u64(m, 96 + 8 * i, smo_.begin()[i]);
  store_.set_metadata(m);
}

void AulidIndex::load_meta() {
  auto m = store_.metadata();
  if (m.size() < kMetaBytes || m[1] != kMetaVersion) throw CorruptionError("bad index metadata");
  last_empty_ = (m[2] & 1) != 0;
  has_prev_ = (m[2] & 2) != 0;
  fulfill_active_ = (m[2] & 4) != 0;
  cfg_.scanfward = (m[4] & 1) != 0;
  cfg_.fulfill = (m[4] & 2) != 0;
  cfg_.lippb = (m[4] & 4) != 0;
  cfg_.adjust = (m[4] & 8) != 0;
  fmt_.lippb = cfg_.lippb;
  root_ = le::get_u64(m, 8);
  root_model_ = decode_model(m, 16);
  last_leaf_ = le::get_u64(m, 40);
  last_min_ = le::get_u64(m, 48);
  last_max_ = le::get_u64(m, 56);
  prev_max_ = le::get_u64(m, 64);
  cfg_.alpha = le::get_f64(m, 72);
  cfg_.beta = le::get_f64(m, 80);
  cfg_.leaf_fill = le::get_f64(m, 88);
  for (std::size_t i = 0; i < SmoCounters::kFields; ++i) smo_.begin()[i] = le::get_u64(m, 96 + 8 * i);
  if (!store_.is_allocated(last_leaf_)) throw CorruptionError("metanode points at a free leaf");
  if (root_ != kNoBlock && !store_.is_allocated(root_)) throw CorruptionError("metanode points at a free root");
}

void AulidIndex::refresh_last(const LeafNode& last) {
  last_empty_ = last.empty();
  if (!last_empty_) {
    last_min_ = last.min_key();
    last_max_ = last.max_key();
  }
}

void AulidIndex::refresh_prev(BlockId prev_id, const LeafNode* prev) {
  if (prev_id == kNoBlock || prev == nullptr) {
    has_prev_ = false;
    return;
  }
  if (!prev->indexed && prev->empty()) throw CorruptionError("empty unindexed leaf before the last leaf");
  has_prev_ = true;
  prev_max_ = prev->indexed ? prev->fence : prev->max_key();
}

// ---------------------------------------------------------------------------
// Routing

std::optional<KeyBlock> AulidIndex::scan_forward(BlockId node, std::uint32_t num_slots,
                                                 std::uint32_t from, const FetchedSlot* have,
                                                 bool null_started) {
  FetchedSlot local;
  const FetchedSlot* cur = have;
  for (std::uint32_t t = from; t < num_slots; ++t) {
    InnerSlot s;
    if (cur != nullptr && t >= cur->first_slot && t < cur->end_slot) {
      s = slot_in(*cur, t);
    } else {
      local = slot_fetch(store_, node, num_slots, t);
      cur = &local;
      s = local.slot;
      if (null_started) trace_.null_crossings += 1;
    }
    switch (s.tag) {
      case SlotTag::kNull:
        break;
      case SlotTag::kData:
      case SlotTag::kDataCopy:
        return s.pair;
      case SlotTag::kNodePacked:
      case SlotTag::kNodeBTree:
        return structure_min(store_, s, fmt_);
      case SlotTag::kNodeMixed:
        if (auto r = leftmost(s.child, s.model.num_slots)) return r;
        break;
    }
  }
  return std::nullopt;
}

std::optional<KeyBlock> AulidIndex::leftmost(BlockId node, std::uint32_t num_slots) {
  return scan_forward(node, num_slots, 0, nullptr, false);
}

std::optional<AulidIndex::Route> AulidIndex::route_node(BlockId node, const LinearModel& model, Key k) {
  const std::uint32_t j = model.predict(k);
  FetchedSlot f = slot_fetch(store_, node, model.num_slots, j);
  const InnerSlot& s = f.slot;
  std::optional<KeyBlock> next;
  switch (s.tag) {
    case SlotTag::kNull:
      next = scan_forward(node, model.num_slots, j + 1, &f, true);
      break;
    case SlotTag::kData:
    case SlotTag::kDataCopy: {
      if (s.pair.k_max >= k) return Route{s.pair, true, false};
      if (cfg_.scanfward) {
        for (std::uint32_t t = j + 1; t < f.end_slot; ++t) {
          const InnerSlot n = slot_in(f, t);
          if (n.is_null()) continue;
          if (n.holds_pair()) {
            trace_.scanfward_hit = true;
            return Route{n.pair, true, false};
          }
          break;
        }
      }
      return Route{s.pair, true, true};
    }
    case SlotTag::kNodePacked:
    case SlotTag::kNodeBTree:
      if (auto r = structure_search(store_, s, k, fmt_)) return Route{*r, true, false};
      next = scan_forward(node, model.num_slots, j + 1, &f, false);
      break;
    case SlotTag::kNodeMixed:
      if (auto r = route_node(s.child, s.model, k)) return r;
      next = scan_forward(node, model.num_slots, j + 1, &f, false);
      break;
  }
  if (next) return Route{*next, true, false};
  return std::nullopt;
}

BlockId AulidIndex::route_leaf(Key k, LeafNode* loaded) {
  if (!has_prev_ || k > prev_max_) return last_leaf_;
  const auto r = route_node(root_, root_model_, k);
  if (!r) throw CorruptionError("no inner entry covers key " + std::to_string(k));
  if (!r->below) return r->entry.block;
  // The candidate's fence is below k: its next indexed sibling owns k.
  trace_.below = true;
  BlockId id = r->entry.block;
  LeafNode cur = read_leaf_at(id);
  for (std::size_t guard = 0;; ++guard) {
    if (cur.next == kNoBlock || guard > store_.watermark()) throw CorruptionError("sibling walk ran off the chain");
    id = cur.next;
    cur = read_leaf_at(id);
    trace_.sibling_hops += 1;
    if (cur.indexed || id == last_leaf_) break;
  }
  *loaded = std::move(cur);
  return id;
}

AulidIndex::Located AulidIndex::locate(Key k) {
  Located loc;
  LeafNode got;
  got.prev = got.next = kNoBlock;
  bool have = false;
  if (!has_prev_ || k > prev_max_) {
    loc.id = last_leaf_;
  } else {
    const bool before = trace_.below;
    trace_.below = false;
    loc.id = route_leaf(k, &got);
    have = trace_.below;
    trace_.below = trace_.below || before;
  }
  loc.leaf = have ? std::move(got) : read_leaf_at(loc.id);
  loc.pos = leaf_search(loc.leaf, k).pos;
  while (loc.pos == loc.leaf.count() && loc.leaf.next != kNoBlock) {
    loc.id = loc.leaf.next;
    loc.leaf = read_leaf_at(loc.id);
    loc.pos = leaf_search(loc.leaf, k).pos;
    trace_.sibling_hops += 1;
  }
  return loc;
}

namespace {

void tally(RouteCounters& c, const LookupTrace& t) {
  c.fast_path += t.fast_path ? 1 : 0;
  c.scanfward_hits += t.scanfward_hit ? 1 : 0;
  c.below += t.below ? 1 : 0;
  c.null_crossings += t.null_crossings;
  c.sibling_hops += t.sibling_hops;
}

}  // namespace

std::optional<Payload> AulidIndex::lookup(Key k) {
  PhaseTimer timer(phases_.search);
  trace_ = {};
  std::optional<Payload> out;
  if (!has_prev_ || k > prev_max_) {
    // Only the last leaf can hold k.
    if (!last_empty_ && k >= last_min_ && k <= last_max_) {
      trace_.fast_path = true;
      const LeafNode leaf = read_leaf_at(last_leaf_);
      const LeafPos p = leaf_search(leaf, k);
      if (p.found) out = leaf.pairs[p.pos].payload;
    }
  } else {
    const Located loc = locate(k);
    if (loc.pos < loc.leaf.count() && loc.leaf.pairs[loc.pos].key == k) out = loc.leaf.pairs[loc.pos].payload;
  }
  tally(routes_, trace_);
  return out;
}

std::vector<KeyPayload> AulidIndex::scan(Key u, Key v) {
  PhaseTimer timer(phases_.search);
  std::vector<KeyPayload> out;
  if (u > v) return out;
  trace_ = {};
  if ((!has_prev_ || u > prev_max_) && (last_empty_ || u > last_max_ || v < last_min_)) return out;
  const Located loc = locate(u);
  ScanLimit lim;
  lim.max_key = v;
  leaf_scan_from(store_, loc.leaf, loc.pos, lim, cap_, out);
  tally(routes_, trace_);
  return out;
}

std::vector<KeyPayload> AulidIndex::scan_count(Key u, std::size_t n) {
  PhaseTimer timer(phases_.search);
  std::vector<KeyPayload> out;
  if (n == 0) return out;
  trace_ = {};
  if ((!has_prev_ || u > prev_max_) && (last_empty_ || u > last_max_)) return out;
  const Located loc = locate(u);
  ScanLimit lim;
  lim.max_count = n;
  leaf_scan_from(store_, loc.leaf, loc.pos, lim, cap_, out);
  tally(routes_, trace_);
  return out;
}

bool AulidIndex::update(Key k, Payload p) {
  std::optional<Located> loc;
  {
    PhaseTimer timer(phases_.search);
    trace_ = {};
    if (!has_prev_ || k > prev_max_) {
      if (last_empty_ || k < last_min_ || k > last_max_) return false;
    }
    loc = locate(k);
  }
  if (loc->pos >= loc->leaf.count() || loc->leaf.pairs[loc->pos].key != k) return false;
  PhaseTimer timer(phases_.leaf);
  loc->leaf.pairs[loc->pos].payload = p;
  write_leaf_at(loc->id, loc->leaf);
  return true;
}

// ---------------------------------------------------------------------------
// Insert and delete

void AulidIndex::insert(Key k, Payload p) {
  BlockId id;
  LeafNode leaf;
  {
    PhaseTimer timer(phases_.search);
    trace_ = {};
    LeafNode got;
    if (!has_prev_ || k > prev_max_) {
      id = last_leaf_;
      leaf = read_leaf_at(id);
    } else {
      id = route_leaf(k, &got);
      leaf = trace_.below ? std::move(got) : read_leaf_at(id);
    }
  }
  const KeyPayload kp{k, p};
  {
    PhaseTimer timer(phases_.leaf);
    if (leaf_insert(leaf, kp, cap_)) {
      write_leaf_at(id, leaf);
      if (id == last_leaf_) refresh_last(leaf);
      return;
    }
  }

  SplitEvent ev;
  if (on_split_) {
    ev.original_id = id;
    ev.before = leaf.pairs;
    ev.pending = kp;
  }
  LeafSplit s;
  {
    PhaseTimer timer(phases_.leaf);
    s = leaf_split(store_, id, leaf, kp, cap_);
    smo_.leaf_splits += 1;
  }
  const Upsert u = inner_upsert({s.left_max, s.left_id}, id);
  s.left.indexed = u != Upsert::kExisting;
  s.left.fence = s.left.indexed ? s.left_max : 0;
  if (u == Upsert::kRepointed) {
    leaf.indexed = false;
    leaf.fence = 0;
  }
  {
    PhaseTimer timer(phases_.leaf);
    write_leaf_at(s.left_id, s.left);
    write_leaf_at(id, leaf);
  }
  if (id == last_leaf_) {
    refresh_last(leaf);
    refresh_prev(s.left_id, &s.left);
  }
  if (on_split_) {
    ev.left_id = s.left_id;
    ev.left = s.left.pairs;
    ev.original_after = leaf.pairs;
    ev.left_max = s.left_max;
    ev.left_indexed = s.left.indexed;
    on_split_(ev);
  }
}

bool AulidIndex::erase(Key k) {
  Located loc;
  {
    PhaseTimer timer(phases_.search);
    trace_ = {};
    if (!has_prev_ || k > prev_max_) {
      if (last_empty_ || k < last_min_ || k > last_max_) return false;
    }
    loc = locate(k);
  }
  if (loc.pos >= loc.leaf.count() || loc.leaf.pairs[loc.pos].key != k) return false;
  PhaseTimer timer(phases_.leaf);
  loc.leaf.pairs.erase(loc.leaf.pairs.begin() + static_cast<std::ptrdiff_t>(loc.pos));
  const bool sole = loc.id == last_leaf_ && loc.leaf.prev == kNoBlock;
  if (!sole && loc.leaf.count() < leaf_min_fill(cap_)) {
    rebalance(loc.id, loc.leaf);
  } else {
    write_leaf_at(loc.id, loc.leaf);
    if (loc.id == last_leaf_) refresh_last(loc.leaf);
  }
  return true;
}

void AulidIndex::rebalance(BlockId id, LeafNode& leaf) {
  if (id != last_leaf_) {
    const BlockId rid = leaf.next;
    if (rid == kNoBlock) throw CorruptionError("leaf before the last leaf has no successor");
    LeafNode right = read_leaf_at(rid);
    const bool right_last = rid == last_leaf_;
    if (leaf.count() + right.count() <= cap_) {
      // Merge into the right sibling; this block goes away.
      right.pairs.insert(right.pairs.begin(), leaf.pairs.begin(), leaf.pairs.end());
      right.prev = leaf.prev;
      LeafNode before;
      if (leaf.prev != kNoBlock) {
        before = read_leaf_at(leaf.prev);
        before.next = rid;
        write_leaf_at(leaf.prev, before);
      }
      if (leaf.indexed) {
        if (right_last || right.indexed) {
          inner_erase(leaf.fence);
        } else {
          inner_repoint(leaf.fence, id, rid);
          right.indexed = true;
          right.fence = leaf.fence;
        }
      }
      write_leaf_at(rid, right);
      store_.free(id);
      if (right_last) {
        refresh_last(right);
        refresh_prev(leaf.prev, leaf.prev != kNoBlock ? &before : nullptr);
      }
      smo_.leaf_merges += 1;
      return;
    }
    // Borrow from the front of the right sibling.
    const std::size_t move = (leaf.count() + right.count()) / 2 - leaf.count();
    leaf.pairs.insert(leaf.pairs.end(), right.pairs.begin(), right.pairs.begin() + static_cast<std::ptrdiff_t>(move));
    right.pairs.erase(right.pairs.begin(), right.pairs.begin() + static_cast<std::ptrdiff_t>(move));
    const Key m = leaf.max_key();
    if (!(leaf.indexed && m == leaf.fence)) {
      if (leaf.indexed) inner_erase(leaf.fence);
      const Upsert u = inner_upsert({m, id}, rid);
      leaf.indexed = u != Upsert::kExisting;
      leaf.fence = leaf.indexed ? m : 0;
      if (u == Upsert::kRepointed) {
        right.indexed = false;
        right.fence = 0;
      }
    }
    write_leaf_at(id, leaf);
    write_leaf_at(rid, right);
    if (right_last) {
      refresh_last(right);
      refresh_prev(id, &leaf);
    }
    smo_.leaf_borrows += 1;
    return;
  }

  // The last leaf underflowed: work with its left sibling.
  const BlockId pid = leaf.prev;
  LeafNode prev = read_leaf_at(pid);
  if (prev.count() + leaf.count() <= cap_) {
    leaf.pairs.insert(leaf.pairs.begin(), prev.pairs.begin(), prev.pairs.end());
    leaf.prev = prev.prev;
    LeafNode pp;
    if (prev.prev != kNoBlock) {
      pp = read_leaf_at(prev.prev);
      pp.next = id;
      write_leaf_at(prev.prev, pp);
    }
    if (prev.indexed) inner_erase(prev.fence);
    write_leaf_at(id, leaf);
    store_.free(pid);
    refresh_last(leaf);
    refresh_prev(prev.prev, prev.prev != kNoBlock ? &pp : nullptr);
    smo_.leaf_merges += 1;
    return;
  }
  const std::size_t move = (leaf.count() + prev.count()) / 2 - leaf.count();
  const auto cut = prev.pairs.end() - static_cast<std::ptrdiff_t>(move);
  leaf.pairs.insert(leaf.pairs.begin(), cut, prev.pairs.end());
  prev.pairs.erase(cut, prev.pairs.end());
  const Key m = prev.max_key();
  if (prev.indexed && m != prev.fence) {
    inner_erase(prev.fence);
    const Upsert u = inner_upsert({m, pid}, kNoBlock);
    prev.indexed = u != Upsert::kExisting;
    prev.fence = prev.indexed ? m : 0;
  }
  write_leaf_at(pid, prev);
  write_leaf_at(id, leaf);
  refresh_last(leaf);
  refresh_prev(pid, &prev);
  smo_.leaf_borrows += 1;
}

BlockId AulidIndex::first_leaf() {
  BlockId id = last_leaf_;
  if (has_prev_) {
    const auto r = leftmost(root_, root_model_.num_slots);
    if (r) id = r->block;
  }
  for (std::size_t guard = 0;; ++guard) {
    const LeafNode l = read_leaf_at(id);
    if (l.prev == kNoBlock) return id;
    if (guard > store_.watermark()) throw CorruptionError("prev chain loops");
    id = l.prev;
  }
}

std::vector<KeyPayload> AulidIndex::all_pairs() {
  std::vector<KeyPayload> out;
  const LeafNode first = read_leaf_at(first_leaf());
  leaf_scan_from(store_, first, 0, ScanLimit{}, cap_, out);
  return out;
}

}  // namespace aulid
