#include "aulid/btree_index.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "aulid/endian.hpp"

namespace aulid {
namespace {

constexpr std::uint8_t kMetaVersion = 1;
constexpr std::size_t kMetaBytes = 32 + 8 * SmoCounters::kFields;

std::size_t route(const BTreeInner& n, Key k) {
  auto it = std::lower_bound(n.pivots.begin(), n.pivots.end(), k);
  if (it == n.pivots.end()) return n.count() - 1;
  return static_cast<std::size_t>(it - n.pivots.begin());
}

template <typename T>
void erase_at(std::vector<T>& v, std::size_t i) {
  v.erase(v.begin() + static_cast<std::ptrdiff_t>(i));
}

template <typename T>
void insert_at(std::vector<T>& v, std::size_t i, T x) {
  v.insert(v.begin() + static_cast<std::ptrdiff_t>(i), x);
}

}  // namespace

BTreeInner read_btree_inner(BlockStore& store, BlockId id, std::size_t fanout) {
  const Block b = store.read(id);
  const std::uint64_t n = le::get_u64(b, 0);
  if (n == 0 || n > fanout) throw CorruptionError("corrupt inner node " + std::to_string(id));
  BTreeInner node;
  node.pivots.resize(n);
  node.children.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    node.pivots[i] = le::get_u64(b, 16 + 16 * i);
    node.children[i] = le::get_u64(b, 24 + 16 * i);
  }
  return node;
}

void write_btree_inner(BlockStore& store, BlockId id, const BTreeInner& node) {
  Block b(store.block_size(), 0);
  if (16 + 16 * node.count() > b.size()) throw Error("inner node overflows its block");
  le::put_u64(b, 0, node.count());
  for (std::size_t i = 0; i < node.count(); ++i) {
    le::put_u64(b, 16 + 16 * i, node.pivots[i]);
    le::put_u64(b, 24 + 16 * i, node.children[i]);
  }
  store.write(id, b);
}

BTreeIndex::BTreeIndex(BlockStore store) : store_(std::move(store)) {
  cap_ = aulid::leaf_capacity(store_.block_size());
  fanout_ = btree_fanout(store_.block_size());
}

BTreeIndex::~BTreeIndex() {
  try {
    flush();
  } catch (...) {
  }
}

std::unique_ptr<BTreeIndex> BTreeIndex::bulkload(const std::filesystem::path& path,
                                                 std::span<const KeyPayload> pairs, double leaf_fill,
                                                 std::uint32_t block_size) {
  if (!(leaf_fill > 0.0 && leaf_fill <= 1.0)) throw Error("leaf_fill must be in (0, 1]");
  for (std::size_t i = 1; i < pairs.size(); ++i) {
    if (pairs[i].key < pairs[i - 1].key) throw Error("bulkload input is not sorted");
  }
  std::unique_ptr<BTreeIndex> t(new BTreeIndex(BlockStore::open(path, block_size, OpenMode::kCreate)));
  const std::size_t per = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(leaf_fill * t->cap_)));
  const std::size_t nleaves = pairs.empty() ? 1 : (pairs.size() + per - 1) / per;
  const BlockId first = t->store_.allocate_run(nleaves);
  std::vector<KeyBlock> level;  // (upper bound, node) of the level being built
  for (std::size_t i = 0; i < nleaves; ++i) {
    LeafNode leaf;
    const std::size_t b = i * per;
    const std::size_t e = std::min(pairs.size(), b + per);
    leaf.pairs.assign(pairs.begin() + static_cast<std::ptrdiff_t>(b), pairs.begin() + static_cast<std::ptrdiff_t>(e));
    leaf.prev = i == 0 ? kNoBlock : first + i - 1;
    leaf.next = i + 1 == nleaves ? kNoBlock : first + i + 1;
    write_leaf(t->store_, first + i, leaf);
    level.push_back({leaf.empty() ? 0 : leaf.max_key(), first + i});
  }
  t->height_ = 1;
  while (level.size() > 1) {
    const std::size_t nodes = (level.size() + t->fanout_ - 1) / t->fanout_;
    std::vector<KeyBlock> up;
    std::size_t b = 0;
    for (std::size_t n = 0; n < nodes; ++n) {
      const std::size_t e = level.size() * (n + 1) / nodes;
      BTreeInner node;
      for (std::size_t i = b; i < e; ++i) {
        node.pivots.push_back(level[i].k_max);
        node.children.push_back(level[i].block);
      }
      const BlockId id = t->store_.allocate();
      write_btree_inner(t->store_, id, node);
      up.push_back({node.pivots.back(), id});
      b = e;
    }
    level = std::move(up);
    t->height_ += 1;
  }
  t->root_ = level.front().block;
  t->flush();
  return t;
}

std::unique_ptr<BTreeIndex> BTreeIndex::open(const std::filesystem::path& path) {
  BlockStore store = BlockStore::open(path, 0, OpenMode::kOpenExisting);
  auto meta = store.metadata();
  if (meta.empty() || meta[0] != kKindBTree) throw Error(path.string() + " does not hold a B+-tree");
  std::unique_ptr<BTreeIndex> t(new BTreeIndex(std::move(store)));
  t->load_meta();
  return t;
}

void BTreeIndex::flush() {
  save_meta();
  store_.flush();
}

void BTreeIndex::save_meta() {
  std::vector<std::uint8_t> m(kMetaBytes, 0);
  m[0] = kKindBTree;
  m[1] = kMetaVersion;
  le::put_u64(m, 8, root_);
  le::put_u64(m, 16, height_);
  for (std::size_t i = 0; i < SmoCounters::kFields; ++i) le::put_u64(m, 32 + 8 * i, smo_.begin()[i]);
  store_.set_metadata(m);
}

void BTreeIndex::load_meta() {
  auto m = store_.metadata();
  if (m.size() < kMetaBytes || m[1] != kMetaVersion) throw CorruptionError("bad B+-tree metadata");
  root_ = le::get_u64(m, 8);
  height_ = le::get_u64(m, 16);
  for (std::size_t i = 0; i < SmoCounters::kFields; ++i) smo_.begin()[i] = le::get_u64(m, 32 + 8 * i);
  if (height_ == 0 || !store_.is_allocated(root_)) throw CorruptionError("bad B+-tree root");
}

BTreeIndex::Found BTreeIndex::descend(Key k) {
  Found f;
  BlockId node = root_;
  for (std::size_t level = height_; level > 1; --level) {
    Step s;
    s.node = node;
    s.inner = read_btree_inner(store_, node, fanout_);
    s.idx = route(s.inner, k);
    node = s.inner.children[s.idx];
    f.path.push_back(std::move(s));
  }
  f.leaf_id = node;
  f.leaf = read_leaf(store_, node, cap_);
  return f;
}

std::optional<Payload> BTreeIndex::lookup(Key k) {
  PhaseTimer timer(phases_.search);
  Found f = descend(k);
  std::size_t pos = leaf_search(f.leaf, k).pos;
  while (pos == f.leaf.count() && f.leaf.next != kNoBlock) {
    f.leaf = read_leaf(store_, f.leaf.next, cap_);
    pos = leaf_search(f.leaf, k).pos;
  }
  if (pos < f.leaf.count() && f.leaf.pairs[pos].key == k) return f.leaf.pairs[pos].payload;
  return std::nullopt;
}

std::vector<KeyPayload> BTreeIndex::scan(Key u, Key v) {
  PhaseTimer timer(phases_.search);
  std::vector<KeyPayload> out;
  if (u > v) return out;
  const Found f = descend(u);
  ScanLimit lim;
  lim.max_key = v;
  leaf_scan_from(store_, f.leaf, leaf_search(f.leaf, u).pos, lim, cap_, out);
  return out;
}

std::vector<KeyPayload> BTreeIndex::scan_count(Key u, std::size_t n) {
  PhaseTimer timer(phases_.search);
  std::vector<KeyPayload> out;
  if (n == 0) return out;
  const Found f = descend(u);
  ScanLimit lim;
  lim.max_count = n;
  leaf_scan_from(store_, f.leaf, leaf_search(f.leaf, u).pos, lim, cap_, out);
  return out;
}

bool BTreeIndex::update(Key k, Payload p) {
  Found f;
  std::size_t pos;
  {
    PhaseTimer timer(phases_.search);
    f = descend(k);
    pos = leaf_search(f.leaf, k).pos;
    while (pos == f.leaf.count() && f.leaf.next != kNoBlock) {
      f.leaf_id = f.leaf.next;
      f.leaf = read_leaf(store_, f.leaf_id, cap_);
      pos = leaf_search(f.leaf, k).pos;
    }
  }
  if (pos >= f.leaf.count() || f.leaf.pairs[pos].key != k) return false;
  PhaseTimer timer(phases_.leaf);
  f.leaf.pairs[pos].payload = p;
  write_leaf(store_, f.leaf_id, f.leaf);
  return true;
}

void BTreeIndex::insert(Key k, Payload p) {
  Found f;
  {
    PhaseTimer timer(phases_.search);
    f = descend(k);
  }
  PhaseTimer timer(phases_.leaf);
  if (leaf_insert(f.leaf, {k, p}, cap_)) {
    write_leaf(store_, f.leaf_id, f.leaf);
    return;
  }
  // Textbook split: the original block keeps the smaller half.
  std::vector<KeyPayload> merged = std::move(f.leaf.pairs);
  merged.insert(std::upper_bound(merged.begin(), merged.end(), k,
                                 [](Key x, const KeyPayload& kp) { return x < kp.key; }),
                KeyPayload{k, p});
  const std::size_t left_n = merged.size() / 2;
  LeafNode right;
  right.pairs.assign(merged.begin() + static_cast<std::ptrdiff_t>(left_n), merged.end());
  f.leaf.pairs.assign(merged.begin(), merged.begin() + static_cast<std::ptrdiff_t>(left_n));
  const BlockId rid = store_.allocate();
  right.prev = f.leaf_id;
  right.next = f.leaf.next;
  if (right.next != kNoBlock) {
    LeafNode after = read_leaf(store_, right.next, cap_);
    after.prev = rid;
    write_leaf(store_, right.next, after);
  }
  f.leaf.next = rid;
  write_leaf(store_, f.leaf_id, f.leaf);
  write_leaf(store_, rid, right);
  smo_.leaf_splits += 1;

  // Push (left bound, right node) up the path.
  Key left_bound = f.leaf.max_key();
  BlockId new_right = rid;
  Key right_bound = right.max_key();
  for (std::size_t level = f.path.size(); level-- > 0;) {
    Step& s = f.path[level];
    const Key old = s.inner.pivots[s.idx];
    s.inner.pivots[s.idx] = left_bound;
    insert_at(s.inner.pivots, s.idx + 1, std::max(old, right_bound));
    insert_at(s.inner.children, s.idx + 1, new_right);
    if (s.inner.count() <= fanout_) {
      write_btree_inner(store_, s.node, s.inner);
      return;
    }
    const std::size_t keep = s.inner.count() / 2;
    BTreeInner r;
    r.pivots.assign(s.inner.pivots.begin() + static_cast<std::ptrdiff_t>(keep), s.inner.pivots.end());
    r.children.assign(s.inner.children.begin() + static_cast<std::ptrdiff_t>(keep), s.inner.children.end());
    s.inner.pivots.resize(keep);
    s.inner.children.resize(keep);
    new_right = store_.allocate();
    write_btree_inner(store_, s.node, s.inner);
    write_btree_inner(store_, new_right, r);
    smo_.inner_splits += 1;
    left_bound = s.inner.pivots.back();
    right_bound = r.pivots.back();
  }
  // The root split.
  BTreeInner root;
  root.pivots = {left_bound, right_bound};
  root.children = {f.path.empty() ? f.leaf_id : f.path.front().node, new_right};
  const BlockId id = store_.allocate();
  write_btree_inner(store_, id, root);
  root_ = id;
  height_ += 1;
}

bool BTreeIndex::erase(Key k) {
  Found f;
  std::size_t pos;
  {
    PhaseTimer timer(phases_.search);
    f = descend(k);
    pos = leaf_search(f.leaf, k).pos;
    // Copies of k may start in a later leaf; move the path along with it.
    while (pos == f.leaf.count() && f.leaf.next != kNoBlock) {
      std::size_t level = f.path.size();
      while (level > 0 && f.path[level - 1].idx + 1 >= f.path[level - 1].inner.count()) --level;
      if (level == 0) break;
      f.path[level - 1].idx += 1;
      BlockId node = f.path[level - 1].inner.children[f.path[level - 1].idx];
      for (std::size_t l = level; l < f.path.size(); ++l) {
        f.path[l].node = node;
        f.path[l].inner = read_btree_inner(store_, node, fanout_);
        f.path[l].idx = 0;
        node = f.path[l].inner.children[0];
      }
      f.leaf_id = node;
      f.leaf = read_leaf(store_, node, cap_);
      pos = leaf_search(f.leaf, k).pos;
    }
  }
  if (pos >= f.leaf.count() || f.leaf.pairs[pos].key != k) return false;
  PhaseTimer timer(phases_.leaf);
  erase_at(f.leaf.pairs, pos);
  if (f.path.empty() || f.leaf.count() >= leaf_min_fill(cap_)) {
    write_leaf(store_, f.leaf_id, f.leaf);
    return true;
  }
  rebalance_leaf(f);
  return true;
}

void BTreeIndex::rebalance_leaf(Found& f) {
  Step& parent = f.path.back();
  const std::size_t idx = parent.idx;
  LeafNode& leaf = f.leaf;
  if (idx + 1 < parent.inner.count()) {
    const BlockId rid = parent.inner.children[idx + 1];
    LeafNode right = read_leaf(store_, rid, cap_);
    if (leaf.count() + right.count() <= cap_) {
      leaf.pairs.insert(leaf.pairs.end(), right.pairs.begin(), right.pairs.end());
      leaf.next = right.next;
      if (right.next != kNoBlock) {
        LeafNode after = read_leaf(store_, right.next, cap_);
        after.prev = f.leaf_id;
        write_leaf(store_, right.next, after);
      }
      write_leaf(store_, f.leaf_id, leaf);
      store_.free(rid);
      parent.inner.pivots[idx] = parent.inner.pivots[idx + 1];
      erase_at(parent.inner.pivots, idx + 1);
      erase_at(parent.inner.children, idx + 1);
      smo_.leaf_merges += 1;
    } else {
      const std::size_t move = (leaf.count() + right.count()) / 2 - leaf.count();
      leaf.pairs.insert(leaf.pairs.end(), right.pairs.begin(), right.pairs.begin() + static_cast<std::ptrdiff_t>(move));
      right.pairs.erase(right.pairs.begin(), right.pairs.begin() + static_cast<std::ptrdiff_t>(move));
      write_leaf(store_, f.leaf_id, leaf);
      write_leaf(store_, rid, right);
      parent.inner.pivots[idx] = leaf.max_key();
      write_btree_inner(store_, parent.node, parent.inner);
      smo_.leaf_borrows += 1;
      return;
    }
  } else {
    const BlockId lid = parent.inner.children[idx - 1];
    LeafNode left = read_leaf(store_, lid, cap_);
    if (leaf.count() + left.count() <= cap_) {
      left.pairs.insert(left.pairs.end(), leaf.pairs.begin(), leaf.pairs.end());
      left.next = leaf.next;
      if (leaf.next != kNoBlock) {
        LeafNode after = read_leaf(store_, leaf.next, cap_);
        after.prev = lid;
        write_leaf(store_, leaf.next, after);
      }
      write_leaf(store_, lid, left);
      store_.free(f.leaf_id);
      parent.inner.pivots[idx - 1] = parent.inner.pivots[idx];
      erase_at(parent.inner.pivots, idx);
      erase_at(parent.inner.children, idx);
      smo_.leaf_merges += 1;
    } else {
      const std::size_t move = (leaf.count() + left.count()) / 2 - leaf.count();
      const auto cut = left.pairs.end() - static_cast<std::ptrdiff_t>(move);
      leaf.pairs.insert(leaf.pairs.begin(), cut, left.pairs.end());
      left.pairs.erase(cut, left.pairs.end());
      write_leaf(store_, lid, left);
      write_leaf(store_, f.leaf_id, leaf);
      parent.inner.pivots[idx - 1] = left.max_key();
      write_btree_inner(store_, parent.node, parent.inner);
      smo_.leaf_borrows += 1;
      return;
    }
  }
  rebalance_inner(f.path, f.path.size() - 1);
}

void BTreeIndex::rebalance_inner(std::vector<Step>& path, std::size_t level) {
  Step& s = path[level];
  const std::size_t min_fill = (fanout_ + 1) / 2;
  if (level == 0) {
    if (s.inner.count() == 1) {
      root_ = s.inner.children.front();
      store_.free(s.node);
      height_ -= 1;
    } else {
      write_btree_inner(store_, s.node, s.inner);
    }
    return;
  }
  if (s.inner.count() >= min_fill) {
    write_btree_inner(store_, s.node, s.inner);
    return;
  }
  Step& parent = path[level - 1];
  const std::size_t idx = parent.idx;
  if (idx + 1 < parent.inner.count()) {
    const BlockId rid = parent.inner.children[idx + 1];
    BTreeInner right = read_btree_inner(store_, rid, fanout_);
    if (s.inner.count() + right.count() <= fanout_) {
      s.inner.pivots.insert(s.inner.pivots.end(), right.pivots.begin(), right.pivots.end());
      s.inner.children.insert(s.inner.children.end(), right.children.begin(), right.children.end());
      write_btree_inner(store_, s.node, s.inner);
      store_.free(rid);
      parent.inner.pivots[idx] = parent.inner.pivots[idx + 1];
      erase_at(parent.inner.pivots, idx + 1);
      erase_at(parent.inner.children, idx + 1);
      smo_.inner_merges += 1;
    } else {
      const std::size_t move = (s.inner.count() + right.count()) / 2 - s.inner.count();
      const auto pe = right.pivots.begin() + static_cast<std::ptrdiff_t>(move);
      const auto ce = right.children.begin() + static_cast<std::ptrdiff_t>(move);
      s.inner.pivots.insert(s.inner.pivots.end(), right.pivots.begin(), pe);
      s.inner.children.insert(s.inner.children.end(), right.children.begin(), ce);
      right.pivots.erase(right.pivots.begin(), pe);
      right.children.erase(right.children.begin(), ce);
      write_btree_inner(store_, s.node, s.inner);
      write_btree_inner(store_, rid, right);
      parent.inner.pivots[idx] = s.inner.pivots.back();
      write_btree_inner(store_, parent.node, parent.inner);
      return;
    }
  } else {
    const BlockId lid = parent.inner.children[idx - 1];
    BTreeInner left = read_btree_inner(store_, lid, fanout_);
    if (s.inner.count() + left.count() <= fanout_) {
      left.pivots.insert(left.pivots.end(), s.inner.pivots.begin(), s.inner.pivots.end());
      left.children.insert(left.children.end(), s.inner.children.begin(), s.inner.children.end());
      write_btree_inner(store_, lid, left);
      store_.free(s.node);
      parent.inner.pivots[idx - 1] = parent.inner.pivots[idx];
      erase_at(parent.inner.pivots, idx);
      erase_at(parent.inner.children, idx);
      smo_.inner_merges += 1;
    } else {
      const std::size_t move = (s.inner.count() + left.count()) / 2 - s.inner.count();
      const auto pc = left.pivots.end() - static_cast<std::ptrdiff_t>(move);
      const auto cc = left.children.end() - static_cast<std::ptrdiff_t>(move);
      s.inner.pivots.insert(s.inner.pivots.begin(), pc, left.pivots.end());
      s.inner.children.insert(s.inner.children.begin(), cc, left.children.end());
      left.pivots.erase(pc, left.pivots.end());
      left.children.erase(cc, left.children.end());
      write_btree_inner(store_, lid, left);
      write_btree_inner(store_, s.node, s.inner);
      parent.inner.pivots[idx - 1] = left.pivots.back();
      write_btree_inner(store_, parent.node, parent.inner);
      return;
    }
  }
  rebalance_inner(path, level - 1);
}

BlockId BTreeIndex::leftmost_leaf() {
  BlockId node = root_;
  for (std::size_t level = height_; level > 1; --level) node = read_btree_inner(store_, node, fanout_).children.front();
  return node;
}

std::vector<KeyPayload> BTreeIndex::all_pairs() {
  std::vector<KeyPayload> out;
  const LeafNode first = read_leaf(store_, leftmost_leaf(), cap_);
  leaf_scan_from(store_, first, 0, ScanLimit{}, cap_, out);
  return out;
}

std::uint64_t BTreeIndex::leaf_count() {
  std::uint64_t n = 0;
  for (BlockId id = leftmost_leaf(); id != kNoBlock; id = read_leaf(store_, id, cap_).next) ++n;
  return n;
}

std::size_t BTreeIndex::check_node(BlockId id, std::size_t level, Key lo, bool has_lo, Key hi, bool has_hi,
                                   std::string& err) {
  auto fail = [&](const std::string& what) {
    if (err.size() < 2000) err += what + "; ";
  };
  if (level == 1) {
    const LeafNode l = read_leaf(store_, id, cap_);
    for (const auto& kp : l.pairs) {
      if ((has_lo && kp.key < lo) || (has_hi && kp.key > hi)) {
        fail("leaf " + std::to_string(id) + " key outside its bounds");
        break;
      }
    }
    return 1;
  }
  const BTreeInner n = read_btree_inner(store_, id, fanout_);
  if (id != root_ && n.count() < (fanout_ + 1) / 2) fail("inner node " + std::to_string(id) + " underfull");
  for (std::size_t i = 0; i < n.count(); ++i) {
    if (i > 0 && n.pivots[i] < n.pivots[i - 1]) fail("pivots out of order in " + std::to_string(id));
    const bool last = i + 1 == n.count();
    const Key clo = i == 0 ? lo : n.pivots[i - 1];
    const bool chas_lo = i == 0 ? has_lo : true;
    check_node(n.children[i], level - 1, clo, chas_lo, last ? hi : n.pivots[i], last ? has_hi : true, err);
  }
  return level;
}

std::string BTreeIndex::check() {
  std::string err;
  check_node(root_, height_, 0, false, 0, false, err);
  BlockId prev = kNoBlock;
  std::size_t guard = 0;
  Key last = 0;
  bool any = false;
  for (BlockId id = leftmost_leaf(); id != kNoBlock;) {
    const LeafNode l = read_leaf(store_, id, cap_);
    if (l.prev != prev) err += "stale prev link at " + std::to_string(id) + "; ";
    for (const auto& kp : l.pairs) {
      if (any && kp.key < last) err += "keys out of order; ";
      last = kp.key;
      any = true;
    }
    prev = id;
    id = l.next;
    if (++guard > store_.watermark()) {
      err += "leaf chain loops; ";
      break;
    }
  }
  return err;
}

}  // namespace aulid
