#include "aulid/inner_node.hpp"

#include <algorithm>
#include <string>

#include "aulid/endian.hpp"

namespace aulid {
namespace {

bool by_key(const KeyBlock& a, Key k) { return a.k_max < k; }

std::vector<KeyBlock>::const_iterator lower(const std::vector<KeyBlock>& v, Key k) {
  return std::lower_bound(v.begin(), v.end(), k, by_key);
}

void insert_sorted(std::vector<KeyBlock>& v, KeyBlock kb) {
  auto it = std::lower_bound(v.begin(), v.end(), kb.k_max, by_key);
  if (it != v.end() && it->k_max == kb.k_max) {
    throw Error("duplicate k_max " + std::to_string(kb.k_max) + " in inner structure");
  }
  v.insert(it, kb);
}

}  // namespace

std::uint8_t packed_class_for(std::size_t n) {
  for (std::uint8_t c = 1; c <= kPackedMaxClass; ++c) {
    if (n <= packed_capacity(c)) return c;
  }
  throw Error("too many items for a packed array: " + std::to_string(n));
}

void encode_slot(const InnerSlot& s, std::span<std::uint8_t> out, std::size_t off) {
  std::fill(out.begin() + static_cast<std::ptrdiff_t>(off),
            out.begin() + static_cast<std::ptrdiff_t>(off + kSlotBytes), 0);
  out[off] = static_cast<std::uint8_t>(s.tag);
  out[off + 1] = s.size_class;
  switch (s.tag) {
    case SlotTag::kNull:
      break;
    case SlotTag::kData:
    case SlotTag::kDataCopy:
      le::put_u64(out, off + 8, s.pair.k_max);
      le::put_u64(out, off + 16, s.pair.block);
      break;
    case SlotTag::kNodeMixed:
      le::put_u32(out, off + 4, s.model.num_slots);
      le::put_f64(out, off + 8, s.model.slope);
      le::put_f64(out, off + 16, s.model.intercept);
      le::put_u64(out, off + 24, s.child);
      break;
    case SlotTag::kNodePacked:
    case SlotTag::kNodeBTree:
      le::put_u64(out, off + 24, s.child);
      break;
  }
}

InnerSlot decode_slot(std::span<const std::uint8_t> in, std::size_t off) {
  InnerSlot s;
  const std::uint8_t tag = in[off];
  if (tag > static_cast<std::uint8_t>(SlotTag::kNodeBTree)) {
    throw CorruptionError("corrupt slot tag " + std::to_string(tag));
  }
  s.tag = static_cast<SlotTag>(tag);
  s.size_class = in[off + 1];
  switch (s.tag) {
    case SlotTag::kNull:
      break;
    case SlotTag::kData:
    case SlotTag::kDataCopy:
      s.pair = {le::get_u64(in, off + 8), le::get_u64(in, off + 16)};
      break;
    case SlotTag::kNodeMixed:
      s.model.num_slots = le::get_u32(in, off + 4);
      s.model.slope = le::get_f64(in, off + 8);
      s.model.intercept = le::get_f64(in, off + 16);
      s.child = le::get_u64(in, off + 24);
      if (!(s.model.slope > 0.0) || s.model.num_slots == 0) throw CorruptionError("corrupt child model");
      break;
    case SlotTag::kNodePacked:
      if (s.size_class < 1 || s.size_class > kPackedMaxClass) throw CorruptionError("bad packed class");
      s.child = le::get_u64(in, off + 24);
      break;
    case SlotTag::kNodeBTree:
      s.child = le::get_u64(in, off + 24);
      break;
  }
  return s;
}

SlotAddress slot_address(std::uint32_t slot, std::uint32_t block_size) {
  const std::size_t byte = kMixedHeaderBytes + std::size_t{slot} * kSlotBytes;
  return {byte / block_size, byte % block_size};
}

// ---------------------------------------------------------------------------

void encode_mixed_header(const MixedHeader& h, std::span<std::uint8_t> out) {
  le::put_u32(out, 0, h.num_slots);
  le::put_u32(out, 4, 0);
  le::put_u64(out, 8, h.size);
  le::put_u64(out, 16, h.init_size);
  le::put_u64(out, 24, h.l3_item);
}

MixedHeader decode_mixed_header(std::span<const std::uint8_t> in) {
  MixedHeader h;
  h.num_slots = le::get_u32(in, 0);
  h.size = le::get_u64(in, 8);
  h.init_size = le::get_u64(in, 16);
  h.l3_item = le::get_u64(in, 24);
  return h;
}

MixedHeader read_mixed_header(BlockStore& store, BlockId node) {
  return decode_mixed_header(store.read(node));
}

FetchedSlot slot_fetch(BlockStore& store, BlockId node, std::uint32_t num_slots, std::uint32_t j) {
  if (j >= num_slots) throw Error("slot index out of range");
  const std::uint32_t bs = store.block_size();
  const SlotAddress a = slot_address(j, bs);
  FetchedSlot f;
  f.block_id = node + a.block_offset;
  f.block = store.read(f.block_id);
  const std::size_t block_start_byte = a.block_offset * bs;
  const std::size_t first_byte = std::max(block_start_byte, kMixedHeaderBytes);
  f.first_slot = static_cast<std::uint32_t>((first_byte - kMixedHeaderBytes) / kSlotBytes);
  const std::size_t end_byte = block_start_byte + bs;
  f.end_slot = static_cast<std::uint32_t>(
      std::min<std::size_t>(num_slots, (end_byte - kMixedHeaderBytes) / kSlotBytes));
  f.slot = decode_slot(f.block, a.byte_offset);
  return f;
}

InnerSlot slot_in(const FetchedSlot& f, std::uint32_t j) {
  if (j < f.first_slot || j >= f.end_slot) throw Error("slot not in fetched block");
  const std::size_t byte = kMixedHeaderBytes + std::size_t{j} * kSlotBytes;
  return decode_slot(f.block, byte % f.block.size());
}

void slot_store(BlockStore& store, FetchedSlot& f, std::uint32_t j, const InnerSlot& s) {
  if (j < f.first_slot || j >= f.end_slot) throw Error("slot not in fetched block");
  const std::size_t byte = kMixedHeaderBytes + std::size_t{j} * kSlotBytes;
  encode_slot(s, f.block, byte % f.block.size());
  store.write(f.block_id, f.block);
}

// ---------------------------------------------------------------------------

PackedArray read_packed(BlockStore& store, BlockId id) {
  const Block b = store.read(id);
  PackedArray arr;
  const std::uint64_t count = le::get_u64(b, 0);
  arr.size_class = static_cast<std::uint8_t>(le::get_u64(b, 8));
  if (arr.size_class < 1 || arr.size_class > kPackedMaxClass || count > packed_capacity(arr.size_class)) {
    throw CorruptionError("corrupt packed array header");
  }
  arr.items.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    arr.items[i] = {le::get_u64(b, 16 + 16 * i), le::get_u64(b, 24 + 16 * i)};
  }
  return arr;
}

void write_packed(BlockStore& store, BlockId id, const PackedArray& arr) {
  if (arr.items.size() > packed_capacity(arr.size_class)) throw Error("packed array over capacity");
  Block b(store.block_size(), 0);
  le::put_u64(b, 0, arr.items.size());
  le::put_u64(b, 8, arr.size_class);
  for (std::size_t i = 0; i < arr.items.size(); ++i) {
    le::put_u64(b, 16 + 16 * i, arr.items[i].k_max);
    le::put_u64(b, 24 + 16 * i, arr.items[i].block);
  }
  store.write(id, b);
}

BTreeRoot read_btree_root(BlockStore& store, BlockId id) {
  const Block b = store.read(id);
  BTreeRoot r;
  const std::uint64_t n = le::get_u64(b, 0);
  r.total = le::get_u64(b, 8);
  if (n == 0 || n > kBTreeMaxChildren) throw CorruptionError("corrupt two-layer tree root");
  for (std::size_t i = 0; i < n; ++i) {
    r.pivots.push_back(le::get_u64(b, 16 + 16 * i));
    r.children.push_back(le::get_u64(b, 24 + 16 * i));
  }
  return r;
}

void write_btree_root(BlockStore& store, BlockId id, const BTreeRoot& root) {
  Block b(store.block_size(), 0);
  le::put_u64(b, 0, root.children.size());
  le::put_u64(b, 8, root.total);
  for (std::size_t i = 0; i < root.children.size(); ++i) {
    le::put_u64(b, 16 + 16 * i, root.pivots[i]);
    le::put_u64(b, 24 + 16 * i, root.children[i]);
  }
  store.write(id, b);
}

std::vector<KeyBlock> read_btree_child(BlockStore& store, BlockId id, const InnerFormat& fmt) {
  const Block b = store.read(id);
  const std::uint64_t n = le::get_u64(b, 0);
  if (n > fmt.btree_child_capacity()) throw CorruptionError("corrupt two-layer tree child");
  std::vector<KeyBlock> items(n);
  for (std::size_t i = 0; i < n; ++i) items[i] = {le::get_u64(b, 16 + 16 * i), le::get_u64(b, 24 + 16 * i)};
  return items;
}

void write_btree_child(BlockStore& store, BlockId id, const std::vector<KeyBlock>& items) {
  Block b(store.block_size(), 0);
  le::put_u64(b, 0, items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    le::put_u64(b, 16 + 16 * i, items[i].k_max);
    le::put_u64(b, 24 + 16 * i, items[i].block);
  }
  store.write(id, b);
}

BlockId btree2_build(BlockStore& store, std::span<const KeyBlock> items, const InnerFormat& fmt) {
  const std::size_t cap = fmt.btree_child_capacity();
  if (items.empty() || items.size() > fmt.btree_max_items()) throw Error("two-layer tree size out of range");
  const std::size_t nchildren = (items.size() + cap - 1) / cap;
  BTreeRoot root;
  root.total = items.size();
  const BlockId root_id = store.allocate();
  std::size_t begin = 0;
  for (std::size_t c = 0; c < nchildren; ++c) {
    const std::size_t end = items.size() * (c + 1) / nchildren;
    std::vector<KeyBlock> part(items.begin() + static_cast<std::ptrdiff_t>(begin),
                               items.begin() + static_cast<std::ptrdiff_t>(end));
    const BlockId child = store.allocate();
    write_btree_child(store, child, part);
    root.pivots.push_back(part.back().k_max);
    root.children.push_back(child);
    begin = end;
  }
  write_btree_root(store, root_id, root);
  return root_id;
}

std::size_t btree2_route(const BTreeRoot& root, Key key) {
  for (std::size_t i = 0; i < root.pivots.size(); ++i) {
    if (root.pivots[i] >= key) return i;
  }
  return root.pivots.size() - 1;
}

// ---------------------------------------------------------------------------

StructureInsert packed_insert(BlockStore& store, const InnerSlot& slot, PackedArray& arr,
                              KeyBlock pair, const InnerFormat& fmt) {
  StructureInsert r;
  r.slot = slot;
  if (arr.items.size() < packed_capacity(arr.size_class)) {
    insert_sorted(arr.items, pair);
    write_packed(store, slot.child, arr);
    return r;
  }
  insert_sorted(arr.items, pair);
  store.free(slot.child);
  if (arr.size_class < kPackedMaxClass) {
    arr.size_class = static_cast<std::uint8_t>(arr.size_class + 1);
    const BlockId id = store.allocate();
    write_packed(store, id, arr);
    r.slot = InnerSlot::packed(id, arr.size_class);
    r.grew_class = true;
    return r;
  }
  r.slot = InnerSlot::btree(btree2_build(store, arr.items, fmt));
  r.became_btree = true;
  return r;
}

StructureInsert packed_insert(BlockStore& store, const InnerSlot& slot, KeyBlock pair,
                              const InnerFormat& fmt) {
  if (slot.tag != SlotTag::kNodePacked) throw Error("packed_insert on a non-packed slot");
  PackedArray arr = read_packed(store, slot.child);
  return packed_insert(store, slot, arr, pair, fmt);
}

StructureInsert btree2_insert(BlockStore& store, const InnerSlot& slot, KeyBlock pair,
                              const InnerFormat& fmt) {
  if (slot.tag != SlotTag::kNodeBTree) throw Error("btree2_insert on a non-btree slot");
  StructureInsert r;
  r.slot = slot;
  BTreeRoot root = read_btree_root(store, slot.child);
  const std::size_t i = btree2_route(root, pair.k_max);
  std::vector<KeyBlock> items = read_btree_child(store, root.children[i], fmt);
  const std::size_t cap = fmt.btree_child_capacity();
  if (items.size() < cap) {
    insert_sorted(items, pair);
    write_btree_child(store, root.children[i], items);
    root.pivots[i] = std::max(root.pivots[i], pair.k_max);
    root.total += 1;
    write_btree_root(store, slot.child, root);
    return r;
  }
  if (root.children.size() >= kBTreeMaxChildren) {
    r.full = true;
    return r;
  }
  insert_sorted(items, pair);
  const std::size_t half = items.size() / 2;
  std::vector<KeyBlock> upper(items.begin() + static_cast<std::ptrdiff_t>(half), items.end());
  items.resize(half);
  const BlockId right = store.allocate();
  write_btree_child(store, root.children[i], items);
  write_btree_child(store, right, upper);
  root.pivots[i] = items.back().k_max;
  root.pivots.insert(root.pivots.begin() + static_cast<std::ptrdiff_t>(i + 1), upper.back().k_max);
  root.children.insert(root.children.begin() + static_cast<std::ptrdiff_t>(i + 1), right);
  root.total += 1;
  write_btree_root(store, slot.child, root);
  r.child_split = true;
  return r;
}

std::optional<KeyBlock> structure_search(BlockStore& store, const InnerSlot& slot, Key key,
                                         const InnerFormat& fmt) {
  if (slot.tag == SlotTag::kNodePacked) {
    const PackedArray arr = read_packed(store, slot.child);
    auto it = lower(arr.items, key);
    if (it == arr.items.end()) return std::nullopt;
    return *it;
  }
  if (slot.tag == SlotTag::kNodeBTree) {
    const BTreeRoot root = read_btree_root(store, slot.child);
    for (std::size_t i = 0; i < root.pivots.size(); ++i) {
      if (root.pivots[i] < key) continue;
      const auto items = read_btree_child(store, root.children[i], fmt);
      auto it = lower(items, key);
      if (it != items.end()) return *it;
      // Stale pivot; the successor is the next child's first pair.
    }
    return std::nullopt;
  }
  throw Error("structure_search on a non-structure slot");
}

std::optional<KeyBlock> structure_find(BlockStore& store, const InnerSlot& slot, Key key,
                                       const InnerFormat& fmt) {
  auto r = structure_search(store, slot, key, fmt);
  if (r && r->k_max == key) return r;
  return std::nullopt;
}

KeyBlock structure_min(BlockStore& store, const InnerSlot& slot, const InnerFormat& fmt) {
  if (slot.tag == SlotTag::kNodePacked) {
    const PackedArray arr = read_packed(store, slot.child);
    if (arr.items.empty()) throw CorruptionError("empty packed array");
    return arr.items.front();
  }
  const BTreeRoot root = read_btree_root(store, slot.child);
  const auto items = read_btree_child(store, root.children.front(), fmt);
  if (items.empty()) throw CorruptionError("empty two-layer tree child");
  return items.front();
}

std::vector<KeyBlock> structure_items(BlockStore& store, const InnerSlot& slot, const InnerFormat& fmt) {
  if (slot.tag == SlotTag::kNodePacked) return read_packed(store, slot.child).items;
  std::vector<KeyBlock> out;
  const BTreeRoot root = read_btree_root(store, slot.child);
  for (BlockId c : root.children) {
    auto items = read_btree_child(store, c, fmt);
    out.insert(out.end(), items.begin(), items.end());
  }
  return out;
}

std::vector<BlockId> structure_blocks(BlockStore& store, const InnerSlot& slot) {
  if (slot.tag == SlotTag::kNodePacked) return {slot.child};
  std::vector<BlockId> out{slot.child};
  const BTreeRoot root = read_btree_root(store, slot.child);
  out.insert(out.end(), root.children.begin(), root.children.end());
  return out;
}

bool structure_set_block(BlockStore& store, const InnerSlot& slot, Key key, BlockId block,
                         const InnerFormat& fmt) {
  if (slot.tag == SlotTag::kNodePacked) {
    PackedArray arr = read_packed(store, slot.child);
    auto it = std::lower_bound(arr.items.begin(), arr.items.end(), key, by_key);
    if (it == arr.items.end() || it->k_max != key) return false;
    it->block = block;
    write_packed(store, slot.child, arr);
    return true;
  }
  const BTreeRoot root = read_btree_root(store, slot.child);
  for (std::size_t i = 0; i < root.pivots.size(); ++i) {
    if (root.pivots[i] < key) continue;
    auto items = read_btree_child(store, root.children[i], fmt);
    auto it = std::lower_bound(items.begin(), items.end(), key, by_key);
    if (it == items.end() || it->k_max != key) return false;
    it->block = block;
    write_btree_child(store, root.children[i], items);
    return true;
  }
  return false;
}

StructureErase structure_erase(BlockStore& store, const InnerSlot& slot, Key key,
                               const InnerFormat& fmt) {
  StructureErase r;
  r.slot = slot;
  if (slot.tag == SlotTag::kNodePacked) {
    PackedArray arr = read_packed(store, slot.child);
    auto it = std::lower_bound(arr.items.begin(), arr.items.end(), key, by_key);
    if (it == arr.items.end() || it->k_max != key) return r;
    arr.items.erase(it);
    r.removed = true;
    if (arr.items.size() == 1) {
      store.free(slot.child);
      r.slot = InnerSlot::data(arr.items.front());
    } else {
      write_packed(store, slot.child, arr);
    }
    return r;
  }
  BTreeRoot root = read_btree_root(store, slot.child);
  for (std::size_t i = 0; i < root.pivots.size(); ++i) {
    if (root.pivots[i] < key) continue;
    auto items = read_btree_child(store, root.children[i], fmt);
    auto it = std::lower_bound(items.begin(), items.end(), key, by_key);
    if (it == items.end() || it->k_max != key) return r;
    items.erase(it);
    r.removed = true;
    root.total -= 1;
    if (root.total == 1) {
      // Collapse: the survivor is in this child or in the only other one.
      KeyBlock last;
      if (!items.empty()) {
        last = items.front();
      } else {
        for (std::size_t c = 0; c < root.children.size(); ++c) {
          if (c == i) continue;
          auto other = read_btree_child(store, root.children[c], fmt);
          if (!other.empty()) last = other.front();
        }
      }
      for (BlockId c : root.children) store.free(c);
      store.free(slot.child);
      r.slot = InnerSlot::data(last);
      return r;
    }
    if (items.empty()) {
      store.free(root.children[i]);
      root.children.erase(root.children.begin() + static_cast<std::ptrdiff_t>(i));
      root.pivots.erase(root.pivots.begin() + static_cast<std::ptrdiff_t>(i));
    } else {
      write_btree_child(store, root.children[i], items);
      root.pivots[i] = items.back().k_max;
    }
    write_btree_root(store, slot.child, root);
    return r;
  }
  return r;
}

// ---------------------------------------------------------------------------

void hist_add(DepthHist& into, const DepthHist& from, std::size_t shift) {
  for (std::size_t d = 1; d < from.size(); ++d) {
    if (from[d] == 0) continue;
    if (into.size() <= d + shift) into.resize(d + shift + 1, 0);
    into[d + shift] += from[d];
  }
}

std::uint64_t hist_at_least(const DepthHist& h, std::size_t depth) {
  std::uint64_t n = 0;
  for (std::size_t d = std::max<std::size_t>(depth, 1); d < h.size(); ++d) n += h[d];
  return n;
}

std::size_t hist_max_depth(const DepthHist& h) {
  for (std::size_t d = h.size(); d-- > 1;) {
    if (h[d] != 0) return d;
  }
  return 0;
}

MixedBuild mixed_create(BlockStore& store, std::span<const KeyBlock> entries,
                        const InnerFormat& fmt, const BuildOptions& opts) {
  if (entries.empty()) throw Error("mixed_create needs at least one entry");
  std::vector<Key> keys(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) keys[i] = entries[i].k_max;
  const LinearModel model = build_model(keys, slots_for(entries.size()));
  return mixed_create_with_model(store, entries, model, fmt, opts);
}

MixedBuild mixed_create_with_model(BlockStore& store, std::span<const KeyBlock> entries,
                                   const LinearModel& model, const InnerFormat& fmt,
                                   const BuildOptions& opts) {
  for (std::size_t i = 1; i < entries.size(); ++i) {
    if (entries[i].k_max <= entries[i - 1].k_max) throw Error("mixed_create entries must be sorted and distinct");
  }
  MixedBuild out;
  out.model = model;
  out.mixed_nodes = 1;
  out.depth_hist.assign(2, 0);
  const std::uint32_t n_slots = model.num_slots;
  const std::size_t nblocks = fmt.mixed_blocks(n_slots);
  out.root = store.allocate_run(nblocks);

  std::vector<InnerSlot> slots(n_slots);
  // Group boundaries: entries [starts[g], starts[g+1]) share slot slot_of[g].
  std::vector<std::size_t> starts;
  std::vector<std::uint32_t> slot_of;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const std::uint32_t s = model.predict(entries[i].k_max);
    if (slot_of.empty() || slot_of.back() != s) {
      starts.push_back(i);
      slot_of.push_back(s);
    }
  }
  starts.push_back(entries.size());

  for (std::size_t g = 0; g < slot_of.size(); ++g) {
    const std::span<const KeyBlock> group = entries.subspan(starts[g], starts[g + 1] - starts[g]);
    InnerSlot& slot = slots[slot_of[g]];
    const std::size_t c = group.size();
    if (c == 1) {
      slot = InnerSlot::data(group.front());
      out.depth_hist[1] += 1;
    } else if (!fmt.lippb && c <= kPackedMaxItems) {
      PackedArray arr{packed_class_for(c), {group.begin(), group.end()}};
      const BlockId id = store.allocate();
      write_packed(store, id, arr);
      slot = InnerSlot::packed(id, arr.size_class);
      out.depth_hist[1] += c;
      out.packed_arrays += 1;
    } else if (!fmt.lippb && c <= fmt.btree_max_items()) {
      slot = InnerSlot::btree(btree2_build(store, group, fmt));
      out.depth_hist[1] += c;
      out.btrees += 1;
    } else {
      BuildOptions child_opts;
      child_opts.fulfill = opts.fulfill;
      if (opts.fulfill) {
        child_opts.successor = g + 1 < slot_of.size() ? std::optional<KeyBlock>(entries[starts[g + 1]])
                                                      : opts.successor;
      }
      MixedBuild child = mixed_create(store, group, fmt, child_opts);
      slot = InnerSlot::mixed(child.root, child.model);
      hist_add(out.depth_hist, child.depth_hist, 1);
      out.mixed_nodes += child.mixed_nodes;
      out.packed_arrays += child.packed_arrays;
      out.btrees += child.btrees;
    }
  }

  if (opts.fulfill) {
    std::optional<KeyBlock> next = opts.successor;
    std::size_t g = slot_of.size();
    for (std::uint32_t j = n_slots; j-- > 0;) {
      if (g > 0 && slot_of[g - 1] == j) {
        --g;
        next = entries[starts[g]];
      } else if (next) {
        slots[j] = InnerSlot::copy(*next);
      }
    }
  }

  MixedHeader header;
  header.num_slots = n_slots;
  header.size = header.init_size = entries.size();
  header.l3_item = hist_at_least(out.depth_hist, 3);

  const std::uint32_t bs = fmt.block_size;
  Block buf(bs, 0);
  for (std::size_t b = 0; b < nblocks; ++b) {
    std::fill(buf.begin(), buf.end(), 0);
    if (b == 0) encode_mixed_header(header, buf);
    const std::size_t begin_byte = std::max(b * bs, kMixedHeaderBytes);
    const std::size_t end_byte = std::min((b + 1) * bs, kMixedHeaderBytes + n_slots * kSlotBytes);
    for (std::size_t byte = begin_byte; byte < end_byte; byte += kSlotBytes) {
      encode_slot(slots[(byte - kMixedHeaderBytes) / kSlotBytes], buf, byte - b * bs);
    }
    store.write(out.root + b, buf);
  }
  return out;
}

namespace {

void scan_into(BlockStore& store, BlockId node, std::uint32_t num_slots, const InnerFormat& fmt,
               std::size_t depth, std::size_t fetch_base, SubtreeScan& out) {
  const std::uint32_t bs = fmt.block_size;
  const std::size_t nblocks = fmt.mixed_blocks(num_slots);
  out.counts.mixed_nodes += 1;
  out.counts.mixed_blocks += nblocks;
  if (out.depth_hist.size() <= depth) out.depth_hist.resize(depth + 1, 0);
  for (std::size_t b = 0; b < nblocks; ++b) {
    out.blocks.push_back(node + b);
    const Block buf = store.read(node + b);
    const std::size_t begin_byte = std::max(b * bs, kMixedHeaderBytes);
    const std::size_t end_byte = std::min<std::size_t>((b + 1) * bs, kMixedHeaderBytes + std::size_t{num_slots} * kSlotBytes);
    for (std::size_t byte = begin_byte; byte < end_byte; byte += kSlotBytes) {
      const InnerSlot s = decode_slot(buf, byte - b * bs);
      switch (s.tag) {
        case SlotTag::kNull:
          out.counts.null_slots += 1;
          break;
        case SlotTag::kDataCopy:
          out.counts.copy_slots += 1;
          break;
        case SlotTag::kData:
          out.counts.data_slots += 1;
          out.items.push_back(s.pair);
          out.depths.push_back(static_cast<std::uint8_t>(depth));
          out.fetches.push_back(static_cast<std::uint8_t>(fetch_base + 1));
          out.depth_hist[depth] += 1;
          break;
        case SlotTag::kNodePacked:
        case SlotTag::kNodeBTree: {
          const auto items = structure_items(store, s, fmt);
          const auto blocks = structure_blocks(store, s);
          out.blocks.insert(out.blocks.end(), blocks.begin(), blocks.end());
          if (s.tag == SlotTag::kNodePacked) {
            out.counts.packed[s.size_class] += 1;
          } else {
            out.counts.btrees += 1;
            out.counts.btree_blocks += blocks.size();
          }
          for (const auto& kb : items) {
            out.items.push_back(kb);
            out.depths.push_back(static_cast<std::uint8_t>(depth));
            out.fetches.push_back(static_cast<std::uint8_t>(fetch_base + 1 + structure_read_cost(s)));
          }
          out.depth_hist[depth] += items.size();
          break;
        }
        case SlotTag::kNodeMixed:
          scan_into(store, s.child, s.model.num_slots, fmt, depth + 1, fetch_base + 1, out);
          break;
      }
    }
  }
}

}  // namespace

SubtreeScan scan_subtree(BlockStore& store, BlockId node, std::uint32_t num_slots,
                         const InnerFormat& fmt) {
  SubtreeScan out;
  out.depth_hist.assign(2, 0);
  scan_into(store, node, num_slots, fmt, 1, 0, out);
  return out;
}

std::vector<KeyBlock> collect_items(BlockStore& store, BlockId node, const LinearModel& model,
                                    const InnerFormat& fmt) {
  return scan_subtree(store, node, model.num_slots, fmt).items;
}

namespace {

// Returns the subtree's depth histogram; appends problems to `err`.
DepthHist audit_into(BlockStore& store, BlockId node, std::uint32_t num_slots,
                     const InnerFormat& fmt, std::string& err) {
  DepthHist hist(2, 0);
  const std::uint32_t bs = fmt.block_size;
  const std::size_t nblocks = fmt.mixed_blocks(num_slots);
  MixedHeader header;
  for (std::size_t b = 0; b < nblocks; ++b) {
    const Block buf = store.read(node + b);
    if (b == 0) header = decode_mixed_header(buf);
    const std::size_t begin_byte = std::max(b * bs, kMixedHeaderBytes);
    const std::size_t end_byte = std::min<std::size_t>((b + 1) * bs, kMixedHeaderBytes + std::size_t{num_slots} * kSlotBytes);
    for (std::size_t byte = begin_byte; byte < end_byte; byte += kSlotBytes) {
      const InnerSlot s = decode_slot(buf, byte - b * bs);
      if (s.tag == SlotTag::kData) {
        hist[1] += 1;
      } else if (s.is_structure()) {
        hist[1] += structure_items(store, s, fmt).size();
      } else if (s.tag == SlotTag::kNodeMixed) {
        hist_add(hist, audit_into(store, s.child, s.model.num_slots, fmt, err), 1);
      }
    }
  }
  std::uint64_t total = 0;
  for (auto v : hist) total += v;
  if (header.num_slots != num_slots) {
    err += "node " + std::to_string(node) + ": num_slots mismatch; ";
  }
  if (header.size != total) {
    err += "node " + std::to_string(node) + ": size " + std::to_string(header.size) + " != " +
           std::to_string(total) + "; ";
  }
  if (header.l3_item != hist_at_least(hist, 3)) {
    err += "node " + std::to_string(node) + ": l3_item " + std::to_string(header.l3_item) + " != " +
           std::to_string(hist_at_least(hist, 3)) + "; ";
  }
  return hist;
}

}  // namespace

std::string audit_stats(BlockStore& store, BlockId node, std::uint32_t num_slots,
                        const InnerFormat& fmt) {
  std::string err;
  audit_into(store, node, num_slots, fmt, err);
  return err;
}

std::vector<MixedHeader> stats_update(BlockStore& store, std::span<const StatsDelta> deltas) {
  std::vector<MixedHeader> out;
  out.reserve(deltas.size());
  for (const auto& d : deltas) {
    Block b = store.read(d.node);
    MixedHeader h = decode_mixed_header(b);
    if (d.size != 0 || d.l3_item != 0) {
      h.size = static_cast<std::uint64_t>(static_cast<std::int64_t>(h.size) + d.size);
      h.l3_item = static_cast<std::uint64_t>(static_cast<std::int64_t>(h.l3_item) + d.l3_item);
      encode_mixed_header(h, b);
      store.write(d.node, b);
    }
    out.push_back(h);
  }
  return out;
}

void free_subtree(BlockStore& store, BlockId node, std::uint32_t num_slots, const InnerFormat& fmt) {
  for (BlockId b : scan_subtree(store, node, num_slots, fmt).blocks) store.free(b);
}

std::size_t InnerFormat::slots_in_block(std::size_t block_offset) const {
  const std::size_t begin = std::max(block_offset * block_size, kMixedHeaderBytes);
  const std::size_t end = (block_offset + 1) * block_size;
  return (end - begin) / kSlotBytes;
}

}  // namespace aulid
