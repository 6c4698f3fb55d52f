#include "aulid/leaf_node.hpp"

#include <algorithm>
#include <string>

#include "aulid/endian.hpp"

namespace aulid {

void encode_leaf(const LeafNode& leaf, std::span<std::uint8_t> out) {
  if (kLeafHeaderBytes + leaf.pairs.size() * 16 > out.size()) throw Error("leaf overflows its block");
  std::fill(out.begin(), out.end(), 0);
  le::put_u16(out, 0, static_cast<std::uint16_t>(leaf.pairs.size()));
  out[2] = leaf.indexed ? 1 : 0;
  le::put_u64(out, 8, leaf.prev);
  le::put_u64(out, 16, leaf.next);
  le::put_u64(out, 24, leaf.fence);
  std::size_t off = kLeafHeaderBytes;
  for (const auto& kp : leaf.pairs) {
    le::put_u64(out, off, kp.key);
    le::put_u64(out, off + 8, kp.payload);
    off += 16;
  }
}

LeafNode decode_leaf(std::span<const std::uint8_t> in, std::size_t capacity) {
  LeafNode leaf;
  const std::size_t count = le::get_u16(in, 0);
  if (count > capacity) throw CorruptionError("leaf count " + std::to_string(count) + " exceeds capacity");
  leaf.indexed = (in[2] & 1) != 0;
  leaf.prev = le::get_u64(in, 8);
  leaf.next = le::get_u64(in, 16);
  leaf.fence = le::get_u64(in, 24);
  leaf.pairs.resize(count);
  std::size_t off = kLeafHeaderBytes;
  for (auto& kp : leaf.pairs) {
    kp.key = le::get_u64(in, off);
    kp.payload = le::get_u64(in, off + 8);
    off += 16;
  }
  return leaf;
}

LeafNode read_leaf(BlockStore& store, BlockId id, std::size_t capacity) {
  return decode_leaf(store.read(id), capacity);
}

void write_leaf(BlockStore& store, BlockId id, const LeafNode& leaf) {
  Block b(store.block_size());
  encode_leaf(leaf, b);
  store.write(id, b);
}

LeafPos leaf_search(const LeafNode& leaf, Key key) {
  auto it = std::lower_bound(leaf.pairs.begin(), leaf.pairs.end(), key,
                             [](const KeyPayload& kp, Key k) { return kp.key < k; });
  LeafPos r;
  r.pos = static_cast<std::size_t>(it - leaf.pairs.begin());
  r.found = it != leaf.pairs.end() && it->key == key;
  return r;
}

namespace {

std::vector<KeyPayload>::iterator upper_pos(std::vector<KeyPayload>& v, Key key) {
  return std::upper_bound(v.begin(), v.end(), key,
                          [](Key k, const KeyPayload& kp) { return k < kp.key; });
}

}  // namespace

bool leaf_insert(LeafNode& leaf, KeyPayload kp, std::size_t capacity) {
  if (leaf.pairs.size() >= capacity) return false;
  leaf.pairs.insert(upper_pos(leaf.pairs, kp.key), kp);
  return true;
}

LeafNode split_off_left(LeafNode& original, KeyPayload pending) {
  std::vector<KeyPayload> merged = std::move(original.pairs);
  merged.insert(upper_pos(merged, pending.key), pending);
  const std::size_t left_n = merged.size() / 2;  // floor((T+1)/2) for a full leaf
  LeafNode left;
  left.pairs.assign(merged.begin(), merged.begin() + static_cast<std::ptrdiff_t>(left_n));
  original.pairs.assign(merged.begin() + static_cast<std::ptrdiff_t>(left_n), merged.end());
  left.prev = original.prev;
  return left;
}

LeafSplit leaf_split(BlockStore& store, BlockId original_id, LeafNode& original,
                     KeyPayload pending, std::size_t capacity) {
  if (original.count() < capacity) throw Error("leaf_split on a non-full leaf");
  LeafSplit s;
  s.left_id = store.allocate();
  s.left = split_off_left(original, pending);
  s.left.next = original_id;
  s.left_max = s.left.max_key();
  if (original.prev != kNoBlock) {
    LeafNode before = read_leaf(store, original.prev, capacity);
    before.next = s.left_id;
    write_leaf(store, original.prev, before);
  }
  original.prev = s.left_id;
  return s;
}

LeafDelete leaf_delete(LeafNode& leaf, Key key, std::size_t capacity) {
  LeafDelete r;
  const LeafPos p = leaf_search(leaf, key);
  if (!p.found) return r;
  leaf.pairs.erase(leaf.pairs.begin() + static_cast<std::ptrdiff_t>(p.pos));
  r.removed = true;
  r.underflow = leaf.count() < leaf_min_fill(capacity);
  return r;
}

std::size_t leaf_scan_from(BlockStore& store, const LeafNode& start, std::size_t pos,
                           const ScanLimit& limit, std::size_t capacity,
                           std::vector<KeyPayload>& out) {
  std::size_t emitted = 0;
  const LeafNode* cur = &start;
  LeafNode holder;
  std::size_t hops = 0;
  while (emitted < limit.max_count) {
    if (pos >= cur->count()) {
      if (cur->next == kNoBlock) break;
      if (++hops > store.watermark()) throw CorruptionError("sibling chain loops");
      const BlockId next = cur->next;
      if (!store.is_allocated(next)) throw CorruptionError("broken sibling chain");
      holder = read_leaf(store, next, capacity);
      cur = &holder;
      pos = 0;
      continue;
    }
    const KeyPayload& kp = cur->pairs[pos];
    if (kp.key > limit.max_key) break;
    out.push_back(kp);
    ++emitted;
    ++pos;
  }
  return emitted;
}

}  // namespace aulid
