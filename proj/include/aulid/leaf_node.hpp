#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "aulid/block_store.hpp"
#include "aulid/types.hpp"

namespace aulid {

/// Bytes reserved at the start of every leaf block.
inline constexpr std::size_t kLeafHeaderBytes = 32;

/// Pairs per leaf for a block size: 254 at 4 KiB.
inline std::size_t leaf_capacity(std::uint32_t block_size) {
  return (block_size - kLeafHeaderBytes) / 16;
}

/// B+-tree styled leaf: sorted (key, payload) pairs with sibling links.
///
/// `indexed` marks leaves that own an inner-node entry; `fence` is the key of
/// that entry, an upper bound on the keys the leaf may hold. Leaves without
/// an entry only ever hold copies of a duplicated key and are skipped when a
/// lookup walks siblings looking for the next indexed leaf.
struct LeafNode {
  std::vector<KeyPayload> pairs;
  BlockId prev = kNoBlock;
  BlockId next = kNoBlock;
  bool indexed = false;
  Key fence = 0;

  std::size_t count() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
  Key min_key() const { return pairs.front().key; }
  Key max_key() const { return pairs.back().key; }
};

void encode_leaf(const LeafNode& leaf, std::span<std::uint8_t> out);
LeafNode decode_leaf(std::span<const std::uint8_t> in, std::size_t capacity);
LeafNode read_leaf(BlockStore& store, BlockId id, std::size_t capacity);
void write_leaf(BlockStore& store, BlockId id, const LeafNode& leaf);

struct LeafPos {
  std::size_t pos = 0;
  bool found = false;
};

/// First position with key >= `key`; ties resolve to the first occurrence.
LeafPos leaf_search(const LeafNode& leaf, Key key);

/// Inserts after existing equal keys. Returns false (leaf untouched) when full.
bool leaf_insert(LeafNode& leaf, KeyPayload kp, std::size_t capacity);

struct LeafSplit {
  BlockId left_id = kNoBlock;
  LeafNode left;
  Key left_max = 0;
};

/// Splits a full leaf together with `pending`. A new LEFT leaf receives the
/// floor((T+1)/2) smallest items; the original block keeps the rest, so the
/// original's maximum (and its inner entry) stays put. Links are stitched
/// in memory and in the old left neighbour on disk; the caller writes both
/// halves.
LeafSplit leaf_split(BlockStore& store, BlockId original_id, LeafNode& original,
                     KeyPayload pending, std::size_t capacity);

/// In-memory half of leaf_split, exposed for tests.
LeafNode split_off_left(LeafNode& original, KeyPayload pending);

/// Underflow threshold used by delete: ceil(T / 4).
inline std::size_t leaf_min_fill(std::size_t capacity) { return (capacity + 3) / 4; }

struct LeafDelete {
  bool removed = false;
  bool underflow = false;
};

/// Removes the first pair whose key matches.
LeafDelete leaf_delete(LeafNode& leaf, Key key, std::size_t capacity);

struct ScanLimit {
  Key max_key = std::numeric_limits<Key>::max();
  std::size_t max_count = std::numeric_limits<std::size_t>::max();
};

/// Emits pairs from `pos` of an already loaded leaf onward, following next
/// links, until a key exceeds `max_key` or `max_count` pairs were emitted.
/// Each further leaf costs one block read.
std::size_t leaf_scan_from(BlockStore& store, const LeafNode& start, std::size_t pos,
                           const ScanLimit& limit, std::size_t capacity,
                           std::vector<KeyPayload>& out);

}  // namespace aulid
