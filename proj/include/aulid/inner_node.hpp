#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aulid/block_store.hpp"
#include "aulid/model.hpp"
#include "aulid/types.hpp"

namespace aulid {

enum class SlotTag : std::uint8_t {
  kNull = 0,
  kData = 1,
  kDataCopy = 2,  // read-optimization copy of the next entry (Fulfill)
  kNodeMixed = 3,
  kNodePacked = 4,
  kNodeBTree = 5,
};

inline constexpr std::size_t kSlotBytes = 32;
inline constexpr std::size_t kMixedHeaderBytes = 32;
inline constexpr std::size_t kPackedMaxClass = 4;
inline constexpr std::size_t kPackedMaxItems = 64;
inline constexpr std::size_t kBTreeMaxChildren = 4;

inline constexpr std::size_t packed_capacity(std::size_t size_class) {
  return std::size_t{1} << (size_class + 2);
}
/// Smallest packed class (1..4) holding `n` items.
std::uint8_t packed_class_for(std::size_t n);

/// One fixed-width slot of a mixed node.
///
/// Layout: tag u8, size class u8, reserved u16, num_slots u32, then three
/// 64-bit words. DATA/COPY: (k_max, block, 0). NODE_MIXED: (slope,
/// intercept, child). NODE_PACKED / NODE_BTREE: (0, 0, child).
struct InnerSlot {
  SlotTag tag = SlotTag::kNull;
  std::uint8_t size_class = 0;
  KeyBlock pair;
  LinearModel model;
  BlockId child = kNoBlock;

  static InnerSlot null() { return {}; }
  static InnerSlot data(KeyBlock kb) { return {SlotTag::kData, 0, kb, {}, kNoBlock}; }
  static InnerSlot copy(KeyBlock kb) { return {SlotTag::kDataCopy, 0, kb, {}, kNoBlock}; }
  static InnerSlot mixed(BlockId child, LinearModel m) { return {SlotTag::kNodeMixed, 0, {}, m, child}; }
  static InnerSlot packed(BlockId child, std::uint8_t cls) { return {SlotTag::kNodePacked, cls, {}, {}, child}; }
  static InnerSlot btree(BlockId child) { return {SlotTag::kNodeBTree, 0, {}, {}, child}; }

  bool is_null() const { return tag == SlotTag::kNull; }
  bool holds_pair() const { return tag == SlotTag::kData || tag == SlotTag::kDataCopy; }
  bool is_structure() const { return tag == SlotTag::kNodePacked || tag == SlotTag::kNodeBTree; }
};

void encode_slot(const InnerSlot& s, std::span<std::uint8_t> out, std::size_t off);
InnerSlot decode_slot(std::span<const std::uint8_t> in, std::size_t off);

/// Block-size dependent limits of the inner structures.
struct InnerFormat {
  std::uint32_t block_size = BlockStore::kDefaultBlockSize;
  bool lippb = false;  // every conflict becomes a mixed node

  /// Pairs per two-layer B+-tree child: 255 at 4 KiB (one record is the count).
  std::size_t btree_child_capacity() const { return block_size / 16 - 1; }
  /// 1020 at 4 KiB.
  std::size_t btree_max_items() const { return kBTreeMaxChildren * btree_child_capacity(); }
  std::size_t mixed_blocks(std::uint32_t num_slots) const {
    return (kMixedHeaderBytes + std::size_t{num_slots} * kSlotBytes + block_size - 1) / block_size;
  }
  std::size_t slots_in_block(std::size_t block_offset) const;
};

struct SlotAddress {
  std::size_t block_offset = 0;  // blocks past the node's first block
  std::size_t byte_offset = 0;   // within that block
};
SlotAddress slot_address(std::uint32_t slot, std::uint32_t block_size);

// ---------------------------------------------------------------------------
// Mixed node header (first 32 bytes of the node's first block).

struct MixedHeader {
  std::uint32_t num_slots = 0;
  std::uint64_t size = 0;       // live pairs in the inner subtree
  std::uint64_t init_size = 0;  // size at creation or last rebuild
  std::uint64_t l3_item = 0;    // pairs at mixed-depth >= 3 below this node
};
void encode_mixed_header(const MixedHeader& h, std::span<std::uint8_t> out);
MixedHeader decode_mixed_header(std::span<const std::uint8_t> in);
MixedHeader read_mixed_header(BlockStore& store, BlockId node);

/// One slot together with the block that holds it, so callers can scan
/// neighbouring slots or rewrite the block without another read.
struct FetchedSlot {
  InnerSlot slot;
  BlockId block_id = kNoBlock;
  Block block;
  std::uint32_t first_slot = 0;  // slot range covered by `block`
  std::uint32_t end_slot = 0;    // exclusive
};

/// Reads exactly the block holding slot j of the node at `node`.
FetchedSlot slot_fetch(BlockStore& store, BlockId node, std::uint32_t num_slots, std::uint32_t j);
/// Decodes slot j out of an already fetched block.
InnerSlot slot_in(const FetchedSlot& f, std::uint32_t j);
/// Rewrites slot j inside `f.block` and writes the block back.
void slot_store(BlockStore& store, FetchedSlot& f, std::uint32_t j, const InnerSlot& s);

// ---------------------------------------------------------------------------
// Packed arrays: one block, header record (count, class) then capacity pairs.

struct PackedArray {
  std::uint8_t size_class = 1;
  std::vector<KeyBlock> items;  // sorted by k_max
};
PackedArray read_packed(BlockStore& store, BlockId id);
void write_packed(BlockStore& store, BlockId id, const PackedArray& arr);

// ---------------------------------------------------------------------------
// Two-layer B+-tree: a root block of (pivot, child) records where each pivot
// is the largest key of its child, and up to four child blocks of pairs.

struct BTreeRoot {
  std::uint64_t total = 0;
  std::vector<Key> pivots;
  std::vector<BlockId> children;
};
BTreeRoot read_btree_root(BlockStore& store, BlockId id);
void write_btree_root(BlockStore& store, BlockId id, const BTreeRoot& root);
std::vector<KeyBlock> read_btree_child(BlockStore& store, BlockId id, const InnerFormat& fmt);
void write_btree_child(BlockStore& store, BlockId id, const std::vector<KeyBlock>& items);

/// Builds a two-layer tree over sorted items spread evenly over
/// ceil(n / child capacity) children. Returns the root block.
BlockId btree2_build(BlockStore& store, std::span<const KeyBlock> items, const InnerFormat& fmt);

/// Child index that receives `key` on insert: first pivot >= key, else last.
std::size_t btree2_route(const BTreeRoot& root, Key key);

// ---------------------------------------------------------------------------
// Node-local operations.

/// Result of adding a pair to a structure slot: the slot content the parent
/// must hold afterwards.
struct StructureInsert {
  InnerSlot slot;
  bool grew_class = false;       // packed class i -> i+1
  bool became_btree = false;     // packed class 4 -> two-layer tree
  bool full = false;             // two-layer tree cannot take the pair
  bool child_split = false;      // two-layer tree split a child
};

/// Inserts into a packed array (already loaded as `arr`). When full, moves
/// to the next class or to a two-layer tree and frees the old block.
StructureInsert packed_insert(BlockStore& store, const InnerSlot& slot, PackedArray& arr,
                              KeyBlock pair, const InnerFormat& fmt);
StructureInsert packed_insert(BlockStore& store, const InnerSlot& slot, KeyBlock pair,
                              const InnerFormat& fmt);

/// Two-layer tree insert. Signals `full` when a fifth child would be needed.
StructureInsert btree2_insert(BlockStore& store, const InnerSlot& slot, KeyBlock pair,
                              const InnerFormat& fmt);

/// Smallest contained pair with k_max >= key, if any.
std::optional<KeyBlock> structure_search(BlockStore& store, const InnerSlot& slot, Key key,
                                         const InnerFormat& fmt);
/// Exact k_max lookup.
std::optional<KeyBlock> structure_find(BlockStore& store, const InnerSlot& slot, Key key,
                                       const InnerFormat& fmt);
/// Leftmost pair of a non-empty structure.
KeyBlock structure_min(BlockStore& store, const InnerSlot& slot, const InnerFormat& fmt);
/// All pairs of a structure, sorted.
std::vector<KeyBlock> structure_items(BlockStore& store, const InnerSlot& slot, const InnerFormat& fmt);
/// Blocks owned by a structure.
std::vector<BlockId> structure_blocks(BlockStore& store, const InnerSlot& slot);
/// Rewrites the block address stored for `key`. Returns false if absent.
bool structure_set_block(BlockStore& store, const InnerSlot& slot, Key key, BlockId block,
                         const InnerFormat& fmt);

struct StructureErase {
  bool removed = false;
  InnerSlot slot;  // DATA when a single pair remains
};
StructureErase structure_erase(BlockStore& store, const InnerSlot& slot, Key key,
                               const InnerFormat& fmt);

/// Block reads a structure search costs (packed 1, two-layer tree 2).
inline std::size_t structure_read_cost(const InnerSlot& s) {
  return s.tag == SlotTag::kNodePacked ? 1 : s.tag == SlotTag::kNodeBTree ? 2 : 0;
}

// ---------------------------------------------------------------------------
// Mixed nodes.

/// depth_hist[d] = pairs at mixed-depth d relative to a node (index 0 unused).
using DepthHist = std::vector<std::uint64_t>;
void hist_add(DepthHist& into, const DepthHist& from, std::size_t shift);
std::uint64_t hist_at_least(const DepthHist& h, std::size_t depth);
std::size_t hist_max_depth(const DepthHist& h);

struct MixedBuild {
  BlockId root = kNoBlock;
  LinearModel model;
  DepthHist depth_hist;
  std::uint64_t mixed_nodes = 0;
  std::uint64_t packed_arrays = 0;
  std::uint64_t btrees = 0;
};

struct BuildOptions {
  /// Fill NULL slots with copies of the next entry, `successor` being the
  /// entry that follows the whole subtree.
  bool fulfill = false;
  std::optional<KeyBlock> successor;
};

/// Builds a mixed node over sorted entries with distinct k_max using
/// slots_for(n) slots. Per slot with c entries: 0 NULL, 1 DATA, 2..64 packed
/// array, 65..btree_max two-layer tree, more: nested mixed node.
MixedBuild mixed_create(BlockStore& store, std::span<const KeyBlock> entries,
                        const InnerFormat& fmt, const BuildOptions& opts = {});

/// Lower level variant with a caller-chosen model, used by tests to force
/// every entry into a few slots.
MixedBuild mixed_create_with_model(BlockStore& store, std::span<const KeyBlock> entries,
                                   const LinearModel& model, const InnerFormat& fmt,
                                   const BuildOptions& opts = {});

struct SubtreeCounts {
  std::uint64_t mixed_nodes = 0;
  std::uint64_t mixed_blocks = 0;
  std::array<std::uint64_t, kPackedMaxClass + 1> packed{};  // by class
  std::uint64_t btrees = 0;
  std::uint64_t btree_blocks = 0;
  std::uint64_t data_slots = 0;
  std::uint64_t copy_slots = 0;
  std::uint64_t null_slots = 0;
};

/// Everything under one mixed node, read with a full traversal.
struct SubtreeScan {
  std::vector<KeyBlock> items;         // in-order, DATA_COPY excluded
  std::vector<std::uint8_t> depths;    // mixed-depth per item (1 = own slots)
  std::vector<std::uint8_t> fetches;   // block reads to reach the item from this node
  std::vector<BlockId> blocks;         // every block owned by the subtree
  SubtreeCounts counts;
  DepthHist depth_hist;
};

SubtreeScan scan_subtree(BlockStore& store, BlockId node, std::uint32_t num_slots,
                         const InnerFormat& fmt);

/// In-order inner items of a subtree.
std::vector<KeyBlock> collect_items(BlockStore& store, BlockId node, const LinearModel& model,
                                    const InnerFormat& fmt);

/// Checks size/l3_item of every mixed node in the subtree against a recount.
/// Returns an empty string when consistent, else a description.
std::string audit_stats(BlockStore& store, BlockId node, std::uint32_t num_slots,
                        const InnerFormat& fmt);

/// Applies per-node deltas to the header of each node (one read and one
/// write per node whose stats change).
struct StatsDelta {
  BlockId node = kNoBlock;
  std::int64_t size = 0;
  std::int64_t l3_item = 0;
};
std::vector<MixedHeader> stats_update(BlockStore& store, std::span<const StatsDelta> deltas);

/// Frees every block of a mixed-node subtree.
void free_subtree(BlockStore& store, BlockId node, std::uint32_t num_slots, const InnerFormat& fmt);

}  // namespace aulid
