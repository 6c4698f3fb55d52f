#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "aulid/block_store.hpp"
#include "aulid/leaf_node.hpp"
#include "aulid/ordered_index.hpp"

namespace aulid {

/// Inner node of the baseline tree: (pivot, child) records where each pivot
/// bounds the keys of its child from above.
struct BTreeInner {
  std::vector<Key> pivots;
  std::vector<BlockId> children;
  std::size_t count() const { return children.size(); }
};

/// Children per inner node: 255 at 4 KiB (one record holds the count).
inline std::size_t btree_fanout(std::uint32_t block_size) { return block_size / 16 - 1; }

BTreeInner read_btree_inner(BlockStore& store, BlockId id, std::size_t fanout);
void write_btree_inner(BlockStore& store, BlockId id, const BTreeInner& node);

/// Disk B+-tree over the same leaf format. Every level costs one block read;
/// nothing is cached.
class BTreeIndex final : public OrderedIndex {
 public:
  static std::unique_ptr<BTreeIndex> bulkload(const std::filesystem::path& path,
                                              std::span<const KeyPayload> pairs, double leaf_fill = 1.0,
                                              std::uint32_t block_size = BlockStore::kDefaultBlockSize);
  static std::unique_ptr<BTreeIndex> open(const std::filesystem::path& path);
  ~BTreeIndex() override;

  std::optional<Payload> lookup(Key k) override;
  std::vector<KeyPayload> scan(Key u, Key v) override;
  std::vector<KeyPayload> scan_count(Key u, std::size_t n) override;
  void insert(Key k, Payload p) override;
  bool erase(Key k) override;
  bool update(Key k, Payload p) override;
  void flush() override;
  std::string kind() const override { return "btree"; }
  BlockStore& store() override { return store_; }
  const SmoCounters& smo() const override { return smo_; }

  /// Levels including the leaf level.
  std::size_t height() const { return height_; }
  std::size_t leaf_capacity() const { return cap_; }
  std::size_t fanout() const { return fanout_; }
  std::uint64_t leaf_count();
  std::string check() override;
  std::vector<KeyPayload> all_pairs() override;

 private:
  explicit BTreeIndex(BlockStore store);

  struct Step {
    BlockId node = kNoBlock;
    BTreeInner inner;
    std::size_t idx = 0;  // child followed
  };
  struct Found {
    std::vector<Step> path;
    BlockId leaf_id = kNoBlock;
    LeafNode leaf;
  };
  Found descend(Key k);
  BlockId leftmost_leaf();
  void rebalance_leaf(Found& f);
  void rebalance_inner(std::vector<Step>& path, std::size_t level);
  std::size_t check_node(BlockId id, std::size_t level, Key lo, bool has_lo, Key hi, bool has_hi, std::string& err);

  void save_meta();
  void load_meta();

  BlockStore store_;
  std::size_t cap_ = 0;
  std::size_t fanout_ = 0;
  BlockId root_ = kNoBlock;
  std::size_t height_ = 1;
  SmoCounters smo_;
};

}  // namespace aulid
