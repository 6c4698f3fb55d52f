#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aulid/block_store.hpp"
#include "aulid/inner_node.hpp"
#include "aulid/leaf_node.hpp"
#include "aulid/model.hpp"
#include "aulid/ordered_index.hpp"

namespace aulid {

struct AulidConfig {
  double alpha = 0.05;
  double beta = 1.2;
  bool scanfward = true;
  bool fulfill = false;
  bool lippb = false;  // every slot conflict becomes a nested mixed node
  double leaf_fill = 1.0;
  bool adjust = true;
};

/// Rebuild test of a mixed node: grown by beta since creation and at least
/// alpha of its pairs three or more mixed levels down.
bool adjust_eligible(const MixedHeader& h, const AulidConfig& cfg);

/// Per-lookup instrumentation, overwritten by every lookup-style descent.
struct LookupTrace {
  bool fast_path = false;
  bool scanfward_hit = false;   // successor found by the same-block scan
  bool below = false;           // fell back to the candidate leaf's sibling link
  std::size_t null_crossings = 0;  // blocks entered by a NULL-started forward scan
  std::size_t sibling_hops = 0;
};

/// Running totals of LookupTrace fields (not persisted).
struct RouteCounters {
  std::uint64_t fast_path = 0;
  std::uint64_t scanfward_hits = 0;
  std::uint64_t below = 0;
  std::uint64_t null_crossings = 0;
  std::uint64_t sibling_hops = 0;
};

struct SplitEvent {
  BlockId original_id = kNoBlock;
  BlockId left_id = kNoBlock;
  std::vector<KeyPayload> before;  // original leaf content before the split
  KeyPayload pending;
  std::vector<KeyPayload> left;
  std::vector<KeyPayload> original_after;
  Key left_max = 0;
  bool left_indexed = false;
};

struct RebuildEvent {
  std::size_t level = 0;  // 0 = root
  bool forced = false;
  bool declined = false;  // the new build was deeper, old subtree kept
  std::vector<KeyBlock> before;
  std::vector<KeyBlock> after;
  std::size_t old_max_depth = 0;
  std::size_t new_max_depth = 0;
};

struct InspectReport {
  std::uint64_t leaves = 0;
  std::uint64_t pairs = 0;
  std::uint64_t indexed_leaves = 0;
  SubtreeCounts inner;
  std::uint64_t inner_items = 0;
  double avg_depth = 0.0;   // mixed-depth of inner entries
  std::size_t max_depth = 0;
  std::map<std::size_t, std::uint64_t> depth_hist;
  std::map<std::size_t, std::uint64_t> fetch_hist;  // block reads root -> leaf
  std::uint64_t file_size = 0;
  std::uint64_t blocks_in_use = 0;
  SmoCounters smo;
};

class AulidIndex final : public OrderedIndex {
 public:
  static constexpr std::uint32_t kMinBlockSize = 2048;

  /// Creates `path` and bulkloads sorted pairs into it.
  static std::unique_ptr<AulidIndex> bulkload(const std::filesystem::path& path,
                                              std::span<const KeyPayload> pairs,
                                              const AulidConfig& cfg = {},
                                              std::uint32_t block_size = BlockStore::kDefaultBlockSize);
  static std::unique_ptr<AulidIndex> open(const std::filesystem::path& path);
  ~AulidIndex() override;

  std::optional<Payload> lookup(Key k) override;
  std::vector<KeyPayload> scan(Key u, Key v) override;
  std::vector<KeyPayload> scan_count(Key u, std::size_t n) override;
  void insert(Key k, Payload p) override;
  bool erase(Key k) override;
  bool update(Key k, Payload p) override;
  void flush() override;
  std::string kind() const override { return cfg_.lippb ? "aulid-lippb" : "aulid"; }
  BlockStore& store() override { return store_; }
  const SmoCounters& smo() const override { return smo_; }

  const AulidConfig& config() const { return cfg_; }
  void set_scanfward(bool on) { cfg_.scanfward = on; }
  void set_adjust(bool on) { cfg_.adjust = on; }
  std::size_t leaf_capacity() const { return cap_; }
  bool has_inner() const { return root_ != kNoBlock; }
  BlockId root() const { return root_; }
  const LinearModel& root_model() const { return root_model_; }
  BlockId last_leaf() const { return last_leaf_; }
  bool fulfill_active() const { return fulfill_active_; }
  std::optional<Key> inner_max() const { return has_prev_ ? std::optional<Key>(prev_max_) : std::nullopt; }

  const LookupTrace& last_trace() const { return trace_; }
  const RouteCounters& route_counters() const { return routes_; }
  void reset_route_counters() { routes_ = {}; }

  void set_split_observer(std::function<void(const SplitEvent&)> f) { on_split_ = std::move(f); }
  void set_rebuild_observer(std::function<void(const RebuildEvent&)> f) { on_rebuild_ = std::move(f); }

  /// Rebuilds the mixed node at `level` on the descent path of `k` (clamped
  /// to the deepest node on that path). Returns false without an inner tree.
  bool force_rebuild(Key k, std::size_t level);

  /// Inner entries in key order (full traversal).
  std::vector<KeyBlock> inner_items();
  /// Full inner traversal with depths and per-item block fetches.
  SubtreeScan scan_inner();
  InspectReport inspect();
  /// Structural self-check; returns "" when every invariant holds.
  std::string check() override;
  /// Every pair in key order, walking the sibling chain from the first leaf.
  std::vector<KeyPayload> all_pairs() override;

 private:
  AulidIndex(BlockStore store, const AulidConfig& cfg);

  struct PathNode {
    BlockId node = kNoBlock;
    std::uint32_t num_slots = 0;
    std::uint32_t slot = 0;  // slot followed or reached in this node
  };
  struct Descent {
    std::vector<PathNode> path;
    FetchedSlot fetched;  // terminal slot's block in the deepest node
  };
  enum class Upsert { kInserted, kRepointed, kExisting };
  struct Route {
    KeyBlock entry;
    bool found = false;
    bool below = false;  // entry.k_max < key; successor is a later leaf
  };
  struct Located {
    BlockId id = kNoBlock;
    LeafNode leaf;
    std::size_t pos = 0;
  };

  // Lookup-side routing.
  std::optional<Route> route_node(BlockId node, const LinearModel& model, Key k);
  std::optional<KeyBlock> scan_forward(BlockId node, std::uint32_t num_slots, std::uint32_t from,
                                       const FetchedSlot* have, bool null_started);
  std::optional<KeyBlock> leftmost(BlockId node, std::uint32_t num_slots);
  BlockId route_leaf(Key k, LeafNode* loaded);
  Located locate(Key k);

  // Inner mutation.
  Descent find_entry(Key k);
  Upsert inner_upsert(KeyBlock kb, BlockId from);
  void inner_erase(Key k);
  void inner_repoint(Key k, BlockId from, BlockId to);
  void before_inner_mutation();
  void clear_copies(BlockId node, std::uint32_t num_slots);
  void apply_stats(const std::vector<PathNode>& path, const std::vector<std::int64_t>& size,
                   const std::vector<std::int64_t>& l3, bool run_adjust);
  void rebuild(const std::vector<PathNode>& path, std::size_t level, bool forced);

  // Leaf maintenance.
  LeafNode read_leaf_at(BlockId id) { return read_leaf(store_, id, cap_); }
  void write_leaf_at(BlockId id, const LeafNode& l) { write_leaf(store_, id, l); }
  void refresh_last(const LeafNode& last);
  void refresh_prev(BlockId prev_id, const LeafNode* prev);
  void rebalance(BlockId id, LeafNode& leaf);
  BlockId first_leaf();

  void save_meta();
  void load_meta();

  BlockStore store_;
  AulidConfig cfg_;
  InnerFormat fmt_;
  std::size_t cap_ = 0;

  // Metanode.
  BlockId root_ = kNoBlock;
  LinearModel root_model_;
  BlockId last_leaf_ = kNoBlock;
  Key last_min_ = 0;
  Key last_max_ = 0;
  bool last_empty_ = true;
  bool has_prev_ = false;  // an indexed leaf exists before the last leaf
  Key prev_max_ = 0;       // largest inner entry key
  bool fulfill_active_ = false;
  SmoCounters smo_;

  LookupTrace trace_;
  RouteCounters routes_;
  std::function<void(const SplitEvent&)> on_split_;
  std::function<void(const RebuildEvent&)> on_rebuild_;
};

}  // namespace aulid
