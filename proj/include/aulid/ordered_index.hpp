#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "aulid/block_store.hpp"
#include "aulid/types.hpp"

namespace aulid {

/// Accumulated wall time per operation phase, in nanoseconds.
struct PhaseTimes {
  std::uint64_t search = 0;        // locating the leaf
  std::uint64_t leaf = 0;          // leaf insert / split / delete
  std::uint64_t inner_search = 0;  // finding the inner entry slot
  std::uint64_t inner_create = 0;  // new packed arrays, trees, mixed nodes
  std::uint64_t inner_insert = 0;  // writing the entry into a slot or structure
  std::uint64_t inner_adjust = 0;  // rebuild checks and rebuilds
  std::uint64_t inner_update = 0;  // mixed-node statistics

  std::uint64_t total() const {
    return search + leaf + inner_search + inner_create + inner_insert + inner_adjust + inner_update;
  }
};

/// Adds the lifetime of the timer to one PhaseTimes field.
class PhaseTimer {
 public:
  explicit PhaseTimer(std::uint64_t& slot) : slot_(slot), start_(std::chrono::steady_clock::now()) {}
  ~PhaseTimer() {
    slot_ += static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::nanoseconds>(
                                            std::chrono::steady_clock::now() - start_)
                                            .count());
  }
  PhaseTimer(const PhaseTimer&) = delete;
  PhaseTimer& operator=(const PhaseTimer&) = delete;

 private:
  std::uint64_t& slot_;
  std::chrono::steady_clock::time_point start_;
};

/// Structural modification counters, persisted with the index.
struct SmoCounters {
  std::uint64_t leaf_splits = 0;
  std::uint64_t leaf_merges = 0;
  std::uint64_t leaf_borrows = 0;
  std::uint64_t packed_created = 0;
  std::uint64_t packed_grown = 0;
  std::uint64_t btree_created = 0;
  std::uint64_t btree_child_splits = 0;
  std::uint64_t mixed_created = 0;  // by inserts and rebuilds, not bulkload
  std::uint64_t rebuilds = 0;
  std::uint64_t collapses = 0;      // structures reduced to a DATA slot
  std::uint64_t inner_splits = 0;   // baseline B+-tree inner nodes
  std::uint64_t inner_merges = 0;

  static constexpr std::size_t kFields = 12;
  std::uint64_t* begin() { return &leaf_splits; }
  const std::uint64_t* begin() const { return &leaf_splits; }
  friend bool operator==(const SmoCounters&, const SmoCounters&) = default;
};
const char* smo_field_name(std::size_t i);

/// Operations shared by the learned index and the baseline tree.
class OrderedIndex {
 public:
  virtual ~OrderedIndex() = default;

  /// Payload of the first pair with this key.
  virtual std::optional<Payload> lookup(Key k) = 0;
  /// Pairs with u <= key <= v, ascending.
  virtual std::vector<KeyPayload> scan(Key u, Key v) = 0;
  /// Up to n pairs starting at the first key >= u.
  virtual std::vector<KeyPayload> scan_count(Key u, std::size_t n) = 0;
  virtual void insert(Key k, Payload p) = 0;
  /// Removes one pair with this key.
  virtual bool erase(Key k) = 0;
  /// Rewrites the payload of the first pair with this key.
  virtual bool update(Key k, Payload p) = 0;
  bool update_key(Key old_key, Key new_key, Payload p) {
    if (!erase(old_key)) return false;
    insert(new_key, p);
    return true;
  }

  /// Every pair in key order, by walking the leaf chain.
  virtual std::vector<KeyPayload> all_pairs() = 0;
  /// Empty when the structure is consistent, else a description of the fault.
  virtual std::string check() = 0;

  virtual void flush() = 0;
  virtual std::string kind() const = 0;
  virtual BlockStore& store() = 0;
  virtual const SmoCounters& smo() const = 0;
  PhaseTimes& phases() { return phases_; }
  void reset_phases() { phases_ = {}; }

 protected:
  PhaseTimes phases_;
};

/// First byte of the block-0 metadata names the index kind.
inline constexpr std::uint8_t kKindAulid = 'A';
inline constexpr std::uint8_t kKindBTree = 'B';

}  // namespace aulid
