#pragma once

#include <cstdint>
#include <span>

#include "aulid/types.hpp"

namespace aulid {

/// Monotonic linear map from keys to slot indices of a node.
struct LinearModel {
  double slope = 1.0;
  double intercept = 0.0;
  std::uint32_t num_slots = 1;

  /// clamp(floor(slope * key + intercept), 0, num_slots - 1)
  std::uint32_t predict(Key key) const;

  friend bool operator==(const LinearModel&, const LinearModel&) = default;
};

/// Serialized size: slope, intercept, num_slots.
inline constexpr std::size_t kModelBytes = 20;
void encode_model(const LinearModel& m, std::span<std::uint8_t> out, std::size_t off);
LinearModel decode_model(std::span<const std::uint8_t> in, std::size_t off);

/// Maximum number of keys that `m` maps to one slot.
std::uint32_t conflict_degree(const LinearModel& m, std::span<const Key> keys);

/// The min/max interpolation model: first key to slot 0, last to num_slots - 1.
LinearModel interpolation_model(std::span<const Key> keys, std::uint32_t num_slots);

/// Builds a low-conflict monotone model over sorted distinct keys.
///
/// Min-gap sweep: for a target degree D, any D+1 rank-consecutive keys span at
/// least min_gap(D) = min_i(keys[i+D] - keys[i]). With slope 1/min_gap(D) such
/// a window covers at least one whole slot, so no slot receives more than D
/// keys. The smallest D whose slope still fits all keys into num_slots is
/// used. The result never has a higher conflict degree than the
/// interpolation model.
LinearModel build_model(std::span<const Key> keys, std::uint32_t num_slots);

/// Slot budget used whenever a node is created for n entries.
inline std::uint32_t slots_for(std::size_t n) {
  const std::size_t s = n * 2;
  return static_cast<std::uint32_t>(s < 64 ? 64 : s);
}

}  // namespace aulid
