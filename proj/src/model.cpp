#include "aulid/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "aulid/endian.hpp"

namespace aulid {

std::uint32_t LinearModel::predict(Key key) const {
  const double v = slope * static_cast<double>(key) + intercept;
  if (!(v >= 0.0)) return 0;  // also catches NaN
  const double last = static_cast<double>(num_slots - 1);
  if (v >= last) return num_slots - 1;
  return static_cast<std::uint32_t>(v);
}

void encode_model(const LinearModel& m, std::span<std::uint8_t> out, std::size_t off) {
  le::put_f64(out, off, m.slope);
  le::put_f64(out, off + 8, m.intercept);
  le::put_u32(out, off + 16, m.num_slots);
}

LinearModel decode_model(std::span<const std::uint8_t> in, std::size_t off) {
  LinearModel m{le::get_f64(in, off), le::get_f64(in, off + 8), le::get_u32(in, off + 16)};
  if (!(m.slope > 0.0) || m.num_slots == 0) throw CorruptionError("invalid serialized model");
  return m;
}

std::uint32_t conflict_degree(const LinearModel& m, std::span<const Key> keys) {
  // predict is monotone, so equal slots form contiguous runs over sorted keys.
  std::uint32_t best = 0;
  std::uint32_t run = 0;
  std::uint32_t prev = 0;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const std::uint32_t s = m.predict(keys[i]);
    run = (i > 0 && s == prev) ? run + 1 : 1;
    prev = s;
    best = std::max(best, run);
  }
  return best;
}

LinearModel interpolation_model(std::span<const Key> keys, std::uint32_t num_slots) {
  LinearModel m;
  m.num_slots = num_slots;
  const Key lo = keys.front();
  const Key hi = keys.back();
  if (hi == lo) {
    m.slope = 1.0;
  } else {
    const double range = static_cast<double>(hi - lo);
    m.slope = num_slots > 1 ? static_cast<double>(num_slots - 1) / range : 1.0 / range;
  }
  m.intercept = -(m.slope * static_cast<double>(lo));
  return m;
}

namespace {

Key min_gap(std::span<const Key> keys, std::size_t d) {
  Key g = std::numeric_limits<Key>::max();
  for (std::size_t i = 0; i + d < keys.size(); ++i) g = std::min(g, keys[i + d] - keys[i]);
  return g;
}

// range <= (num_slots - 1) * gap, evaluated without overflow.
bool feasible(Key range, Key gap, std::uint32_t num_slots) {
  const long double cap = static_cast<long double>(num_slots - 1) * static_cast<long double>(gap);
  return static_cast<long double>(range) <= cap;
}

}  // namespace

LinearModel build_model(std::span<const Key> keys, std::uint32_t num_slots) {
  if (keys.empty()) throw Error("build_model needs at least one key");
  if (num_slots == 0) throw Error("build_model needs at least one slot");
  for (std::size_t i = 1; i < keys.size(); ++i) {
    if (keys[i] <= keys[i - 1]) throw Error("build_model keys must be sorted and distinct");
  }
  if (keys.size() == 1) {
    LinearModel m;
    m.num_slots = num_slots;
    m.slope = 1.0;
    m.intercept = -static_cast<double>(keys[0]);
    return m;
  }

  const LinearModel interp = interpolation_model(keys, num_slots);
  if (num_slots == 1) return interp;

  const Key range = keys.back() - keys.front();
  const std::size_t n = keys.size();
  // Doubling sweep for the first feasible power of two, then a binary search
  // between it and the last infeasible one (feasibility is monotone in D).
  std::size_t lo = 0;  // last known infeasible D (0 = none)
  std::size_t hi = 0;  // first known feasible D
  for (std::size_t d = 1; d < n; d *= 2) {
    if (feasible(range, min_gap(keys, d), num_slots)) {
      hi = d;
      break;
    }
    lo = d;
  }
  if (hi == 0) {
    // D >= n: every key may share a slot; nothing beats interpolation here.
    if (!feasible(range, range, num_slots)) return interp;
    hi = n - 1;
  }
  while (hi - lo > 1) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (feasible(range, min_gap(keys, mid), num_slots)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }

  LinearModel m;
  m.num_slots = num_slots;
  m.slope = 1.0 / static_cast<double>(min_gap(keys, hi));
  m.intercept = -(m.slope * static_cast<double>(keys.front()));
  if (!(m.slope > 0.0)) return interp;
  return conflict_degree(interp, keys) < conflict_degree(m, keys) ? interp : m;
}

}  // namespace aulid
