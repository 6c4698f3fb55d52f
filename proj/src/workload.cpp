#include "aulid/workload.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <random>
#include <unordered_map>
#include <unordered_set>

#include "aulid/endian.hpp"

namespace aulid {
namespace {

constexpr Key kKeyRange = Key{1} << 48;

void sort_unique(std::vector<Key>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

// Draws from `draw` until `n` distinct keys exist.
template <typename F>
std::vector<Key> distinct(std::size_t n, F&& draw) {
  std::vector<Key> keys;
  keys.reserve(n + n / 8);
  std::size_t rounds = 0;
  while (keys.size() < n) {
    const std::size_t missing = n - keys.size();
    for (std::size_t i = 0; i < missing + missing / 16 + 1; ++i) keys.push_back(draw());
    sort_unique(keys);
    if (++rounds > 1000) throw Error("dataset generator cannot produce enough distinct keys");
  }
  // Drop a deterministic subset of the surplus.
  while (keys.size() > n) keys.erase(keys.begin() + static_cast<std::ptrdiff_t>((keys.size() * 7919) % keys.size()));
  return keys;
}

void nested_clusters(std::mt19937_64& rng, Key lo, Key width, std::size_t count, std::size_t level,
                     const DatasetSpec& spec, std::vector<Key>& out) {
  if (count == 0) return;
  if (level == 0 || width < 4 * count) {
    std::uniform_int_distribution<Key> d(lo, lo + width - 1);
    for (std::size_t i = 0; i < count; ++i) out.push_back(d(rng));
    return;
  }
  const Key sub = std::max<Key>(static_cast<Key>(static_cast<double>(width) / spec.cluster_shrink), 4 * count);
  const std::size_t f = std::max<std::size_t>(1, spec.cluster_fanout);
  std::vector<double> w(f);
  std::uniform_real_distribution<double> jitter(0.75, 1.25);
  for (auto& x : w) x = jitter(rng);
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  std::size_t given = 0;
  std::uniform_int_distribution<Key> start(lo, lo + (width > sub ? width - sub : 0));
  for (std::size_t i = 0; i < f; ++i) {
    const std::size_t c = i + 1 == f ? count - given
                                     : std::min(count - given, static_cast<std::size_t>(count * w[i] / total));
    given += c;
    nested_clusters(rng, start(rng), sub, c, level - 1, spec, out);
  }
}

}  // namespace

const char* dataset_name(DatasetKind k) {
  switch (k) {
    case DatasetKind::kUniform: return "uniform";
    case DatasetKind::kLognormal: return "lognormal";
    case DatasetKind::kClusteredHotspot: return "clustered-hotspot";
    case DatasetKind::kAdversarialConflict: return "adversarial-conflict";
  }
  return "?";
}

std::optional<DatasetKind> parse_dataset_kind(const std::string& s) {
  for (auto k : {DatasetKind::kUniform, DatasetKind::kLognormal, DatasetKind::kClusteredHotspot,
                 DatasetKind::kAdversarialConflict}) {
    if (s == dataset_name(k)) return k;
  }
  if (s == "clustered" || s == "hotspot") return DatasetKind::kClusteredHotspot;
  if (s == "adversarial") return DatasetKind::kAdversarialConflict;
  return std::nullopt;
}

std::vector<Key> gen_dataset(const DatasetSpec& spec) {
  if (spec.n == 0) throw Error("dataset size must be at least 1");
  std::mt19937_64 rng(spec.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(spec.kind));
  switch (spec.kind) {
    case DatasetKind::kUniform: {
      std::uniform_int_distribution<Key> d(0, kKeyRange - 1);
      return distinct(spec.n, [&] { return d(rng); });
    }
    case DatasetKind::kLognormal: {
      std::lognormal_distribution<double> d(0.0, 2.0);
      return distinct(spec.n, [&] { return static_cast<Key>(std::min(d(rng) * 1e9, 1.8e19)); });
    }
    case DatasetKind::kClusteredHotspot: {
      if (spec.hotspots == 0) throw Error("clustered-hotspot needs at least one hotspot");
      std::uniform_int_distribution<Key> u(0, kKeyRange - 1);
      std::vector<double> centers(spec.hotspots);
      for (auto& c : centers) c = static_cast<double>(u(rng));
      const double width = static_cast<double>(kKeyRange) / (static_cast<double>(spec.hotspots) * 1000.0);
      std::normal_distribution<double> spread(0.0, width);
      std::uniform_real_distribution<double> coin(0.0, 1.0);
      std::uniform_int_distribution<std::size_t> pick(0, spec.hotspots - 1);
      return distinct(spec.n, [&]() -> Key {
        if (coin(rng) >= spec.hotspot_fraction) return u(rng);
        const double x = centers[pick(rng)] + spread(rng);
        return static_cast<Key>(std::clamp(x, 0.0, static_cast<double>(kKeyRange - 1)));
      });
    }
    case DatasetKind::kAdversarialConflict: {
      if (spec.cluster_shrink <= 1.0) throw Error("cluster_shrink must exceed 1");
      std::vector<Key> keys;
      std::size_t rounds = 0;
      while (keys.size() < spec.n) {
        const std::size_t missing = spec.n - keys.size();
        const std::size_t bg = static_cast<std::size_t>(std::llround(static_cast<double>(missing) * spec.background_fraction));
        std::uniform_int_distribution<Key> u(0, kKeyRange - 1);
        for (std::size_t i = 0; i < bg; ++i) keys.push_back(u(rng));
        nested_clusters(rng, 0, kKeyRange, missing - bg + missing / 32 + 1, spec.cluster_levels, spec, keys);
        sort_unique(keys);
        if (++rounds > 100) throw Error("adversarial generator cannot produce enough distinct keys");
      }
      while (keys.size() > spec.n) keys.erase(keys.begin() + static_cast<std::ptrdiff_t>((keys.size() * 7919) % keys.size()));
      return keys;
    }
  }
  throw Error("unknown dataset kind");
}

std::vector<KeyPayload> with_payloads(const std::vector<Key>& keys) {
  std::vector<KeyPayload> out(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) out[i] = {keys[i], payload_for(keys[i])};
  return out;
}

void write_dataset(const std::filesystem::path& path, const std::vector<Key>& keys) {
  std::vector<std::uint8_t> buf(keys.size() * 8);
  for (std::size_t i = 0; i < keys.size(); ++i) le::put_u64(buf, i * 8, keys[i]);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!f) throw IoError("short write to " + path.string());
}

std::vector<Key> read_dataset(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path.string());
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (buf.size() % 8 != 0) throw CorruptionError(path.string() + " is not a whole number of 8-byte keys");
  std::vector<Key> keys(buf.size() / 8);
  for (std::size_t i = 0; i < keys.size(); ++i) keys[i] = le::get_u64(buf, i * 8);
  return keys;
}

std::uint32_t dataset_conflict_degree(const std::vector<Key>& sorted_keys) {
  std::vector<Key> keys = sorted_keys;
  sort_unique(keys);
  if (keys.empty()) return 0;
  const LinearModel m = build_model(keys, slots_for(keys.size()));
  return conflict_degree(m, keys);
}

std::vector<Key> gen_skewed_inserts(const std::vector<Key>& existing, std::size_t n, double sequential,
                                    std::uint64_t seed) {
  std::vector<Key> sorted = existing;
  sort_unique(sorted);
  Key gap_lo = 0;
  Key gap = sorted.empty() ? kKeyRange : sorted.front();
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i] - sorted[i - 1] > gap) {
      gap = sorted[i] - sorted[i - 1];
      gap_lo = sorted[i - 1];
    }
  }
  if (gap < n + 2) throw Error("no gap wide enough for the sequential run");
  std::unordered_set<Key> used(sorted.begin(), sorted.end());
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<Key> u(0, kKeyRange - 1);
  std::vector<Key> out;
  out.reserve(n);
  Key next = gap_lo + 1;
  while (out.size() < n) {
    if (coin(rng) < sequential) {
      out.push_back(next);
      used.insert(next);
      ++next;
    } else {
      Key k;
      do {
        k = u(rng);
      } while (used.count(k) != 0 || (k > gap_lo && k <= gap_lo + n + 1));
      used.insert(k);
      out.push_back(k);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

const char* index_name(IndexKind k) {
  switch (k) {
    case IndexKind::kAulid: return "aulid";
    case IndexKind::kBTree: return "btree";
    case IndexKind::kAulidLippb: return "aulid-lippb";
  }
  return "?";
}

std::optional<IndexKind> parse_index_kind(const std::string& s) {
  for (auto k : {IndexKind::kAulid, IndexKind::kBTree, IndexKind::kAulidLippb}) {
    if (s == index_name(k)) return k;
  }
  return std::nullopt;
}

std::unique_ptr<OrderedIndex> build_index(const std::filesystem::path& path, const std::vector<KeyPayload>& pairs,
                                          const IndexOptions& opts) {
  if (opts.kind == IndexKind::kBTree) return BTreeIndex::bulkload(path, pairs, opts.leaf_fill, opts.block_size);
  AulidConfig cfg = opts.aulid;
  cfg.leaf_fill = opts.leaf_fill;
  if (opts.kind == IndexKind::kAulidLippb) cfg.lippb = true;
  return AulidIndex::bulkload(path, pairs, cfg, opts.block_size);
}

std::unique_ptr<OrderedIndex> open_index(const std::filesystem::path& path) {
  std::uint8_t kind = 0;
  {
    BlockStore s = BlockStore::open(path, 0, OpenMode::kOpenExisting);
    if (!s.metadata().empty()) kind = s.metadata()[0];
  }
  if (kind == kKindAulid) return AulidIndex::open(path);
  if (kind == kKindBTree) return BTreeIndex::open(path);
  throw Error(path.string() + " holds no known index kind");
}

std::uint32_t block_size_from_env() {
  const char* v = std::getenv("AULID_BLOCK_SIZE");
  if (v == nullptr || *v == '\0') return BlockStore::kDefaultBlockSize;
  char* end = nullptr;
  const unsigned long bs = std::strtoul(v, &end, 10);
  if (end == v || *end != '\0' || bs < 512 || bs > (1u << 20) || (bs & (bs - 1)) != 0) {
    throw Error(std::string("AULID_BLOCK_SIZE must be a power of two in [512, 1 MiB], got ") + v);
  }
  return static_cast<std::uint32_t>(bs);
}

// ---------------------------------------------------------------------------

const char* workload_name(WorkloadKind k) {
  static const char* const names[] = {"w1", "w2", "w3", "w4", "w5", "w6"};
  return names[static_cast<int>(k)];
}

std::optional<WorkloadKind> parse_workload_kind(const std::string& s) {
  std::string t = s;
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (int i = 0; i < 6; ++i) {
    if (t == workload_name(static_cast<WorkloadKind>(i))) return static_cast<WorkloadKind>(i);
  }
  return std::nullopt;
}

double read_ratio(WorkloadKind k) {
  static const double r[] = {1.0, 1.0, 0.0, 0.9, 0.5, 0.1};
  return r[static_cast<int>(k)];
}

const char* op_name(OpType t) {
  static const char* const names[] = {"lookup", "scan", "insert", "delete", "update"};
  return names[static_cast<int>(t)];
}

Oracle::Oracle(const std::vector<KeyPayload>& sorted) {
  for (const auto& kp : sorted) map_.emplace_hint(map_.end(), kp.key, kp.payload);
}

std::optional<Payload> Oracle::get(Key k) const {
  auto it = map_.find(k);
  if (it == map_.end()) return std::nullopt;
  return it->second;
}

bool Oracle::contains_pair(Key k, Payload p) const {
  auto [b, e] = map_.equal_range(k);
  for (auto it = b; it != e; ++it) {
    if (it->second == p) return true;
  }
  return false;
}

std::vector<KeyPayload> Oracle::range(Key u, Key v) const {
  std::vector<KeyPayload> out;
  if (u > v) return out;
  for (auto it = map_.lower_bound(u); it != map_.end() && it->first <= v; ++it) out.push_back({it->first, it->second});
  return out;
}

std::vector<KeyPayload> Oracle::range_count(Key u, std::size_t n) const {
  std::vector<KeyPayload> out;
  for (auto it = map_.lower_bound(u); it != map_.end() && out.size() < n; ++it) out.push_back({it->first, it->second});
  return out;
}

void Oracle::insert(Key k, Payload p) { map_.emplace(k, p); }

bool Oracle::erase(Key k) {
  auto it = map_.find(k);
  if (it == map_.end()) return false;
  map_.erase(it);
  return true;
}

bool Oracle::update(Key k, Payload p) {
  auto it = map_.find(k);
  if (it == map_.end()) return false;
  it->second = p;
  return true;
}

// ---------------------------------------------------------------------------

namespace {

bool same_pairs(std::vector<KeyPayload> a, std::vector<KeyPayload> b) {
  auto lt = [](const KeyPayload& x, const KeyPayload& y) {
    return x.key != y.key ? x.key < y.key : x.payload < y.payload;
  };
  std::sort(a.begin(), a.end(), lt);
  std::sort(b.begin(), b.end(), lt);
  return a == b;
}

// Live keys with O(1) sampling and removal.
class KeyPool {
 public:
  explicit KeyPool(std::vector<Key> keys) : keys_(std::move(keys)) {
    pos_.reserve(keys_.size() * 2);
    for (std::size_t i = 0; i < keys_.size(); ++i) pos_.emplace(keys_[i], i);
  }
  bool empty() const { return keys_.empty(); }
  bool contains(Key k) const { return pos_.count(k) != 0; }
  Key sample(std::mt19937_64& rng) const {
    return keys_[std::uniform_int_distribution<std::size_t>(0, keys_.size() - 1)(rng)];
  }
  void add(Key k) {
    if (pos_.emplace(k, keys_.size()).second) keys_.push_back(k);
  }
  void remove(Key k) {
    auto it = pos_.find(k);
    if (it == pos_.end()) return;
    const std::size_t i = it->second;
    pos_.erase(it);
    if (i + 1 != keys_.size()) {
      keys_[i] = keys_.back();
      pos_[keys_[i]] = i;
    }
    keys_.pop_back();
  }

 private:
  std::vector<Key> keys_;
  std::unordered_map<Key, std::size_t> pos_;
};

double percentile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0;
  const std::size_t i = static_cast<std::size_t>(std::ceil(q * static_cast<double>(sorted.size()))) ;
  return sorted[std::min(sorted.size() - 1, i == 0 ? 0 : i - 1)];
}

}  // namespace

RunResult run_on_index(OrderedIndex& index, std::vector<Key> live_keys, std::vector<Key> stream,
                       const WorkloadSpec& spec, Oracle* oracle, bool keep_ops) {
  RunResult res;
  Metrics& m = res.metrics;
  m.index = index.kind();
  m.workload = workload_name(spec.kind);
  m.initial_keys = live_keys.size();
  std::mt19937_64 rng(spec.seed ^ 0xA5A5A5A5DEADBEEFULL);
  KeyPool live(std::move(live_keys));
  std::size_t stream_pos = 0;

  // Exactly round(ratio * n) reads, in random positions.
  const std::size_t n = spec.op_count;
  const std::size_t reads = static_cast<std::size_t>(std::llround(read_ratio(spec.kind) * static_cast<double>(n)));
  std::vector<std::uint8_t> is_read(n, 0);
  std::fill(is_read.begin(), is_read.begin() + static_cast<std::ptrdiff_t>(reads), 1);
  std::shuffle(is_read.begin(), is_read.end(), rng);

  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<Key> any_key(0, kKeyRange - 1);
  std::vector<double> lat(n);
  index.reset_phases();
  const SmoCounters smo_before = index.smo();
  index.store().reset_counters();
  std::uint64_t lookup_reads = 0;
  std::size_t lookups = 0;

  auto mismatch = [&](const std::string& what) {
    m.mismatches += 1;
    if (m.mismatch_samples.size() < 10) m.mismatch_samples.push_back(what);
  };

  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < n; ++i) {
    Op op;
    if (is_read[i]) {
      op.type = spec.kind == WorkloadKind::kW2 ? OpType::kScan : OpType::kLookup;
      op.key = live.empty() ? any_key(rng) : live.sample(rng);
    } else {
      const double w = coin(rng);
      if (w < spec.delete_share && !live.empty()) {
        op.type = OpType::kDelete;
        op.key = live.sample(rng);
      } else if (w < spec.delete_share + spec.update_share && !live.empty()) {
        op.type = OpType::kUpdate;
        op.key = live.sample(rng);
        op.payload = op.key + 2 + i;
      } else {
        op.type = OpType::kInsert;
        if (stream_pos < stream.size()) {
          op.key = stream[stream_pos++];
        } else {
          do {
            op.key = any_key(rng);
          } while (live.contains(op.key));
        }
        op.payload = payload_for(op.key);
      }
    }
    const IoStats before = index.store().counters();
    const auto s = std::chrono::steady_clock::now();
    std::optional<Payload> got;
    std::vector<KeyPayload> range;
    bool flag = false;
    switch (op.type) {
      case OpType::kLookup: got = index.lookup(op.key); break;
      case OpType::kScan: range = index.scan_count(op.key, spec.scan_len); break;
      case OpType::kInsert: index.insert(op.key, op.payload); break;
      case OpType::kDelete: flag = index.erase(op.key); break;
      case OpType::kUpdate: flag = index.update(op.key, op.payload); break;
    }
    lat[i] = static_cast<double>(
        std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - s).count());
    const std::uint64_t op_reads = index.store().counters().reads - before.reads;
    m.per_op_reads_sum += op_reads;
    if (op.type == OpType::kLookup) {
      lookup_reads += op_reads;
      ++lookups;
    }
    m.op_counts[op_name(op.type)] += 1;

    switch (op.type) {
      case OpType::kInsert: live.add(op.key); break;
      case OpType::kDelete: live.remove(op.key); break;
      default: break;
    }
    if (oracle != nullptr) {
      const std::string at = std::string(op_name(op.type)) + " #" + std::to_string(i) + " key " + std::to_string(op.key);
      switch (op.type) {
        case OpType::kLookup: {
          const auto want = oracle->get(op.key);
          if (got.has_value() != want.has_value() || (got && !oracle->contains_pair(op.key, *got))) mismatch(at);
          break;
        }
        case OpType::kScan:
          if (!same_pairs(range, oracle->range_count(op.key, spec.scan_len))) mismatch(at);
          break;
        case OpType::kInsert: oracle->insert(op.key, op.payload); break;
        case OpType::kDelete:
          if (flag != oracle->erase(op.key)) mismatch(at);
          break;
        case OpType::kUpdate:
          if (flag != oracle->update(op.key, op.payload)) mismatch(at);
          break;
      }
    }
    if (keep_ops) res.ops.push_back(op);
  }
  m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  m.ops = n;
  m.throughput = m.seconds > 0 ? static_cast<double>(n) / m.seconds : 0;
  const IoStats io = index.store().counters();
  m.blocks_read = io.reads;
  m.blocks_written = io.writes;
  m.blocks_read_per_op = n ? static_cast<double>(io.reads) / static_cast<double>(n) : 0;
  m.blocks_written_per_op = n ? static_cast<double>(io.writes) / static_cast<double>(n) : 0;
  m.blocks_read_per_lookup = lookups ? static_cast<double>(lookup_reads) / static_cast<double>(lookups) : 0;
  std::sort(lat.begin(), lat.end());
  if (!lat.empty()) {
    const double mean = std::accumulate(lat.begin(), lat.end(), 0.0) / static_cast<double>(lat.size());
    double var = 0;
    for (double x : lat) var += (x - mean) * (x - mean);
    m.latency = {mean, percentile(lat, 0.5), percentile(lat, 0.99), std::sqrt(var / static_cast<double>(lat.size()))};
  }
  m.phases = index.phases();
  const SmoCounters& after = index.smo();
  for (std::size_t i = 0; i < SmoCounters::kFields; ++i) m.smo_delta.begin()[i] = after.begin()[i] - smo_before.begin()[i];
  m.file_size = index.store().file_size_bytes();
  return res;
}

RunResult run_workload(const std::vector<Key>& dataset, const WorkloadSpec& spec, const RunOptions& opts) {
  std::vector<Key> initial;
  std::vector<Key> stream;
  if (spec.kind == WorkloadKind::kW1 || spec.kind == WorkloadKind::kW2) {
    initial = dataset;
  } else {
    if (!(spec.init_fraction > 0.0 && spec.init_fraction <= 1.0)) throw Error("init_fraction must be in (0, 1]");
    std::vector<Key> shuffled = dataset;
    std::mt19937_64 rng(spec.seed * 0x2545F4914F6CDD1DULL + 17);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const std::size_t m = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(spec.init_fraction * static_cast<double>(shuffled.size()))));
    initial.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(std::min(m, shuffled.size())));
    stream.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(initial.size()), shuffled.end());
  }
  std::sort(initial.begin(), initial.end());
  const std::vector<KeyPayload> pairs = with_payloads(initial);
  std::unique_ptr<OrderedIndex> index = build_index(opts.file, pairs, opts.index);
  std::optional<Oracle> oracle;
  if (opts.verify) oracle.emplace(pairs);
  RunResult r = run_on_index(*index, std::move(initial), std::move(stream), spec, oracle ? &*oracle : nullptr,
                             opts.keep_ops);
  index->flush();
  r.metrics.file_size = index->store().file_size_bytes();
  return r;
}

// ---------------------------------------------------------------------------

const char* ablation_name(AblationOpt o) {
  static const char* const names[] = {"none", "scanfward", "fulfill", "both"};
  return names[static_cast<int>(o)];
}

std::optional<AblationOpt> parse_ablation(const std::string& s) {
  for (int i = 0; i < 4; ++i) {
    if (s == ablation_name(static_cast<AblationOpt>(i))) return static_cast<AblationOpt>(i);
  }
  return std::nullopt;
}

AblationResult ablation_extra_blocks(const std::vector<Key>& dataset, AblationOpt opt, std::size_t lookups,
                                     std::uint64_t seed, const std::filesystem::path& file,
                                     std::uint32_t block_size) {
  AblationResult r;
  r.opt = opt;
  if (dataset.empty()) return r;
  AulidConfig cfg;
  cfg.scanfward = opt == AblationOpt::kScanFward || opt == AblationOpt::kBoth;
  cfg.fulfill = opt == AblationOpt::kFulfill || opt == AblationOpt::kBoth;
  auto idx = AulidIndex::bulkload(file, with_payloads(dataset), cfg, block_size);

  const SubtreeScan sc = idx->scan_inner();
  const std::optional<Key> inner_max = idx->inner_max();
  std::mt19937_64 rng(seed ^ 0x5DEECE66DULL);
  std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);
  idx->store().reset_counters();
  idx->reset_route_counters();
  for (std::size_t i = 0; i < lookups; ++i) {
    const Key k = dataset[pick(rng)];
    std::uint64_t ideal = 1;
    if (inner_max && k <= *inner_max) {
      auto it = std::lower_bound(sc.items.begin(), sc.items.end(), k,
                                 [](const KeyBlock& a, Key x) { return a.k_max < x; });
      ideal = sc.fetches[static_cast<std::size_t>(it - sc.items.begin())] + 1u;
    }
    const std::uint64_t before = idx->store().counters().reads;
    const auto got = idx->lookup(k);
    const std::uint64_t actual = idx->store().counters().reads - before;
    if (!got || *got != payload_for(k)) r.mismatches += 1;
    r.actual_reads += actual;
    r.ideal_reads += ideal;
    if (actual > ideal) {
      r.extra_blocks += actual - ideal;
      r.lookups_with_extra += 1;
    }
  }
  r.lookups = lookups;
  const RouteCounters& c = idx->route_counters();
  r.null_crossings = c.null_crossings;
  r.scanfward_hits = c.scanfward_hits;
  r.below_fallbacks = c.below;
  return r;
}

}  // namespace aulid
