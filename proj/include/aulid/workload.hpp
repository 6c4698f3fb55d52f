#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "aulid/aulid_index.hpp"
#include "aulid/btree_index.hpp"
#include "aulid/ordered_index.hpp"

namespace aulid {

// ---------------------------------------------------------------------------
// Datasets

enum class DatasetKind { kUniform, kLognormal, kClusteredHotspot, kAdversarialConflict };

struct DatasetSpec {
  DatasetKind kind = DatasetKind::kUniform;
  std::size_t n = 0;
  std::uint64_t seed = 1;
  // clustered-hotspot
  std::size_t hotspots = 16;
  double hotspot_fraction = 0.7;
  // adversarial-conflict: nested clusters, each level `cluster_fanout`
  // sub-clusters in a range `cluster_shrink` times narrower.
  std::size_t cluster_levels = 4;
  std::size_t cluster_fanout = 4;
  double cluster_shrink = 100.0;
  double background_fraction = 0.2;
};

const char* dataset_name(DatasetKind k);
std::optional<DatasetKind> parse_dataset_kind(const std::string& s);

/// Sorted, distinct keys. Deterministic per spec.
std::vector<Key> gen_dataset(const DatasetSpec& spec);
inline Payload payload_for(Key k) { return k + 1; }
std::vector<KeyPayload> with_payloads(const std::vector<Key>& keys);

/// Little-endian array of 8-byte keys.
void write_dataset(const std::filesystem::path& path, const std::vector<Key>& keys);
std::vector<Key> read_dataset(const std::filesystem::path& path);

/// Conflict degree of the model build_model fits to these keys.
std::uint32_t dataset_conflict_degree(const std::vector<Key>& sorted_keys);

/// Insert stream that mostly appends ascending keys inside the widest gap of
/// `existing` (fraction `sequential`), the rest uniform; keys are fresh.
std::vector<Key> gen_skewed_inserts(const std::vector<Key>& existing, std::size_t n, double sequential,
                                    std::uint64_t seed);

// ---------------------------------------------------------------------------
// Index kinds

enum class IndexKind { kAulid, kBTree, kAulidLippb };
const char* index_name(IndexKind k);
std::optional<IndexKind> parse_index_kind(const std::string& s);

struct IndexOptions {
  IndexKind kind = IndexKind::kAulid;
  AulidConfig aulid;  // lippb forced on for kAulidLippb
  double leaf_fill = 1.0;
  std::uint32_t block_size = BlockStore::kDefaultBlockSize;
};

std::unique_ptr<OrderedIndex> build_index(const std::filesystem::path& path, const std::vector<KeyPayload>& pairs,
                                          const IndexOptions& opts);
/// Opens an index file of either kind.
std::unique_ptr<OrderedIndex> open_index(const std::filesystem::path& path);

/// Block size from AULID_BLOCK_SIZE, else 4096.
std::uint32_t block_size_from_env();

// ---------------------------------------------------------------------------
// Workloads

enum class WorkloadKind { kW1, kW2, kW3, kW4, kW5, kW6 };
const char* workload_name(WorkloadKind k);
std::optional<WorkloadKind> parse_workload_kind(const std::string& s);
/// Lookup (or scan) share of the operations: 1, 1, 0, 0.9, 0.5, 0.1.
double read_ratio(WorkloadKind k);

struct WorkloadSpec {
  WorkloadKind kind = WorkloadKind::kW1;
  std::size_t op_count = 20000;
  double init_fraction = 0.5;  // W3-W6: share of the dataset bulkloaded
  std::size_t scan_len = 100;
  std::uint64_t seed = 1;
  // Composition of the write share; the default is insert-only.
  double delete_share = 0.0;
  double update_share = 0.0;
};

enum class OpType : std::uint8_t { kLookup, kScan, kInsert, kDelete, kUpdate };
const char* op_name(OpType t);

struct Op {
  OpType type = OpType::kLookup;
  Key key = 0;
  Payload payload = 0;
};

/// Sorted multiset mirroring every applied mutation.
class Oracle {
 public:
  Oracle() = default;
  explicit Oracle(const std::vector<KeyPayload>& sorted);
  std::optional<Payload> get(Key k) const;
  bool contains_pair(Key k, Payload p) const;
  std::vector<KeyPayload> range(Key u, Key v) const;
  std::vector<KeyPayload> range_count(Key u, std::size_t n) const;
  void insert(Key k, Payload p);
  bool erase(Key k);
  bool update(Key k, Payload p);
  std::size_t size() const { return map_.size(); }
  const std::multimap<Key, Payload>& map() const { return map_; }

 private:
  std::multimap<Key, Payload> map_;
};

struct LatencySummary {
  double mean_ns = 0, p50_ns = 0, p99_ns = 0, stddev_ns = 0;
};

struct Metrics {
  std::string index;
  std::string workload;
  std::size_t ops = 0;
  std::map<std::string, std::size_t> op_counts;
  double seconds = 0;
  double throughput = 0;
  double blocks_read_per_op = 0;
  double blocks_written_per_op = 0;
  double blocks_read_per_lookup = 0;
  std::uint64_t blocks_read = 0;
  std::uint64_t blocks_written = 0;
  std::uint64_t per_op_reads_sum = 0;  // reconciles with blocks_read
  LatencySummary latency;
  PhaseTimes phases;
  SmoCounters smo_delta;
  std::uint64_t file_size = 0;
  std::size_t mismatches = 0;
  std::vector<std::string> mismatch_samples;
  std::uint64_t initial_keys = 0;
};

struct RunOptions {
  IndexOptions index;
  std::filesystem::path file;
  bool verify = false;
  bool keep_ops = false;
};

struct RunResult {
  Metrics metrics;
  std::vector<Op> ops;  // when keep_ops
};

/// Builds the starting index (whole dataset for W1/W2, a sampled share for
/// W3-W6 with the rest as insert stream), then executes the workload.
RunResult run_workload(const std::vector<Key>& dataset, const WorkloadSpec& spec, const RunOptions& opts);

/// Executes a workload against an already open index. `live` are the keys it
/// holds (samples for reads, deletes, updates); `stream` supplies inserts.
RunResult run_on_index(OrderedIndex& index, std::vector<Key> live, std::vector<Key> stream,
                       const WorkloadSpec& spec, Oracle* oracle, bool keep_ops);

// ---------------------------------------------------------------------------
// Read-optimization ablation

enum class AblationOpt { kNone, kScanFward, kFulfill, kBoth };
const char* ablation_name(AblationOpt o);
std::optional<AblationOpt> parse_ablation(const std::string& s);

struct AblationResult {
  AblationOpt opt = AblationOpt::kNone;
  std::size_t lookups = 0;
  std::uint64_t extra_blocks = 0;       // sum of (actual - ideal) over lookups that exceed ideal
  std::uint64_t lookups_with_extra = 0;
  std::uint64_t null_crossings = 0;     // forward scans leaving a block from a NULL slot
  std::uint64_t scanfward_hits = 0;
  std::uint64_t below_fallbacks = 0;
  std::uint64_t actual_reads = 0;
  std::uint64_t ideal_reads = 0;
  std::size_t mismatches = 0;
};

/// Bulkloads `dataset` with the chosen read optimizations into `file` and
/// runs `lookups` W1 lookups, comparing block reads with the ideal path.
AblationResult ablation_extra_blocks(const std::vector<Key>& dataset, AblationOpt opt, std::size_t lookups,
                                     std::uint64_t seed, const std::filesystem::path& file,
                                     std::uint32_t block_size = BlockStore::kDefaultBlockSize);

}  // namespace aulid
