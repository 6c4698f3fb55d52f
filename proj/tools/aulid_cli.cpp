// aulid: dataset generation, bulkloading, workload runs, inspection and
// optimization ablation for the on-disk indexes.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <fmt/core.h>

#include "CLI11.hpp"
#include "aulid/aulid_index.hpp"
#include "aulid/btree_index.hpp"
#include "aulid/workload.hpp"
#include "json.hpp"

using nlohmann::ordered_json;
namespace fs = std::filesystem;
using namespace aulid;

namespace {

using Row = std::pair<std::string, std::string>;

void print_table(const std::string& title, const std::vector<Row>& rows) {
  std::size_t w = 0;
  for (const auto& r : rows) w = std::max(w, r.first.size());
  fmt::print("{}\n", title);
  for (const auto& r : rows) fmt::print("  {:<{}}  {:>14}\n", r.first, w, r.second);
}

std::string num(double v) { return fmt::format("{:.3f}", v); }
std::string num(std::uint64_t v) { return std::to_string(v); }

void emit(const ordered_json& j, const std::string& json_out) {
  if (json_out.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    std::ofstream f(json_out);
    if (!f) throw IoError("cannot write " + json_out);
    f << j.dump(2) << "\n";
  }
}

ordered_json smo_json(const SmoCounters& s) {
  ordered_json j;
  for (std::size_t i = 0; i < SmoCounters::kFields; ++i) j[smo_field_name(i)] = s.begin()[i];
  return j;
}

ordered_json phases_json(const PhaseTimes& p) {
  return {{"search_ns", p.search},           {"leaf_ns", p.leaf},
          {"inner_search_ns", p.inner_search}, {"inner_create_ns", p.inner_create},
          {"inner_insert_ns", p.inner_insert}, {"inner_adjust_ns", p.inner_adjust},
          {"inner_update_ns", p.inner_update}, {"total_ns", p.total()}};
}

ordered_json metrics_json(const Metrics& m) {
  ordered_json j;
  j["index"] = m.index;
  j["workload"] = m.workload;
  j["ops"] = m.ops;
  j["op_counts"] = m.op_counts;
  j["seconds"] = m.seconds;
  j["throughput_ops_per_s"] = m.throughput;
  j["blocks_read"] = m.blocks_read;
  j["blocks_written"] = m.blocks_written;
  j["blocks_read_per_op"] = m.blocks_read_per_op;
  j["blocks_written_per_op"] = m.blocks_written_per_op;
  j["blocks_read_per_lookup"] = m.blocks_read_per_lookup;
  j["latency_ns"] = {{"mean", m.latency.mean_ns},
                     {"p50", m.latency.p50_ns},
                     {"p99", m.latency.p99_ns},
                     {"stddev", m.latency.stddev_ns}};
  j["phases"] = phases_json(m.phases);
  j["smo_delta"] = smo_json(m.smo_delta);
  j["file_size"] = m.file_size;
  j["initial_keys"] = m.initial_keys;
  j["mismatches"] = m.mismatches;
  j["mismatch_samples"] = m.mismatch_samples;
  return j;
}

ordered_json inspect_aulid(AulidIndex& idx) {
  const InspectReport r = idx.inspect();
  ordered_json j;
  j["kind"] = "aulid";
  j["block_size"] = idx.store().block_size();
  j["leaf_capacity"] = idx.leaf_capacity();
  j["leaves"] = r.leaves;
  j["pairs"] = r.pairs;
  j["indexed_leaves"] = r.indexed_leaves;
  j["inner_items"] = r.inner_items;
  j["mixed_nodes"] = r.inner.mixed_nodes;
  j["mixed_blocks"] = r.inner.mixed_blocks;
  ordered_json packed;
  for (std::size_t c = 1; c < r.inner.packed.size(); ++c) packed[std::to_string(packed_capacity(c))] = r.inner.packed[c];
  j["packed_by_capacity"] = packed;
  j["btrees"] = r.inner.btrees;
  j["btree_blocks"] = r.inner.btree_blocks;
  j["data_slots"] = r.inner.data_slots;
  j["copy_slots"] = r.inner.copy_slots;
  j["null_slots"] = r.inner.null_slots;
  j["avg_depth"] = r.avg_depth;
  j["max_depth"] = r.max_depth;
  ordered_json dh, fh;
  for (auto [d, c] : r.depth_hist) dh[std::to_string(d)] = c;
  for (auto [d, c] : r.fetch_hist) fh[std::to_string(d)] = c;
  j["depth_hist"] = dh;
  j["fetch_hist"] = fh;
  j["file_size"] = r.file_size;
  j["blocks_in_use"] = r.blocks_in_use;
  j["config"] = {{"alpha", idx.config().alpha},         {"beta", idx.config().beta},
                 {"scanfward", idx.config().scanfward}, {"fulfill", idx.config().fulfill},
                 {"lippb", idx.config().lippb},         {"leaf_fill", idx.config().leaf_fill}};
  j["smo"] = smo_json(r.smo);
  return j;
}

ordered_json inspect_btree(BTreeIndex& idx) {
  ordered_json j;
  j["kind"] = "btree";
  j["block_size"] = idx.store().block_size();
  j["leaf_capacity"] = idx.leaf_capacity();
  j["fanout"] = idx.fanout();
  j["height"] = idx.height();
  j["leaves"] = idx.leaf_count();
  j["file_size"] = idx.store().file_size_bytes();
  j["smo"] = smo_json(idx.smo());
  return j;
}

ordered_json inspect_any(OrderedIndex& idx) {
  if (auto* a = dynamic_cast<AulidIndex*>(&idx)) return inspect_aulid(*a);
  return inspect_btree(dynamic_cast<BTreeIndex&>(idx));
}

std::vector<Row> flat_rows(const ordered_json& j) {
  std::vector<Row> rows;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it->is_object()) continue;
    if (it->is_number_float()) {
      rows.emplace_back(it.key(), num(it->get<double>()));
    } else if (it->is_string()) {
      rows.emplace_back(it.key(), it->get<std::string>());
    } else {
      rows.emplace_back(it.key(), it->dump());
    }
  }
  return rows;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"on-disk learned index toolkit"};
  app.require_subcommand(1);

  std::string kind_s = "uniform", out, json_out;
  std::size_t n = 100000;
  std::uint64_t seed = 1;
  auto* gen = app.add_subcommand("gen", "generate a sorted key dataset");
  gen->add_option("--kind", kind_s, "uniform|lognormal|clustered-hotspot|adversarial-conflict");
  gen->add_option("--n", n, "number of distinct keys");
  gen->add_option("--seed", seed);
  gen->add_option("--out", out)->required();
  gen->add_option("--json", json_out);

  std::string index_s = "aulid", dataset;
  AulidConfig cfg;
  double leaf_fill = 1.0;
  std::uint32_t block_size = 0;
  auto* bl = app.add_subcommand("bulkload", "bulkload a dataset into a new index file");
  bl->add_option("--index", index_s, "aulid|btree|aulid-lippb");
  bl->add_option("--dataset", dataset)->required();
  bl->add_option("--out", out)->required();
  bl->add_option("--alpha", cfg.alpha);
  bl->add_option("--beta", cfg.beta);
  bl->add_option("--fulfill", cfg.fulfill);
  bl->add_option("--scanfward", cfg.scanfward);
  bl->add_flag("--lippb", cfg.lippb);
  bl->add_option("--leaf-fill", leaf_fill);
  bl->add_option("--block-size", block_size, "defaults to AULID_BLOCK_SIZE or 4096");
  bl->add_option("--json", json_out);

  std::string index_path, workload_s = "w1";
  WorkloadSpec ws;
  bool verify = false;
  auto* run = app.add_subcommand("run", "run a workload against an index file");
  run->add_option("--index", index_path)->required();
  run->add_option("--workload", workload_s, "w1..w6");
  run->add_option("--ops", ws.op_count);
  run->add_option("--seed", ws.seed);
  run->add_option("--scan-len", ws.scan_len);
  run->add_option("--delete-share", ws.delete_share, "share of writes that delete");
  run->add_option("--update-share", ws.update_share, "share of writes that update");
  run->add_option("--dataset", dataset, "insert keys are drawn from here (keys not yet indexed)");
  run->add_flag("--verify", verify, "check every result against an in-memory oracle");
  run->add_option("--json", json_out);

  auto* ins = app.add_subcommand("inspect", "report the structure of an index file");
  ins->add_option("--index", index_path)->required();
  ins->add_flag("--check", verify, "run the structural consistency check");
  ins->add_option("--json", json_out);

  std::string opt_s = "all", work_dir;
  std::size_t lookups = 20000;
  auto* ab = app.add_subcommand("ablate", "extra block reads per optimization setting");
  ab->add_option("--dataset", dataset)->required();
  ab->add_option("--opt", opt_s, "none|scanfward|fulfill|both|all");
  ab->add_option("--lookups", lookups);
  ab->add_option("--seed", seed);
  ab->add_option("--work-dir", work_dir, "where the temporary index files go");
  ab->add_option("--block-size", block_size);
  ab->add_option("--json", json_out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (block_size == 0) block_size = block_size_from_env();

    if (*gen) {
      auto k = parse_dataset_kind(kind_s);
      if (!k) throw Error("unknown dataset kind " + kind_s);
      DatasetSpec spec;
      spec.kind = *k;
      spec.n = n;
      spec.seed = seed;
      const auto keys = gen_dataset(spec);
      write_dataset(out, keys);
      ordered_json j = {{"kind", dataset_name(*k)}, {"n", keys.size()}, {"seed", seed}, {"out", out},
                        {"min", keys.front()},      {"max", keys.back()},
                        {"conflict_degree", dataset_conflict_degree(keys)}};
      emit(j, json_out);
      print_table("gen", flat_rows(j));
    } else if (*bl) {
      auto k = parse_index_kind(index_s);
      if (!k) throw Error("unknown index kind " + index_s);
      std::vector<Key> keys = read_dataset(dataset);
      std::sort(keys.begin(), keys.end());
      IndexOptions io;
      io.kind = cfg.lippb && *k == IndexKind::kAulid ? IndexKind::kAulidLippb : *k;
      io.aulid = cfg;
      io.leaf_fill = leaf_fill;
      io.block_size = block_size;
      const auto t0 = std::chrono::steady_clock::now();
      auto idx = build_index(out, with_payloads(keys), io);
      idx->flush();
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      ordered_json j = inspect_any(*idx);
      j["keys"] = keys.size();
      j["seconds"] = secs;
      emit(j, json_out);
      print_table("bulkload " + out, flat_rows(j));
    } else if (*run) {
      auto w = parse_workload_kind(workload_s);
      if (!w) throw Error("unknown workload " + workload_s);
      ws.kind = *w;
      auto idx = open_index(index_path);
      std::vector<KeyPayload> pairs = idx->all_pairs();
      std::vector<Key> live;
      live.reserve(pairs.size());
      for (const auto& p : pairs) live.push_back(p.key);
      std::vector<Key> stream;
      if (!dataset.empty()) {
        std::vector<Key> ds = read_dataset(dataset);
        std::sort(ds.begin(), ds.end());
        std::set_difference(ds.begin(), ds.end(), live.begin(), live.end(), std::back_inserter(stream));
        std::mt19937_64 rng(ws.seed);
        std::shuffle(stream.begin(), stream.end(), rng);
      }
      live.erase(std::unique(live.begin(), live.end()), live.end());
      std::optional<Oracle> oracle;
      if (verify) oracle.emplace(pairs);
      pairs.clear();
      RunResult r = run_on_index(*idx, std::move(live), std::move(stream), ws, oracle ? &*oracle : nullptr, false);
      idx->flush();
      r.metrics.file_size = idx->store().file_size_bytes();
      ordered_json j = metrics_json(r.metrics);
      if (verify) {
        const std::string fault = idx->check();
        j["check"] = fault.empty() ? "ok" : fault;
      }
      emit(j, json_out);
      print_table("run " + index_path + " " + r.metrics.workload, flat_rows(j));
      if (r.metrics.mismatches != 0) return 3;
    } else if (*ins) {
      auto idx = open_index(index_path);
      ordered_json j = inspect_any(*idx);
      if (verify) {
        const std::string fault = idx->check();
        j["check"] = fault.empty() ? "ok" : fault;
      }
      emit(j, json_out);
      print_table("inspect " + index_path, flat_rows(j));
    } else if (*ab) {
      std::vector<AblationOpt> opts;
      if (opt_s == "all") {
        opts = {AblationOpt::kNone, AblationOpt::kScanFward, AblationOpt::kFulfill, AblationOpt::kBoth};
      } else {
        auto o = parse_ablation(opt_s);
        if (!o) throw Error("unknown ablation setting " + opt_s);
        opts = {*o};
      }
      std::vector<Key> keys = read_dataset(dataset);
      std::sort(keys.begin(), keys.end());
      keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
      const fs::path dir = work_dir.empty() ? fs::temp_directory_path() : fs::path(work_dir);
      ordered_json arr = ordered_json::array();
      std::vector<Row> rows;
      for (AblationOpt o : opts) {
        const fs::path file = dir / fmt::format("ablate-{}-{}.idx", ablation_name(o), ::getpid());
        const AblationResult r = ablation_extra_blocks(keys, o, lookups, seed, file, block_size);
        fs::remove(file);
        arr.push_back({{"opt", ablation_name(o)},
                       {"lookups", r.lookups},
                       {"extra_blocks", r.extra_blocks},
                       {"lookups_with_extra", r.lookups_with_extra},
                       {"actual_reads", r.actual_reads},
                       {"ideal_reads", r.ideal_reads},
                       {"null_crossings", r.null_crossings},
                       {"scanfward_hits", r.scanfward_hits},
                       {"below_fallbacks", r.below_fallbacks},
                       {"mismatches", r.mismatches}});
        rows.emplace_back(ablation_name(o), fmt::format("extra {:>8}  null-cross {:>8}  reads/lookup {:.3f}",
                                                        r.extra_blocks, r.null_crossings,
                                                        r.lookups ? double(r.actual_reads) / double(r.lookups) : 0.0));
      }
      emit(arr, json_out);
      print_table("ablate " + dataset, rows);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
