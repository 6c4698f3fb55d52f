#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "aulid/aulid_index.hpp"
#include "aulid/btree_index.hpp"
#include "aulid/workload.hpp"

namespace py = pybind11;
using namespace aulid;

namespace {

std::vector<KeyPayload> to_pairs(const std::vector<std::pair<Key, Payload>>& in) {
  std::vector<KeyPayload> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = {in[i].first, in[i].second};
  return out;
}

std::vector<std::pair<Key, Payload>> from_pairs(const std::vector<KeyPayload>& in) {
  std::vector<std::pair<Key, Payload>> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = {in[i].key, in[i].payload};
  return out;
}

py::dict io_dict(BlockStore& s) {
  py::dict d;
  d["reads"] = s.counters().reads;
  d["writes"] = s.counters().writes;
  return d;
}

py::dict smo_dict(const SmoCounters& s) {
  py::dict d;
  for (std::size_t i = 0; i < SmoCounters::kFields; ++i) d[smo_field_name(i)] = s.begin()[i];
  return d;
}

// Methods shared by both index classes.
template <typename T, typename C>
void common(C& c) {
  c.def("lookup", &T::lookup, py::arg("key"))
      .def("insert", &T::insert, py::arg("key"), py::arg("payload"))
      .def("erase", &T::erase, py::arg("key"))
      .def("update", &T::update, py::arg("key"), py::arg("payload"))
      .def("scan", [](T& t, Key u, Key v) { return from_pairs(t.scan(u, v)); }, py::arg("lo"), py::arg("hi"))
      .def("scan_count", [](T& t, Key u, std::size_t n) { return from_pairs(t.scan_count(u, n)); },
           py::arg("lo"), py::arg("n"))
      .def("items", [](T& t) { return from_pairs(t.all_pairs()); })
      .def("check", &T::check)
      .def("flush", &T::flush)
      .def("io", [](T& t) { return io_dict(t.store()); })
      .def("reset_io", [](T& t) { t.store().reset_counters(); })
      .def("smo", [](T& t) { return smo_dict(t.smo()); })
      .def("file_size", [](T& t) { return t.store().file_size_bytes(); })
      .def_property_readonly("kind", &T::kind);
}

}  // namespace

PYBIND11_MODULE(_aulid, m) {
  m.doc() = "on-disk learned index with B+-tree leaves, plus a B+-tree baseline";

  py::register_exception<Error>(m, "AulidError", PyExc_RuntimeError);

  py::class_<AulidConfig>(m, "AulidConfig")
      .def(py::init<>())
      .def_readwrite("alpha", &AulidConfig::alpha)
      .def_readwrite("beta", &AulidConfig::beta)
      .def_readwrite("scanfward", &AulidConfig::scanfward)
      .def_readwrite("fulfill", &AulidConfig::fulfill)
      .def_readwrite("lippb", &AulidConfig::lippb)
      .def_readwrite("leaf_fill", &AulidConfig::leaf_fill)
      .def_readwrite("adjust", &AulidConfig::adjust);

  py::class_<AulidIndex> a(m, "AulidIndex");
  a.def_static(
       "bulkload",
       [](const std::filesystem::path& path, const std::vector<std::pair<Key, Payload>>& pairs,
          const AulidConfig& cfg, std::uint32_t block_size) {
         return AulidIndex::bulkload(path, to_pairs(pairs), cfg, block_size);
       },
       py::arg("path"), py::arg("pairs"), py::arg("config") = AulidConfig{},
       py::arg("block_size") = BlockStore::kDefaultBlockSize)
      .def_static("open", &AulidIndex::open, py::arg("path"))
      .def("inspect", [](AulidIndex& t) {
        const InspectReport r = t.inspect();
        py::dict d;
        d["leaves"] = r.leaves;
        d["pairs"] = r.pairs;
        d["inner_items"] = r.inner_items;
        d["mixed_nodes"] = r.inner.mixed_nodes;
        d["btrees"] = r.inner.btrees;
        d["avg_depth"] = r.avg_depth;
        d["max_depth"] = r.max_depth;
        d["depth_hist"] = r.depth_hist;
        d["fetch_hist"] = r.fetch_hist;
        d["file_size"] = r.file_size;
        return d;
      });
  common<AulidIndex>(a);

  py::class_<BTreeIndex> b(m, "BTreeIndex");
  b.def_static(
       "bulkload",
       [](const std::filesystem::path& path, const std::vector<std::pair<Key, Payload>>& pairs, double leaf_fill,
          std::uint32_t block_size) { return BTreeIndex::bulkload(path, to_pairs(pairs), leaf_fill, block_size); },
       py::arg("path"), py::arg("pairs"), py::arg("leaf_fill") = 1.0,
       py::arg("block_size") = BlockStore::kDefaultBlockSize)
      .def_static("open", &BTreeIndex::open, py::arg("path"))
      .def_property_readonly("height", &BTreeIndex::height);
  common<BTreeIndex>(b);

  m.def(
      "gen_dataset",
      [](const std::string& kind, std::size_t n, std::uint64_t seed) {
        auto k = parse_dataset_kind(kind);
        if (!k) throw Error("unknown dataset kind " + kind);
        DatasetSpec s;
        s.kind = *k;
        s.n = n;
        s.seed = seed;
        return gen_dataset(s);
      },
      py::arg("kind"), py::arg("n"), py::arg("seed") = 1);

  m.def(
      "run_workload",
      [](const std::vector<Key>& keys, const std::string& index, const std::string& workload,
         const std::filesystem::path& file, std::size_t ops, std::uint64_t seed, bool verify) {
        auto ik = parse_index_kind(index);
        auto wk = parse_workload_kind(workload);
        if (!ik || !wk) throw Error("unknown index kind or workload");
        WorkloadSpec spec;
        spec.kind = *wk;
        spec.op_count = ops;
        spec.seed = seed;
        RunOptions o;
        o.index.kind = *ik;
        o.file = file;
        o.verify = verify;
        const Metrics mt = run_workload(keys, spec, o).metrics;
        py::dict d;
        d["index"] = mt.index;
        d["workload"] = mt.workload;
        d["ops"] = mt.ops;
        d["op_counts"] = mt.op_counts;
        d["blocks_read_per_op"] = mt.blocks_read_per_op;
        d["blocks_written_per_op"] = mt.blocks_written_per_op;
        d["blocks_read_per_lookup"] = mt.blocks_read_per_lookup;
        d["throughput"] = mt.throughput;
        d["file_size"] = mt.file_size;
        d["mismatches"] = mt.mismatches;
        d["smo_delta"] = smo_dict(mt.smo_delta);
        return d;
      },
      py::arg("keys"), py::arg("index"), py::arg("workload"), py::arg("file"), py::arg("ops") = 10000,
      py::arg("seed") = 1, py::arg("verify") = true);
}
