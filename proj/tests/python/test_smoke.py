import os

import pytest

import aulid


@pytest.fixture
def path(tmp_path):
    return str(tmp_path / "index.idx")


def test_aulid_roundtrip(path):
    keys = aulid.gen_dataset("lognormal", 5000, 3)
    assert keys == sorted(keys)
    idx = aulid.AulidIndex.bulkload(path, [(k, k + 1) for k in keys])
    assert idx.kind == "aulid"
    assert idx.lookup(keys[100]) == keys[100] + 1
    assert idx.lookup(keys[100] + 1) is None or keys[101] == keys[100] + 1
    idx.insert(7, 70)
    assert idx.lookup(7) == 70
    assert idx.update(7, 71)
    assert idx.erase(7)
    assert not idx.erase(7)
    assert idx.scan_count(keys[0], 3) == [(k, k + 1) for k in keys[:3]]
    assert idx.check() == ""
    idx.flush()
    del idx
    again = aulid.AulidIndex.open(path)
    assert again.io() == {"reads": 0, "writes": 0}
    assert len(again.items()) == len(keys)
    assert again.inspect()["leaves"] >= len(keys) // 254


def test_btree_and_config(path, tmp_path):
    keys = list(range(0, 150000, 3))
    t = aulid.BTreeIndex.bulkload(path, [(k, k + 1) for k in keys])
    assert t.height == 2
    t.reset_io()
    assert t.lookup(300) == 301
    assert t.io()["reads"] == 2
    cfg = aulid.AulidConfig()
    cfg.fulfill = True
    idx = aulid.AulidIndex.bulkload(str(tmp_path / "f.idx"), [(k, k + 1) for k in keys], cfg)
    assert idx.scan(30, 39) == [(30, 31), (33, 34), (36, 37), (39, 40)]


def test_run_workload_verifies(tmp_path):
    keys = aulid.gen_dataset("clustered-hotspot", 20000, 1)
    for index in ("aulid", "btree", "aulid-lippb"):
        m = aulid.run_workload(keys, index, "w5", str(tmp_path / f"{index}.idx"), ops=2000)
        assert m["mismatches"] == 0
        assert m["op_counts"]["lookup"] == 1000


def test_errors(path):
    with pytest.raises(aulid.AulidError):
        aulid.AulidIndex.bulkload(path, [(3, 1), (2, 1)])
    with pytest.raises(aulid.AulidError):
        aulid.AulidIndex.open(path + ".missing")
