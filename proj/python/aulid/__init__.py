"""Python access to the on-disk AULID index and the B+-tree baseline."""

import importlib.machinery
import importlib.util
import os
import sys


def _load():
    try:
        from . import _aulid
        return _aulid
    except ImportError:
        pass
    # In-tree builds put the extension in the cmake build directory.
    ext_dir = os.environ.get("AULID_EXT_DIR")
    if not ext_dir:
        raise ImportError("aulid extension not built; set AULID_EXT_DIR or pip install the package")
    for suffix in importlib.machinery.EXTENSION_SUFFIXES:
        path = os.path.join(ext_dir, "_aulid" + suffix)
        if os.path.exists(path):
            spec = importlib.util.spec_from_file_location(__name__ + "._aulid", path)
            mod = importlib.util.module_from_spec(spec)
            spec.loader.exec_module(mod)
            sys.modules[__name__ + "._aulid"] = mod
            return mod
    raise ImportError(f"no _aulid extension in {ext_dir}")


_ext = _load()

AulidConfig = _ext.AulidConfig
AulidIndex = _ext.AulidIndex
BTreeIndex = _ext.BTreeIndex
AulidError = _ext.AulidError
gen_dataset = _ext.gen_dataset
run_workload = _ext.run_workload

__all__ = ["AulidConfig", "AulidIndex", "BTreeIndex", "AulidError", "gen_dataset", "run_workload"]
