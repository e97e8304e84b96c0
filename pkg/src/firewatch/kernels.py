"""Kernel dispatch: the compiled extension when available, numpy otherwise.

Set ``FIREWATCH_PURE=1`` to force the numpy implementations.
"""

import os
from functools import lru_cache

import numpy as np

if os.environ.get("FIREWATCH_PURE", "") not in ("", "0"):
    from . import _pykernels as _impl
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        from . import _pykernels as _impl

BACKEND = _impl.BACKEND
footprint_sum = _impl.footprint_sum
neighbor_product = _impl.neighbor_product
chain_dp_backward = _impl.chain_dp_backward
pair_penalties = _impl.pair_penalties


@lru_cache(maxsize=32)
def _overlap_cached(reach_key, fov_key):
    reach = np.frombuffer(reach_key, dtype=np.int64).reshape(-1, 2)
    fov = np.frombuffer(fov_key, dtype=np.int64).reshape(-1, 2)
    fov_set = {tuple(o) for o in fov.tolist()}
    indptr = [0]
    rows = []
    for dr, dc in reach.tolist():
        # u = a + o lies in FOV(a) and in FOV(a + delta) iff o - delta is a fov offset
        rows.extend(o for o in fov.tolist() if (o[0] - dr, o[1] - dc) in fov_set)
        indptr.append(len(rows))
    ov = np.array(rows, dtype=np.int64).reshape(-1, 2)
    ip = np.array(indptr, dtype=np.int64)
    ov.setflags(write=False)
    ip.setflags(write=False)
    return ip, ov


def overlap_table(reach_off, fov_off):
    """CSR table: for reach offset k, the fov offsets (relative to the source) shared by both disks."""
    r = np.ascontiguousarray(reach_off, dtype=np.int64)
    f = np.ascontiguousarray(fov_off, dtype=np.int64)
    return _overlap_cached(r.tobytes(), f.tobytes())


def footprint_sum_flat(values, offsets, shape):
    """``footprint_sum`` for a flat per-zone vector."""
    return footprint_sum(np.asarray(values, dtype=np.float64).reshape(shape), offsets).ravel()
