"""Pure numpy implementations of the hot kernels.

Each function mirrors one in ``_ckernels.pyx``; the compiled module is used
when it is importable (see :mod:`firewatch.kernels`).
"""

import numpy as np
from scipy import sparse

BACKEND = "python"


def _shift_slices(n_rows, n_cols, dr, dc):
    """Slices so that ``out[dst] op= src[srcs]`` reads ``src[r+dr, c+dc]``."""
    r0, r1 = max(0, -dr), min(n_rows, n_rows - dr)
    c0, c1 = max(0, -dc), min(n_cols, n_cols - dc)
    if r0 >= r1 or c0 >= c1:
        return None
    return (slice(r0, r1), slice(c0, c1)), (slice(r0 + dr, r1 + dr), slice(c0 + dc, c1 + dc))


def footprint_sum(values, offsets):
    """out[r, c] = sum of values[r+dr, c+dc] over in-grid offsets, accumulated in offset order."""
    values = np.ascontiguousarray(values, dtype=np.float64)
    out = np.zeros_like(values)
    n_rows, n_cols = values.shape
    for dr, dc in offsets:
        sl = _shift_slices(n_rows, n_cols, int(dr), int(dc))
        if sl is not None:
            out[sl[0]] += values[sl[1]]
    return out


def neighbor_product(p, offsets, weights):
    """out[r, c] = prod over in-grid offsets of (1 - p[r+dr, c+dc] * w)."""
    p = np.ascontiguousarray(p, dtype=np.float64)
    out = np.ones_like(p)
    n_rows, n_cols = p.shape
    for (dr, dc), w in zip(offsets, weights):
        sl = _shift_slices(n_rows, n_cols, int(dr), int(dc))
        if sl is not None:
            out[sl[0]] *= 1.0 - p[sl[1]] * w
    return out


def _edges(width, height, reach_off):
    n = width * height
    rows, cols = np.divmod(np.arange(n), width)
    rr = rows[:, None] + reach_off[None, :, 0]
    cc = cols[:, None] + reach_off[None, :, 1]
    valid = (rr >= 0) & (rr < height) & (cc >= 0) & (cc < width)
    dst = np.where(valid, rr * width + cc, -1)
    return valid, dst


def _fov_matrix(width, height, fov_off):
    """Sparse F with F[u, a] = 1 when zone u lies in the field of view of zone a."""
    valid, dst = _edges(width, height, fov_off)
    a = np.nonzero(valid)[0]
    u = dst[valid]
    n = width * height
    return sparse.csr_matrix((np.ones(u.size), (u, a)), shape=(n, n))


def chain_dp_backward(node, sigma, terminal, reach_off, fov_off, ov_indptr, ov_off,
                      width, height, pairwise=True):
    """Cost-to-go table of the chain program.

    ``W[H-1, a] = node[H-1, a] - terminal[a]`` and
    ``W[s, a] = node[s, a] + max_b (W[s+1, b] - pen[s+1](a, b))`` over ``b`` reachable from ``a``,
    where ``pen[s](a, b)`` sums ``sigma[s]`` over the intersection of the two fields of view.
    The overlap tables are unused here; the penalty comes from ``F^T diag(sigma) F``.
    """
    node = np.asarray(node, dtype=np.float64)
    n_stages, n = node.shape
    valid, dst = _edges(width, height, np.asarray(reach_off))
    src_idx = np.nonzero(valid)[0]
    dst_idx = dst[valid]
    # every zone reaches itself, so each source owns a nonempty run of edges
    starts = np.searchsorted(src_idx, np.arange(n))
    F = _fov_matrix(width, height, np.asarray(fov_off)) if pairwise else None
    W = np.empty_like(node)
    W[-1] = node[-1] - terminal
    for s in range(n_stages - 2, -1, -1):
        cand = W[s + 1][dst_idx]
        if pairwise:
            cand = cand - _pair_values(F, sigma[s + 1], src_idx, dst_idx)
        W[s] = node[s] + np.maximum.reduceat(cand, starts)
    return W


def _pair_values(F, sig, src_idx, dst_idx):
    if not np.any(sig):
        return np.zeros(src_idx.size)
    P = (F.T @ sparse.diags(sig) @ F).tocsr()
    return np.asarray(P[src_idx, dst_idx]).ravel()


def pair_penalties(sigma_row, a, reach_off, fov_off, ov_indptr, ov_off, width, height):
    """Overlap penalties from zone ``a`` to each reach offset (NaN where off-grid)."""
    r, c = divmod(int(a), width)
    reach_off = np.asarray(reach_off)
    ov_off = np.asarray(ov_off)
    sigma_row = np.asarray(sigma_row, dtype=np.float64)
    out = np.full(len(reach_off), np.nan)
    ur, uc = r + ov_off[:, 0], c + ov_off[:, 1]
    ok = (ur >= 0) & (ur < height) & (uc >= 0) & (uc < width)
    vals = np.where(ok, sigma_row[np.where(ok, ur * width + uc, 0)], 0.0)
    for k, (dr, dc) in enumerate(reach_off):
        if 0 <= r + dr < height and 0 <= c + dc < width:
            out[k] = float(np.sum(vals[ov_indptr[k]:ov_indptr[k + 1]]))
    return out
