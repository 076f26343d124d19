"""Pure-numpy reference implementations of the hot kernels.

These are the fallback used when the compiled extension is unavailable
(or when ``PPDELAB_PURE=1``). The compiled module in ``_fastpath.pyx``
must agree with these bit for bit; ``tests/test_kernels.py`` enforces it.

All kernels operate on path batches laid out as ``values[path, knot, coord]``
(C-contiguous float64). Exit conditions use ``>=`` so a knot sitting exactly
on the barrier counts as exited.
"""

from __future__ import annotations

import numpy as np

BACKEND = "reference"


def first_exit_radius(values: np.ndarray, eps: float, start: int = 0) -> np.ndarray:
    """First knot index j >= start with |values[i, j]| >= eps, else m.

    Parameters
    ----------
    values : (n, m, d) array
    eps : barrier radius
    start : first knot index eligible to fire

    Returns
    -------
    (n,) int64 array of knot indices; m means "never exits".
    """
    n, m, _ = values.shape
    hit = np.einsum("ijk,ijk->ij", values, values) >= eps * eps
    if start > 0:
        hit[:, :start] = False
    idx = np.argmax(hit, axis=1)
    idx[~hit.any(axis=1)] = m
    return idx.astype(np.int64)


def first_exit_halfspaces(values: np.ndarray, normals: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """First knot index leaving the open polytope {x : a_k . x < b_k for all k}.

    Returns (n,) int64 indices; m means the path stays inside.
    """
    n, m, _ = values.shape
    # (n, m, k) >= (k,) -> any over k
    proj = np.einsum("ijd,kd->ijk", values, normals)
    hit = (proj >= offsets[None, None, :]).any(axis=2)
    idx = np.argmax(hit, axis=1)
    idx[~hit.any(axis=1)] = m
    return idx.astype(np.int64)


def skeleton_scan(values: np.ndarray, times: np.ndarray, eps: float):
    """Successive radius-eps exit bookkeeping for every path and knot.

    The exit times are h_0 = 0 and h_{i+1} = first knot j > h_i with
    |x_j - x_{h_i}| >= eps. The "anchor" of knot j is the largest exit
    index h_i <= j.

    Returns
    -------
    anchor : (n, m) int64
        knot index of the anchor at each grid position.
    integral : (n, m, d) float64
        trapezoid integral of the exit-knot interpolant up to the anchor.
    high : (n, m, d) float64
        per-coordinate running max of the interpolant up to the anchor
        (segment extrema sit at the exit knots, so this is the max over
        exit-knot values).
    low : (n, m, d) float64
        per-coordinate running min, same convention.
    """
    n, m, d = values.shape
    anchor = np.zeros((n, m), dtype=np.int64)
    integral = np.zeros((n, m, d))
    high = np.zeros((n, m, d))
    low = np.zeros((n, m, d))
    eps2 = eps * eps
    for i in range(n):
        a = 0
        hi = values[i, 0].copy()
        lo = values[i, 0].copy()
        cur_int = np.zeros(d)
        for j in range(1, m):
            diff = values[i, j] - values[i, a]
            if diff @ diff >= eps2:
                cur_int = cur_int + 0.5 * (values[i, a] + values[i, j]) * (times[j] - times[a])
                a = j
                hi = np.maximum(hi, values[i, j])
                lo = np.minimum(lo, values[i, j])
            anchor[i, j] = a
            integral[i, j] = cur_int
            high[i, j] = hi
            low[i, j] = lo
        anchor[i, 0] = 0
        integral[i, 0] = 0.0
        high[i, 0] = values[i, 0]
        low[i, 0] = values[i, 0]
    return anchor, integral, high, low


def euler_paths(increments: np.ndarray) -> np.ndarray:
    """Cumulative sum of increments with a zero first knot.

    increments: (n, m-1, d) -> (n, m, d) paths anchored at 0.
    """
    n, k, d = increments.shape
    out = np.empty((n, k + 1, d))
    out[:, 0] = 0.0
    np.cumsum(increments, axis=1, out=out[:, 1:])
    return out
