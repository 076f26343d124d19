"""Exact backward induction on recombining feature trees (d = 1).

Noise is Rademacher with matched variance: one step under volatility s maps
x to x +- s sqrt(dt), each with probability 1/2, so one-step expectations are
exact pair averages. Nodes are identified by their tracked prefix statistics
rounded to a fixed number of decimals; paths whose statistics coincide
recombine, which keeps uncertain-volatility lattices polynomial instead of
exponential. The same engine serves the semilinear solver (singleton control
set) and the HJB solver (max over the control set per node), making the
degenerate-sup equality between the two bit-exact by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..features import FeatureSpec, FeatureState
from ..pathspace import DomainError

NODE_BUDGET = 2_000_000


@dataclass(frozen=True)
class KeyLayout:
    """Column layout of a node key: x, then optional max/min/integral/snaps."""

    spec: FeatureSpec
    decimals: int = 10

    @property
    def width(self) -> int:
        w = 1
        w += 1 if self.spec.track_max else 0
        w += 1 if self.spec.track_min else 0
        w += 1 if self.spec.track_integral else 0
        w += len(self.spec.snapshot_times)
        return w

    def root(self) -> np.ndarray:
        return np.zeros((1, self.width))

    def advance(self, keys: np.ndarray, t: float, new_t: float, inc: float) -> np.ndarray:
        """Child keys after one linear segment with increment `inc`."""
        out = keys.copy()
        x_old = keys[:, 0]
        x_new = x_old + inc
        out[:, 0] = x_new
        col = 1
        if self.spec.track_max:
            out[:, col] = np.maximum(keys[:, col], x_new)
            col += 1
        if self.spec.track_min:
            out[:, col] = np.minimum(keys[:, col], x_new)
            col += 1
        if self.spec.track_integral:
            out[:, col] = keys[:, col] + 0.5 * (x_old + x_new) * (new_t - t)
            col += 1
        for ts in self.spec.snapshot_times:
            if ts <= t + 1e-12:
                pass  # already frozen in the key
            elif ts <= new_t + 1e-12:
                w = (ts - t) / (new_t - t)
                out[:, col] = (1.0 - w) * x_old + w * x_new
            else:
                out[:, col] = x_new  # not frozen yet: tracks the current value
            col += 1
        return np.round(out, self.decimals)

    def to_state(self, keys: np.ndarray, t: float) -> FeatureState:
        n = keys.shape[0]
        col = 1
        xmax = xmin = integral = None
        x = keys[:, 0:1].copy()
        if self.spec.track_max:
            xmax = keys[:, col:col + 1].copy()
            col += 1
        if self.spec.track_min:
            xmin = keys[:, col:col + 1].copy()
            col += 1
        if self.spec.track_integral:
            integral = keys[:, col:col + 1].copy()
            col += 1
        snaps = {}
        for ts in self.spec.snapshot_times:
            if ts <= t + 1e-12:
                snaps[ts] = keys[:, col:col + 1].copy()
            col += 1
        return FeatureState(self.spec, t, x, xmax, xmin, integral, snaps)


def _unique_with_index(arr: np.ndarray):
    """(unique rows, inverse index) with lexicographic order."""
    uniq, inverse = np.unique(arr, axis=0, return_inverse=True)
    return uniq, inverse.ravel()


def tree_solve(controls, sigma_of, driver, terminal, times, spec: FeatureSpec,
               decimals: int = 10, init_key: np.ndarray | None = None):
    """DP value at the root plus per-layer node counts (diagnostics).

    controls : list of control labels k (one entry = plain semilinear step)
    sigma_of : (t, FeatureState, k) -> (n,) volatilities
    driver   : None or (t, FeatureState, y, z, k) -> (n,) with z = sigma dx u
    terminal : (FeatureState) -> (n,)
    """
    layout = KeyLayout(spec, decimals)
    m = len(times) - 1
    layers = [layout.root() if init_key is None else np.round(init_key, decimals)]
    maps = []  # per step: (child_index[nk, n_ctrl, 2], sigmas[nk, n_ctrl])
    for j in range(m):
        t, tn = float(times[j]), float(times[j + 1])
        dt = tn - t
        keys = layers[j]
        nk = keys.shape[0]
        state = layout.to_state(keys, t)
        all_children = []
        sigmas = np.empty((nk, len(controls)))
        for ci, k in enumerate(controls):
            s = np.asarray(sigma_of(t, state, k), dtype=float)
            s = np.broadcast_to(s, (nk,))
            sigmas[:, ci] = s
            step = s * np.sqrt(dt)
            all_children.append(layout.advance(keys, t, tn, -step))
            all_children.append(layout.advance(keys, t, tn, +step))
        stacked = np.vstack(all_children)
        uniq, inverse = _unique_with_index(stacked)
        if uniq.shape[0] > NODE_BUDGET:
            raise DomainError("feature tree exceeds the node budget")
        child_idx = inverse.reshape(2 * len(controls), nk).T.reshape(nk, len(controls), 2)
        layers.append(uniq)
        maps.append((child_idx, sigmas))

    last_state = layout.to_state(layers[-1], float(times[-1]))
    y = np.asarray(terminal(last_state), dtype=float)
    for j in range(m - 1, -1, -1):
        t = float(times[j])
        dt = float(times[j + 1] - times[j])
        keys = layers[j]
        child_idx, sigmas = maps[j]
        state = layout.to_state(keys, t)
        best = None
        for ci, k in enumerate(controls):
            y_dn = y[child_idx[:, ci, 0]]
            y_up = y[child_idx[:, ci, 1]]
            cond = 0.5 * (y_dn + y_up)
            z = (y_up - y_dn) / (2.0 * np.sqrt(dt))
            val = cond
            if driver is not None:
                val = cond + dt * np.asarray(driver(t, state, cond, z, k), dtype=float)
            best = val if best is None else np.maximum(best, val)
        y = best
    sizes = [k.shape[0] for k in layers]
    return float(y[0]), {"layer_nodes": sizes, "max_nodes": max(sizes)}
