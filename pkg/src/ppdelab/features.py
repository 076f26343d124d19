"""Prefix summary statistics of path batches.

Most functionals in this package depend on a path prefix only through a
handful of statistics: the current value, the running coordinate-wise
max/min, the integral of the path, and the value frozen at fixed snapshot
times. Tracking those incrementally lets simulations and trees stream over
time steps without storing whole path arrays, and the statistics are exact
for piecewise-linear paths (segment extrema at knots, trapezoid integrals).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .pathspace import DiscretePath

_TOL = 1e-12


@dataclass(frozen=True)
class FeatureSpec:
    """Which statistics a functional needs."""

    track_max: bool = False
    track_min: bool = False
    track_integral: bool = False
    snapshot_times: tuple[float, ...] = ()

    def union(self, other: "FeatureSpec") -> "FeatureSpec":
        return FeatureSpec(
            self.track_max or other.track_max,
            self.track_min or other.track_min,
            self.track_integral or other.track_integral,
            tuple(sorted(set(self.snapshot_times) | set(other.snapshot_times))),
        )


FULL_SPEC = FeatureSpec(track_max=True, track_min=True, track_integral=True)


class FeatureState:
    """Summary statistics of a batch of path prefixes at a common time.

    Arrays are (n, d). ``snapshots`` holds the values frozen at snapshot
    times already crossed; before crossing, the snapshot of ``t_snap`` is
    the current value (the path stopped at t is flat).
    """

    __slots__ = ("spec", "t", "x", "xmax", "xmin", "integral", "snapshots")

    def __init__(self, spec, t, x, xmax=None, xmin=None, integral=None, snapshots=None):
        self.spec = spec
        self.t = float(t)
        self.x = x
        self.xmax = xmax
        self.xmin = xmin
        self.integral = integral
        self.snapshots = {} if snapshots is None else snapshots

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @staticmethod
    def initial(spec: FeatureSpec, n: int, d: int, t: float = 0.0) -> "FeatureState":
        z = np.zeros((n, d))
        return FeatureState(
            spec, t, z.copy(),
            z.copy() if spec.track_max else None,
            z.copy() if spec.track_min else None,
            z.copy() if spec.track_integral else None,
        )

    @staticmethod
    def from_path(path: DiscretePath, t: float, spec: FeatureSpec) -> "FeatureState":
        """Exact statistics of a piecewise-linear path prefix (batch of one)."""
        times = path.times
        mask = times <= t + _TOL
        knots = times[mask]
        vals = path.values[mask]
        xt = path.value(t)
        seen = np.vstack([vals, xt[None, :]])
        xmax = seen.max(axis=0) if spec.track_max else None
        xmin = seen.min(axis=0) if spec.track_min else None
        integral = None
        if spec.track_integral:
            all_t = np.concatenate([knots, [t]])
            integral = np.zeros(path.d)
            for a in range(len(all_t) - 1):
                dt = all_t[a + 1] - all_t[a]
                if dt > _TOL:
                    integral += 0.5 * (seen[a] + seen[a + 1]) * dt
        snaps = {}
        for ts in spec.snapshot_times:
            if ts <= t + _TOL:
                snaps[ts] = path.value(ts)[None, :]
        return FeatureState(
            spec, t, xt[None, :].copy(),
            None if xmax is None else xmax[None, :].copy(),
            None if xmin is None else xmin[None, :].copy(),
            None if integral is None else integral[None, :].copy(),
            snaps,
        )

    def advance(self, new_t: float, new_x: np.ndarray) -> "FeatureState":
        """State after appending the linear segment (t, x) -> (new_t, new_x)."""
        dt = new_t - self.t
        spec = self.spec
        xmax = np.maximum(self.xmax, new_x) if spec.track_max else None
        xmin = np.minimum(self.xmin, new_x) if spec.track_min else None
        integral = self.integral + 0.5 * (self.x + new_x) * dt if spec.track_integral else None
        snaps = dict(self.snapshots)
        for ts in spec.snapshot_times:
            if ts in snaps:
                continue
            if ts <= new_t + _TOL:
                if dt <= _TOL:
                    snaps[ts] = new_x.copy()
                else:
                    w = np.clip((ts - self.t) / dt, 0.0, 1.0)
                    snaps[ts] = (1.0 - w) * self.x + w * new_x
        return FeatureState(spec, new_t, new_x, xmax, xmin, integral, snaps)

    def snapshot(self, ts: float) -> np.ndarray:
        """Value at min(t, ts): frozen once crossed, the current value before."""
        return self.snapshots.get(ts, self.x)

    def repeat(self, k: int) -> "FeatureState":
        """Each row repeated k times (tree branching)."""
        rep = lambda a: None if a is None else np.repeat(a, k, axis=0)
        return FeatureState(
            self.spec, self.t, rep(self.x), rep(self.xmax), rep(self.xmin),
            rep(self.integral), {ts: rep(v) for ts, v in self.snapshots.items()},
        )

    def take(self, idx) -> "FeatureState":
        sel = lambda a: None if a is None else a[idx]
        return FeatureState(
            self.spec, self.t, sel(self.x), sel(self.xmax), sel(self.xmin),
            sel(self.integral), {ts: sel(v) for ts, v in self.snapshots.items()},
        )

    def copy(self) -> "FeatureState":
        cp = lambda a: None if a is None else a.copy()
        return FeatureState(
            self.spec, self.t, cp(self.x), cp(self.xmax), cp(self.xmin),
            cp(self.integral), {ts: cp(v) for ts, v in self.snapshots.items()},
        )
