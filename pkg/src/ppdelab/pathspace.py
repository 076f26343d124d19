"""Discrete canonical path space.

Paths are d-dimensional, continuous, piecewise-linear on a time grid and
anchored at the origin. Shifted paths (origin t > 0) represent the space of
continuations used by concatenation and functional shifting. Sup-norms and
the pseudometric are exact for this class: the Euclidean norm of a linear
segment is maximized at an endpoint, so all extrema live on knots.

Everything here is immutable and pure; operations return new paths.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

_TOL = 1e-12


class DomainError(ValueError):
    """Argument outside the operation's domain."""


def _as_grid_array(knots) -> np.ndarray:
    arr = np.asarray(knots, dtype=float).copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing knot times from 0 to the horizon T."""

    knots: np.ndarray

    def __post_init__(self):
        arr = _as_grid_array(self.knots)
        object.__setattr__(self, "knots", arr)
        if arr.ndim != 1 or arr.size < 2:
            raise DomainError("grid needs at least two knots")
        if abs(arr[0]) > _TOL:
            raise DomainError("grid must start at 0")
        if np.any(np.diff(arr) <= 0):
            raise DomainError("grid knots must be strictly increasing")

    @property
    def horizon(self) -> float:
        return float(self.knots[-1])

    @property
    def step(self) -> float:
        """Maximum consecutive spacing."""
        return float(np.max(np.diff(self.knots)))

    @staticmethod
    def uniform(horizon: float = 1.0, n_intervals: int = 16) -> "TimeGrid":
        if horizon <= 0 or n_intervals < 1:
            raise DomainError("horizon and interval count must be positive")
        return TimeGrid(np.linspace(0.0, horizon, n_intervals + 1))

    def refined_with(self, times) -> "TimeGrid":
        """Grid with the given times merged in (tolerance-deduplicated)."""
        extra = np.atleast_1d(np.asarray(times, dtype=float))
        if extra.size and (extra.min() < -_TOL or extra.max() > self.horizon + _TOL):
            raise DomainError("refinement times outside [0, T]")
        merged = np.union1d(self.knots, extra)
        keep = np.concatenate([[True], np.diff(merged) > _TOL])
        return TimeGrid(merged[keep])

    def index_of(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.knots - t)))
        if abs(self.knots[i] - t) > _TOL:
            raise DomainError(f"{t} is not a grid knot")
        return i


def _interp_row(times: np.ndarray, values: np.ndarray, s: float) -> np.ndarray:
    """Linear interpolation with flat extension beyond the last knot."""
    if s >= times[-1]:
        return values[-1]
    j = int(np.searchsorted(times, s, side="right")) - 1
    j = max(j, 0)
    t0, t1 = times[j], times[j + 1]
    w = (s - t0) / (t1 - t0)
    return (1.0 - w) * values[j] + w * values[j + 1]


@dataclass(frozen=True)
class DiscretePath:
    """Piecewise-linear path on the knots of ``grid`` at or after ``origin``.

    ``anchored=False`` relaxes the "starts at 0" invariant; it is used only
    for vertical-bump probe paths whose bump covers the origin knot.
    """

    grid: TimeGrid
    values: np.ndarray
    origin: float = 0.0
    anchored: bool = True

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        vals = np.ascontiguousarray(vals)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        times = self.times
        if times.size == 0 or abs(times[0] - self.origin) > _TOL:
            raise DomainError("origin must be a grid knot")
        if vals.shape[0] != times.size:
            raise DomainError("one value per knot at or after the origin")
        if self.anchored and np.max(np.abs(vals[0])) > _TOL:
            raise DomainError("paths start at the origin point 0")

    @property
    def times(self) -> np.ndarray:
        return self.grid.knots[self.grid.knots >= self.origin - _TOL]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def horizon(self) -> float:
        return self.grid.horizon

    def value(self, s: float) -> np.ndarray:
        """Path value at time s; flat after the last knot."""
        if s < self.origin - _TOL:
            raise DomainError(f"time {s} before path origin {self.origin}")
        return _interp_row(self.times, self.values, s)

    @staticmethod
    def zero(grid: TimeGrid, d: int = 1, origin: float = 0.0) -> "DiscretePath":
        n = int(np.sum(grid.knots >= origin - _TOL))
        return DiscretePath(grid, np.zeros((n, d)), origin)

    @staticmethod
    def from_knots(times, values, origin: float = 0.0) -> "DiscretePath":
        """Path from explicit knot times (prepending [0, origin] knots if shifted)."""
        times = np.asarray(times, dtype=float)
        if origin > _TOL:
            head = np.linspace(0.0, origin, 2)
            grid = TimeGrid(np.union1d(head, times))
        else:
            grid = TimeGrid(times)
        return DiscretePath(grid, values, origin)

    def replace_values(self, values: np.ndarray, anchored: bool | None = None) -> "DiscretePath":
        return DiscretePath(self.grid, values, self.origin,
                            self.anchored if anchored is None else anchored)

    def on_refined(self, times) -> "DiscretePath":
        """Same path re-sampled on a refined grid (exact: linear interpolation)."""
        grid = self.grid.refined_with(times)
        new_times = grid.knots[grid.knots >= self.origin - _TOL]
        vals = np.stack([_interp_row(self.times, self.values, s) for s in new_times])
        return DiscretePath(grid, vals, self.origin, self.anchored)

    def stopped_at(self, t: float) -> "DiscretePath":
        """Path frozen at its time-t value from t onward (flat extension)."""
        if t < self.origin - _TOL or t > self.horizon + _TOL:
            raise DomainError("stop time outside the path's span")
        p = self.on_refined([t])
        times = p.times
        vals = p.values.copy()
        vals[times > t + _TOL] = p.value(t)
        return p.replace_values(vals)

    def flat_bump(self, t: float, bump) -> "DiscretePath":
        """Add a constant vector to the path on [t, T] (vertical bump).

        A knot is inserted just before t so the bump ramps over a negligible
        width instead of a full grid interval; integral-type functionals then
        see the jump the bump is meant to model.
        """
        bump = np.atleast_1d(np.asarray(bump, dtype=float))
        jump_eps = 1e-9
        refine = [t] if t - jump_eps <= self.origin + _TOL else [t - jump_eps, t]
        p = self.on_refined(refine)
        vals = p.values.copy()
        vals[p.times >= t - _TOL] += bump
        still_anchored = t > self.origin + _TOL
        return p.replace_values(vals, anchored=still_anchored and p.anchored)


def seminorm(path: DiscretePath, t: float) -> float:
    """sup_{s <= t} |path(s)|, exact over knots plus the interpolated endpoint."""
    if t < path.origin - _TOL or t > path.horizon + _TOL:
        raise DomainError(f"time {t} outside [{path.origin}, {path.horizon}]")
    times = path.times
    mask = times <= t + _TOL
    cand = np.linalg.norm(path.values[mask], axis=1)
    return float(max(cand.max(initial=0.0), np.linalg.norm(path.value(t))))


def dist_infty(t: float, omega: DiscretePath, t2: float, omega2: DiscretePath) -> float:
    """|t - t2| + sup_{s <= T} |omega(s ^ t) - omega2(s ^ t2)|.

    The sup is evaluated over the union of both knot sets plus the stop
    times, which is exact for piecewise-linear paths.
    """
    if omega.d != omega2.d:
        raise DomainError("dimension mismatch")
    if abs(omega.horizon - omega2.horizon) > _TOL:
        raise DomainError("horizon mismatch")
    grid = np.union1d(np.union1d(omega.times, omega2.times), [t, t2])
    sup = 0.0
    for s in grid:
        diff = omega.value(min(s, t)) - omega2.value(min(s, t2))
        sup = max(sup, float(np.linalg.norm(diff)))
    return abs(t - t2) + sup


def concat(omega: DiscretePath, s: float, omega2: DiscretePath) -> DiscretePath:
    """Concatenation: omega on [origin, s), then omega(s) + omega2 on [s, T]."""
    t = omega.origin
    if not (t - _TOL <= s <= omega.horizon + _TOL):
        raise DomainError("junction time outside the head path's span")
    if abs(omega2.origin - s) > _TOL:
        raise DomainError("tail path must start at the junction time")
    if omega.d != omega2.d:
        raise DomainError("dimension mismatch")
    anchor = omega.value(s)
    head_knots = omega.grid.knots[omega.grid.knots <= s + _TOL]
    merged = np.union1d(np.concatenate([head_knots, [s]]), omega2.times)
    keep = np.concatenate([[True], np.diff(merged) > _TOL])
    grid = TimeGrid(merged[keep])
    times = grid.knots[grid.knots >= t - _TOL]
    vals = np.empty((times.size, omega.d))
    for i, r in enumerate(times):
        vals[i] = omega.value(r) if r < s - _TOL else anchor + omega2.value(r)
    return DiscretePath(grid, vals, t)


class ShiftedFunctional:
    """X^{s,omega}: evaluates the base functional on the concatenated path."""

    def __init__(self, base, s: float, omega: DiscretePath):
        # flatten nested shifts: (X^{s,w})^{r,w'} = X^{r, w ox_s w'}
        if isinstance(base, ShiftedFunctional):
            omega = concat(base.prefix, base.s, omega)
            base = base.base
        self.base = base
        self.prefix = omega
        self.s = s

    def __call__(self, r: float, omega2: DiscretePath) -> float:
        return self.base(r, concat(self.prefix, self.s, omega2))


def shift_functional(x, s: float, omega: DiscretePath) -> ShiftedFunctional:
    """Progressively measurable shift: (shift x)(r, w') = x(r, omega ox_s w')."""
    return ShiftedFunctional(x, s, omega)


@dataclass(frozen=True)
class HittingTimeSpec:
    """First-exit stopping time: convex-domain exit with a time cap, or the
    radius-eps variant whose cap is eps itself (in time units past the origin).
    """

    kind: str
    eps: float = 0.0
    normals: np.ndarray | None = None
    offsets: np.ndarray | None = None
    cap: float = 0.0

    @staticmethod
    def radius(eps: float) -> "HittingTimeSpec":
        if eps <= 0:
            raise DomainError("radius must be positive")
        return HittingTimeSpec(kind="radius", eps=float(eps))

    @staticmethod
    def domain(normals, offsets, cap: float) -> "HittingTimeSpec":
        normals = np.atleast_2d(np.asarray(normals, dtype=float))
        offsets = np.atleast_1d(np.asarray(offsets, dtype=float))
        if np.any(offsets <= 0):
            raise DomainError("the origin must lie strictly inside the domain")
        if cap <= 0:
            raise DomainError("time cap must be positive")
        normals = normals.copy()
        offsets = offsets.copy()
        normals.setflags(write=False)
        offsets.setflags(write=False)
        return HittingTimeSpec(kind="domain", normals=normals, offsets=offsets, cap=float(cap))

    @staticmethod
    def ball_domain(radius: float, d: int, cap: float, n_facets: int = 16) -> "HittingTimeSpec":
        """Polytope approximation of a centered ball (inscribed: facets tangent)."""
        if d == 1:
            normals = np.array([[1.0], [-1.0]])
        else:
            ang = np.linspace(0, 2 * np.pi, n_facets, endpoint=False)
            normals = np.zeros((n_facets, d))
            normals[:, 0] = np.cos(ang)
            normals[:, 1] = np.sin(ang)
        return HittingTimeSpec.domain(normals, np.full(len(normals), radius), cap)

    def intersect(self, other: "HittingTimeSpec") -> "HittingTimeSpec":
        """Domain-variant intersection; the hitting time is the min of the two."""
        if self.kind != "domain" or other.kind != "domain":
            raise DomainError("intersection is defined for domain specs")
        return HittingTimeSpec.domain(
            np.vstack([self.normals, other.normals]),
            np.concatenate([self.offsets, other.offsets]),
            min(self.cap, other.cap),
        )

    def cap_time(self, origin: float, horizon: float) -> float:
        if self.kind == "radius":
            return min(origin + self.eps, horizon)
        if self.cap <= origin + _TOL:
            raise DomainError("domain cap must lie after the path origin")
        return min(self.cap, horizon)

    def exit_indices(self, values: np.ndarray) -> np.ndarray:
        """First exiting knot index per path (values: (n, m, d)); m if none."""
        if self.kind == "radius":
            return _kernels.first_exit_radius(values, self.eps)
        return _kernels.first_exit_halfspaces(values, self.normals, self.offsets)

    def evaluate_batch(self, times: np.ndarray, values: np.ndarray, origin: float = 0.0) -> np.ndarray:
        n, m, _ = values.shape
        cap = self.cap_time(origin, float(times[-1]))
        idx = self.exit_indices(values)
        out = np.where(idx < m, times[np.minimum(idx, m - 1)], cap)
        return np.minimum(out, cap)

    def evaluate(self, path: DiscretePath) -> float:
        times = path.times
        batch = path.values[None, :, :]
        return float(self.evaluate_batch(times, np.ascontiguousarray(batch), path.origin)[0])


def hitting_time(spec: HittingTimeSpec, omega: DiscretePath) -> float:
    """Discrete hitting time: first knot whose value satisfies the exit
    condition, capped; never fires between knots (documented one-step bias).
    """
    return spec.evaluate(omega)


def running_max(omega: DiscretePath, t: float) -> float:
    """max_{s <= t} omega(s) for scalar paths."""
    if omega.d != 1:
        raise DomainError("running max is defined for d = 1")
    if t < omega.origin - _TOL or t > omega.horizon + _TOL:
        raise DomainError("time outside the path's span")
    mask = omega.times <= t + _TOL
    head = omega.values[mask, 0]
    return float(max(head.max(initial=-np.inf), omega.value(t)[0]))


def path_to_csv(path: DiscretePath) -> str:
    buf = io.StringIO()
    cols = ",".join(f"x{i + 1}" for i in range(path.d))
    buf.write(f"t,{cols}\n")
    for t, row in zip(path.times, path.values):
        buf.write(",".join([repr(float(t))] + [repr(float(v)) for v in row]) + "\n")
    return buf.getvalue()


def path_from_csv(text: str) -> DiscretePath:
    lines = [ln for ln in text.strip().splitlines() if ln and not ln.startswith("#")]
    rows = [[float(v) for v in ln.split(",")] for ln in lines[1:]]
    arr = np.asarray(rows)
    times, values = arr[:, 0], arr[:, 1:]
    return DiscretePath.from_knots(times, values, origin=float(times[0]))
