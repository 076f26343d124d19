"""Bounded-characteristic control processes and path simulation.

A control is a piecewise-constant (drift, diffusion) pair per grid interval
with |alpha| <= L and tr(beta^2)/2 <= L. Simulating the Euler scheme under a
control induces one member of the semimartingale family with bound L; finite
lattices of such controls are what the nonlinear expectations optimize over.

Noise streams are counter-based (Philox), keyed by (seed, interval index),
with path i reading row i of the interval's block. Output is therefore a
pure function of (control, n, seed) - independent of worker count or of any
other simulation happening in the process.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .pathspace import DiscretePath, DomainError, TimeGrid

_REL_TOL = 1e-9


@dataclass(frozen=True)
class ControlProcess:
    """Piecewise-constant drift/diffusion pair on a grid, bounded by L."""

    grid: TimeGrid
    alphas: np.ndarray  # (m-1, d)
    betas: np.ndarray   # (m-1, d, d), symmetric PSD
    bound: float

    def __post_init__(self):
        alphas = np.ascontiguousarray(np.asarray(self.alphas, dtype=float))
        betas = np.ascontiguousarray(np.asarray(self.betas, dtype=float))
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "betas", betas)
        m = self.grid.knots.size - 1
        if alphas.shape[0] != m or betas.shape[0] != m:
            raise DomainError("one (drift, diffusion) pair per grid interval")
        if self.bound <= 0:
            raise DomainError("bound L must be positive")
        L = self.bound * (1 + _REL_TOL) + _REL_TOL
        if np.any(np.linalg.norm(alphas, axis=1) > L):
            raise DomainError("drift norm exceeds the bound L")
        if np.any(np.abs(betas - np.swapaxes(betas, 1, 2)) > 1e-9):
            raise DomainError("diffusions must be symmetric")
        halftrace = 0.5 * np.einsum("ijk,ikj->i", betas, betas)
        if np.any(halftrace > L):
            raise DomainError("half-trace of squared diffusion exceeds the bound L")

    @property
    def d(self) -> int:
        return self.alphas.shape[1]

    @staticmethod
    def constant(grid: TimeGrid, alpha, beta, bound: float) -> "ControlProcess":
        alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
        d = alpha.size
        beta = np.asarray(beta, dtype=float)
        if beta.ndim == 0:
            beta = float(beta) * np.eye(d)
        m = grid.knots.size - 1
        return ControlProcess(grid, np.tile(alpha, (m, 1)), np.tile(beta, (m, 1, 1)), bound)


class PathBatch:
    """A batch of simulated paths sharing one grid, stored as (n, m, d)."""

    def __init__(self, grid: TimeGrid, values: np.ndarray, origin: float = 0.0):
        self.grid = grid
        self.values = np.ascontiguousarray(values)
        self.origin = origin

    @property
    def times(self) -> np.ndarray:
        return self.grid.knots

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[2]

    def path(self, i: int) -> DiscretePath:
        return DiscretePath(self.grid, self.values[i], self.origin)

    def __iter__(self):
        return (self.path(i) for i in range(self.n))

    def to_csv(self) -> str:
        cols = ",".join(f"x{i + 1}" for i in range(self.d))
        lines = [f"path_id,t,{cols}"]
        for i in range(self.n):
            for t, row in zip(self.times, self.values[i]):
                lines.append(",".join([str(i), repr(float(t))] + [repr(float(v)) for v in row]))
        return "\n".join(lines) + "\n"


def interval_noise(seed: int, interval: int, n: int, d: int, kind: str = "gaussian") -> np.ndarray:
    """Counter-based draw for one interval: row i belongs to path i."""
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, interval], dtype=np.uint64)))
    if kind == "gaussian":
        return rng.standard_normal((n, d))
    if kind == "rademacher":
        return rng.integers(0, 2, size=(n, d)).astype(float) * 2.0 - 1.0
    raise DomainError(f"unknown noise kind {kind!r}")


def control_increments(control: ControlProcess, noise: np.ndarray) -> np.ndarray:
    """Euler increments alpha dt + beta sqrt(dt) zeta from raw noise (n, m-1, d)."""
    dts = np.diff(control.grid.knots)
    drift = control.alphas * dts[:, None]
    diffu = np.einsum("jkl,njl->njk", control.betas, noise) * np.sqrt(dts)[None, :, None]
    return drift[None, :, :] + diffu


def simulate_paths(control: ControlProcess, n: int, seed: int, noise: str = "gaussian") -> PathBatch:
    """Euler-scheme batch under a control; deterministic in (control, n, seed)."""
    if n < 1:
        raise DomainError("need at least one path")
    m = control.grid.knots.size - 1
    zeta = np.empty((n, m, control.d))
    for j in range(m):
        zeta[:, j, :] = interval_noise(seed, j, n, control.d, noise)
    inc = control_increments(control, zeta)
    values = _kernels.euler_paths(np.ascontiguousarray(inc))
    return PathBatch(control.grid, values)


def rademacher_enumeration(n_steps: int, d: int, cap: int = 1 << 14):
    """All sign paths for exact small-tree computations: (2^(steps*d), steps, d)."""
    total = 2 ** (n_steps * d)
    if total > cap:
        raise DomainError(f"exact enumeration of {total} sign paths exceeds the cap {cap}")
    combos = np.array(list(itertools.product((-1.0, 1.0), repeat=n_steps * d)))
    return combos.reshape(total, n_steps, d)


@dataclass(frozen=True)
class ControlLattice:
    """Finite set of constant (alpha, beta) pairs inside the bound-L family."""

    bound: float
    alphas: np.ndarray  # (k, d)
    betas: np.ndarray   # (k, d, d)
    labels: tuple

    @property
    def size(self) -> int:
        return self.alphas.shape[0]

    @property
    def d(self) -> int:
        return self.alphas.shape[1]

    def member(self, i: int, grid: TimeGrid) -> ControlProcess:
        return ControlProcess.constant(grid, self.alphas[i], self.betas[i], self.bound)

    def members(self):
        return list(zip(self.alphas, self.betas))

    def validate_members(self, bound: float | None = None) -> bool:
        """Every member obeys the ControlProcess bounds (for `bound`, default own L)."""
        L = (self.bound if bound is None else bound) * (1 + _REL_TOL) + _REL_TOL
        ok_a = np.all(np.linalg.norm(self.alphas, axis=1) <= L)
        ok_b = np.all(0.5 * np.einsum("ijk,ikj->i", self.betas, self.betas) <= L)
        return bool(ok_a and ok_b)

    def union(self, other: "ControlLattice") -> "ControlLattice":
        keys = {}
        for a, b, lab in zip(
            np.vstack([self.alphas, other.alphas]),
            np.vstack([self.betas, other.betas]),
            self.labels + other.labels,
        ):
            keys.setdefault((tuple(np.round(a, 12)), tuple(np.round(b.ravel(), 12))), (a, b, lab))
        alphas = np.array([v[0] for v in keys.values()])
        betas = np.array([v[1] for v in keys.values()])
        labels = tuple(v[2] for v in keys.values())
        return ControlLattice(max(self.bound, other.bound), alphas, betas, labels)


def _drift_set(bound: float, d: int, n_magnitudes: int) -> list[np.ndarray]:
    if d == 1:
        mags = np.linspace(-bound, bound, max(2 * n_magnitudes - 1, 3))
        return [np.array([m]) for m in mags]
    drifts = [np.zeros(d)]
    for mag in np.linspace(0.0, bound, n_magnitudes)[1:]:
        for k in range(d):
            for sign in (1.0, -1.0):
                v = np.zeros(d)
                v[k] = sign * mag
                drifts.append(v)
    return drifts


def build_lattice(bound: float, d: int, n_magnitudes: int = 5, n_scalings: int = 5) -> ControlLattice:
    """Drift x diffusion product lattice containing the extreme points
    alpha in {0, +-L e_k} and beta in {0, sqrt(2L/d) I}.
    """
    if bound <= 0:
        raise DomainError("bound L must be positive")
    if n_magnitudes < 2 or n_scalings < 2:
        raise DomainError("refinement must keep the extreme points (sizes >= 2)")
    drifts = _drift_set(bound, d, n_magnitudes)
    beta_full = np.sqrt(2.0 * bound / d)
    scalings = np.linspace(0.0, 1.0, n_scalings)
    alphas, betas, labels = [], [], []
    for a in drifts:
        for s in scalings:
            alphas.append(a)
            betas.append(s * beta_full * np.eye(d))
            labels.append(f"a={np.round(a, 6).tolist()},b={round(s * beta_full, 6)}I")
    return ControlLattice(bound, np.array(alphas), np.array(betas), tuple(labels))


def first_order_lattice(bound: float, d: int, refinement: int = 3) -> ControlLattice:
    """Drift-only lattice (beta = 0): simulated paths are Lipschitz-L."""
    if bound <= 0:
        raise DomainError("bound L must be positive")
    if d == 1:
        drifts = [np.array([m]) for m in np.linspace(-bound, bound, max(refinement, 2))]
    else:
        drifts = _drift_set(bound, d, max((refinement + 1) // 2, 2))
    alphas = np.array(drifts)
    betas = np.zeros((len(drifts), d, d))
    labels = tuple(f"a={np.round(a, 6).tolist()},b=0" for a in drifts)
    return ControlLattice(bound, alphas, betas, labels)


def refine_lattice(lat: ControlLattice) -> ControlLattice:
    """Superset refinement: unions in a finer lattice, so estimates are monotone."""
    if bool(np.all(lat.betas == 0.0)):
        finer = first_order_lattice(lat.bound, lat.d, refinement=2 * lat.size - 1)
    else:
        finer = build_lattice(lat.bound, lat.d, n_magnitudes=9, n_scalings=9)
    return lat.union(finer)
