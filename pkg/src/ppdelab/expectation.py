"""Upper/lower nonlinear expectations and the induced capacity.

The sup/inf over the bounded-characteristic family is approximated by a max/
min over a finite control lattice, evaluated by Monte Carlo with common
random numbers: every lattice member sees the same driving noise. That makes
monotonicity, sublinearity and duality hold exactly at the estimator level
(max over the same finite index set), not just asymptotically. Optimizing
over a finite subset biases the upper expectation down and the lower one up;
estimates carry their bias direction.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .measures import (ControlLattice, PathBatch, DomainError, interval_noise,
                       rademacher_enumeration)
from .pathspace import HittingTimeSpec, TimeGrid

# Constant of the fourth-moment capacity bound
#   sup_P P(||B||_delta >= eps) <= C * L^4 * eps^-4 * delta^2,
# Monte Carlo calibrated once over (eps, delta, L) in [0.125, 0.5] x
# [delta <= eps] x {0.5, 1, 2, 4} with a 1.5x safety factor; the calibration
# is re-checked by tests/test_expectation.py.
CAPACITY_BOUND_C = 40.0


class EvaluationError(ValueError):
    """A functional returned a non-finite value on a simulated path."""


@dataclass(frozen=True)
class ExpectationEstimate:
    value: float
    stderr: float
    control_label: str
    bias: str  # lower-bound-of-sup | upper-bound-of-inf | exact-tree

    def __post_init__(self):
        if self.stderr < 0:
            raise DomainError("standard error must be nonnegative")


def pathwise(f):
    """Adapt a per-path functional to batch evaluation (slow fallback)."""

    def batch_eval(batch: PathBatch) -> np.ndarray:
        return np.array([f(batch.path(i)) for i in range(batch.n)])

    return batch_eval


def _draw_noise(grid: TimeGrid, n: int, d: int, seed: int, noise: str):
    m = grid.knots.size - 1
    if noise == "exact-tree":
        zeta = rademacher_enumeration(m, d)
        weights = np.full(zeta.shape[0], 1.0 / zeta.shape[0])
        return zeta, weights
    zeta = np.empty((n, m, d))
    for j in range(m):
        zeta[:, j, :] = interval_noise(seed, j, n, d, noise)
    return zeta, None


def _member_values(xi, lattice, grid, zeta):
    """xi evaluated under every lattice member on the shared noise."""
    dts = np.diff(grid.knots)
    sqdt = np.sqrt(dts)
    out = []
    for a, b in lattice.members():
        inc = a[None, None, :] * dts[None, :, None]
        inc = inc + np.einsum("kl,njl->njk", b, zeta) * sqdt[None, :, None]
        values = _kernels.euler_paths(np.ascontiguousarray(inc))
        batch = PathBatch(grid, values)
        vals = np.asarray(xi(batch), dtype=float)
        if vals.shape != (batch.n,):
            raise DomainError("functional must return one value per path")
        if not np.all(np.isfinite(vals)):
            bad = int(np.argmax(~np.isfinite(vals)))
            raise EvaluationError(f"non-finite functional value on path {bad}")
        out.append(vals)
    return out


def upper_expectation(xi, lattice: ControlLattice, grid: TimeGrid, n: int, seed: int,
                      noise: str = "gaussian", workers: int = 1) -> ExpectationEstimate:
    """max over lattice members of the Monte Carlo mean of xi (CRN across members)."""
    zeta, weights = _draw_noise(grid, n, lattice.d, seed, noise)
    if workers > 1:
        dts = np.diff(grid.knots)
        sqdt = np.sqrt(dts)

        def one(member):
            a, b = member
            inc = a[None, None, :] * dts[None, :, None]
            inc = inc + np.einsum("kl,njl->njk", b, zeta) * sqdt[None, :, None]
            batch = PathBatch(grid, _kernels.euler_paths(np.ascontiguousarray(inc)))
            return np.asarray(xi(batch), dtype=float)

        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_member = list(pool.map(one, lattice.members()))
        for vals in per_member:
            if not np.all(np.isfinite(vals)):
                raise EvaluationError(f"non-finite functional value on path {int(np.argmax(~np.isfinite(vals)))}")
    else:
        per_member = _member_values(xi, lattice, grid, zeta)
    if weights is None:
        # exactly rounded means: constants are preserved to the last bit
        means = np.array([math.fsum(v) / len(v) for v in per_member])
    else:
        means = np.array([v @ weights for v in per_member])
    best = int(np.argmax(means))
    if weights is None:
        stderr = float(per_member[best].std(ddof=1) / np.sqrt(len(per_member[best])))
        bias = "lower-bound-of-sup"
    else:
        stderr = 0.0
        bias = "exact-tree"
    return ExpectationEstimate(float(means[best]), stderr, lattice.labels[best], bias)


def lower_expectation(xi, lattice: ControlLattice, grid: TimeGrid, n: int, seed: int,
                      noise: str = "gaussian", workers: int = 1) -> ExpectationEstimate:
    """min over members; implemented literally as -upper(-xi) so duality is exact."""

    def neg(batch):
        return -np.asarray(xi(batch), dtype=float)

    est = upper_expectation(neg, lattice, grid, n, seed, noise, workers)
    bias = "exact-tree" if est.bias == "exact-tree" else "upper-bound-of-inf"
    return ExpectationEstimate(-est.value, est.stderr, est.control_label, bias)


def capacity(event, lattice: ControlLattice, grid: TimeGrid, n: int, seed: int,
             noise: str = "gaussian", workers: int = 1) -> ExpectationEstimate:
    """Upper expectation of the event's indicator (event: batch -> bool array)."""

    def indicator(batch):
        return np.asarray(event(batch), dtype=float)

    return upper_expectation(indicator, lattice, grid, n, seed, noise, workers)


def sup_norm_event(eps: float, delta: float):
    """The event ||B||_delta >= eps (running sup norm up to time delta)."""

    def event(batch: PathBatch) -> np.ndarray:
        mask = batch.times <= delta + 1e-12
        seg = batch.values[:, mask, :]
        norms = np.sqrt(np.einsum("ijk,ijk->ij", seg, seg))
        return norms.max(axis=1) >= eps

    return event


def hitting_functional(spec: HittingTimeSpec):
    """The hitting time itself as a terminal functional."""

    def xi(batch: PathBatch) -> np.ndarray:
        return spec.evaluate_batch(batch.times, batch.values, batch.origin)

    return xi


@dataclass(frozen=True)
class PositivityReport:
    passed: bool
    margin: float
    value: float
    threshold: float
    delta: float
    estimate: ExpectationEstimate


def lemma_delta(eps: float, bound: float, c: float = CAPACITY_BOUND_C) -> float:
    """The proof's quantitative threshold time: min(eps^2 / (sqrt(2C) L^2), eps)."""
    return min(eps ** 2 / (np.sqrt(2.0 * c) * bound ** 2), eps)


def positivity_bound_check(eps: float, bound: float, lattice: ControlLattice, grid: TimeGrid,
                           n: int, seed: int, noise: str = "gaussian") -> PositivityReport:
    """Checks that the lower expectation of the radius-eps hitting time clears
    the strictly positive threshold delta/2 implied by the capacity bound.
    """
    if not (0 < eps <= grid.horizon):
        raise DomainError("eps must lie in (0, T]")
    spec = HittingTimeSpec.radius(eps)
    est = lower_expectation(hitting_functional(spec), lattice, grid, n, seed, noise)
    delta = lemma_delta(eps, bound)
    threshold = 0.5 * delta
    margin = est.value - threshold
    return PositivityReport(margin > 0, margin, est.value, threshold, delta, est)


def calibrate_capacity_constant(grid: TimeGrid, n: int, seed: int,
                                eps_list=(0.125, 0.25, 0.5),
                                ratio_list=(0.25, 0.5, 1.0),
                                bounds=(0.5, 1.0, 2.0, 4.0),
                                safety: float = 1.5) -> float:
    """Brute-force calibration of the capacity-bound constant C:
    max over the grid of estimate * eps^4 / (L^4 delta^2), times a safety factor.
    """
    worst = 0.0
    for L in bounds:
        lat = build_default_lattice(L, 1)
        for eps in eps_list:
            for r in ratio_list:
                delta = r * eps
                est = capacity(sup_norm_event(eps, delta), lat, grid, n, seed)
                c = est.value * eps ** 4 / (L ** 4 * delta ** 2)
                worst = max(worst, c)
    return safety * worst


def build_default_lattice(bound: float, d: int) -> ControlLattice:
    from .measures import build_lattice

    return build_lattice(bound, d)
