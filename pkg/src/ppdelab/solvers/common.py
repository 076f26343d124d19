"""Shared solver plumbing: feature simulation, regression bases, surrogates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..features import FeatureSpec, FeatureState
from ..measures import interval_noise
from ..pathspace import DomainError, TimeGrid

FORWARD_CELL_BUDGET = 60_000_000  # paths x steps guard for stored-layer solves


@dataclass
class SolverOutput:
    scheme: str
    problem: str
    value: float
    stderr: float
    diagnostics: dict = field(default_factory=dict)
    surrogate: object = None
    anchor_values: list = field(default_factory=list)


def subgrid_times(grid: TimeGrid, t0: float) -> np.ndarray:
    times = grid.knots[grid.knots >= t0 - 1e-12]
    if abs(times[0] - t0) > 1e-12:
        raise DomainError(f"anchor time {t0} must be a grid knot")
    return times


def sigma_apply(sigma, t: float, state: FeatureState, db: np.ndarray) -> np.ndarray:
    """sigma(t, state) applied to the Brownian increments (n, d)."""
    if np.isscalar(sigma) or isinstance(sigma, (int, float)):
        return float(sigma) * db
    s = np.asarray(sigma(t, state), dtype=float)
    if s.ndim == 1:  # scalar per path
        return s[:, None] * db
    return np.einsum("nij,nj->ni", s, db)


def forward_states(sigma, spec: FeatureSpec, times: np.ndarray, n: int, seed: int,
                   init: FeatureState | None = None, noise: str = "gaussian",
                   store: bool = True):
    """Euler forward pass dX = sigma(t, X-prefix) dB tracking features.

    Returns the list of per-layer states (or just the final state when
    store=False) plus the raw Brownian increments (n, m-1, d).
    """
    d = 1 if init is None else init.d
    m = len(times)
    if store and n * m > FORWARD_CELL_BUDGET:
        raise DomainError("stored forward pass exceeds the cell budget; reduce n or steps")
    if init is None:
        state = FeatureState.initial(spec, n, d, float(times[0]))
    elif init.n == 1:
        state = init.repeat(n)
    elif init.n == n:
        state = init
    else:
        raise DomainError("anchor state rows must be 1 or match the path count")
    states = [state] if store else None
    dbs = np.empty((n, m - 1, d)) if store else None
    for j in range(m - 1):
        dt = times[j + 1] - times[j]
        zeta = interval_noise(seed, j, n, d, noise)
        db = np.sqrt(dt) * zeta
        dx = sigma_apply(sigma, float(times[j]), state, db)
        state = state.advance(float(times[j + 1]), state.x + dx)
        if store:
            states.append(state)
            dbs[:, j, :] = db
    if store:
        return states, dbs
    return state, None


def basis_matrix(state: FeatureState, spec: FeatureSpec) -> np.ndarray:
    """Polynomials of degree <= 2 in the tracked prefix statistics."""
    cols = [np.ones(state.n)]
    feats = [state.x[:, k] for k in range(state.d)]
    if spec.track_max:
        feats += [state.xmax[:, k] for k in range(state.d)]
    if spec.track_min:
        feats += [state.xmin[:, k] for k in range(state.d)]
    if spec.track_integral:
        feats += [state.integral[:, k] for k in range(state.d)]
    for ts in spec.snapshot_times:
        snap = state.snapshot(ts)
        feats += [snap[:, k] for k in range(state.d)]
    for f in feats:
        cols.append(f)
    for i, f in enumerate(feats):
        cols.append(f * f)
        for g in feats[i + 1:]:
            cols.append(f * g)
    return np.column_stack(cols)


class RegressionSurrogate:
    """Per-layer regression coefficients: an evaluable value field u(t, state)."""

    def __init__(self, times: np.ndarray, spec: FeatureSpec, coeffs: list,
                 terminal=None):
        self.times = np.asarray(times)
        self.spec = spec
        self.coeffs = coeffs          # coeffs[i] for layer i, None where unfit
        self.terminal = terminal      # exact terminal evaluator

    def layer_of(self, t: float) -> int:
        return int(np.argmin(np.abs(self.times - t)))

    def evaluate(self, t: float, state: FeatureState) -> np.ndarray:
        i = self.layer_of(t)
        if self.terminal is not None and i == len(self.times) - 1:
            return np.asarray(self.terminal(state), dtype=float)
        c = self.coeffs[i]
        if c is None:
            raise DomainError(f"no regression fit at layer {i}")
        return basis_matrix(state, self.spec) @ c

    def as_functional(self):
        """(t, state) -> (n,) adapter for the viscosity checker."""
        return lambda t, state: self.evaluate(t, state)


def fit_layer(state: FeatureState, spec: FeatureSpec, target: np.ndarray):
    """Least-squares projection of the target onto the layer basis."""
    design = basis_matrix(state, spec)
    coeff, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
    return coeff, design @ coeff, rank, design.shape[1]
