"""Hitting-time envelope scheme (unit diffusion).

Every path argument of the terminal functional and the driver is replaced by
its exit skeleton: the piecewise-linear interpolation through the successive
radius-eps exit times, ending at the true terminal point. Along the way the
driver sees the skeleton stopped at the last completed exit (the pending
segment is not yet determined, which is exactly what keeps the substitution
adapted). The skeleton stays within 2 eps of the path in sup norm (plus one
grid step of exit overshoot), so if rho0 is the modulus of continuity of the
data in the path argument, the scheme's value psi sits within
rho0(2 eps) (1 + T) of the true value, and the upper/lower envelopes

    psi +- rho0(2 eps) (1 + T - t)

bracket it with a gap of exactly 2 rho0(2 eps) (1 + T) at time zero.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .. import _kernels
from ..features import FeatureSpec, FeatureState
from ..measures import interval_noise
from ..pathspace import DiscretePath, DomainError, TimeGrid
from .common import fit_layer
from .semilinear import SemilinearProblem

SKELETON_CELL_BUDGET = 40_000_000


def exit_skeleton(path: DiscretePath, eps: float) -> DiscretePath:
    """Piecewise-linear interpolation through the successive radius-eps exit
    knots, with a final knot at (T, path(T)). Oscillation below eps yields
    the straight chord.
    """
    if eps <= 0:
        raise DomainError("eps must be positive")
    values = np.ascontiguousarray(path.values[None, :, :])
    times = np.ascontiguousarray(path.times)
    anchor, _, _, _ = _kernels.skeleton_scan(values, times, eps)
    exits = np.unique(anchor[0])
    knot_idx = [int(i) for i in exits]
    if knot_idx[-1] != len(times) - 1:
        knot_idx.append(len(times) - 1)
    k_times = times[knot_idx]
    k_vals = path.values[knot_idx]
    return DiscretePath.from_knots(k_times, k_vals, origin=path.origin)


def skeleton_sup_distance(path: DiscretePath, eps: float) -> float:
    """sup_t |skeleton(t) - path(t)| over the union of knots (exact)."""
    from ..pathspace import dist_infty

    skel = exit_skeleton(path, eps)
    return dist_infty(path.horizon, path, path.horizon, skel)


@dataclass(frozen=True)
class PerronResult:
    psi: float
    upper: float
    lower: float
    gap: float
    stderr: float
    eps: float
    rho_2eps: float
    diagnostics: dict


def _skeleton_states(values: np.ndarray, times: np.ndarray, eps: float, spec: FeatureSpec):
    """Terminal skeleton state + per-layer stopped-skeleton feature arrays."""
    if spec.snapshot_times:
        raise DomainError("skeleton features do not support snapshot functionals")
    anchor, integral, high, low = _kernels.skeleton_scan(values, times, eps)
    n, m, d = values.shape
    rows = np.arange(n)
    a_last = anchor[:, -1]
    x_anchor = values[rows, a_last, :]
    t_anchor = times[a_last]
    x_term = values[:, -1, :]
    tail = ((times[-1] - t_anchor)[:, None]) * 0.5 * (x_anchor + x_term)
    term = FeatureState(
        spec, float(times[-1]), x_term.copy(),
        np.maximum(high[:, -1, :], x_term) if spec.track_max else None,
        np.minimum(low[:, -1, :], x_term) if spec.track_min else None,
        integral[:, -1, :] + tail if spec.track_integral else None,
    )
    return term, (anchor, integral, high, low)


def _stopped_state(j: int, values, times, scan, spec: FeatureSpec) -> FeatureState:
    """Skeleton stopped at the last exit <= t_j, extended flat to t_j."""
    anchor, integral, high, low = scan
    n = values.shape[0]
    rows = np.arange(n)
    aj = anchor[:, j]
    x_stop = values[rows, aj, :]
    t_a = times[aj]
    flat = (times[j] - t_a)[:, None] * x_stop
    return FeatureState(
        spec, float(times[j]), x_stop.copy(),
        high[:, j, :].copy() if spec.track_max else None,
        low[:, j, :].copy() if spec.track_min else None,
        (integral[:, j, :] + flat) if spec.track_integral else None,
    )


def perron_scheme(problem: SemilinearProblem, eps: float, grid: TimeGrid,
                  n_paths: int, seed: int) -> PerronResult:
    """Value of the skeleton-substituted equation plus the envelope bracket."""
    t_start = time.perf_counter()
    if not (np.isscalar(problem.sigma) and abs(float(problem.sigma) - 1.0) < 1e-12):
        raise DomainError("the envelope scheme is stated for unit diffusion")
    if problem.rho0 is None:
        raise DomainError("the problem must supply its modulus of continuity rho0")
    times = grid.knots
    if abs(times[-1] - problem.horizon) > 1e-9:
        raise DomainError("grid horizon differs from the problem horizon")
    m = len(times)
    if n_paths * m > SKELETON_CELL_BUDGET:
        raise DomainError("skeleton pass exceeds the cell budget")
    # simulate the unit-volatility batch (values materialized for the scan)
    d = 1
    inc = np.empty((n_paths, m - 1, d))
    for j in range(m - 1):
        dt = float(times[j + 1] - times[j])
        inc[:, j, :] = np.sqrt(dt) * interval_noise(seed, j, n_paths, d, "gaussian")
    values = _kernels.euler_paths(np.ascontiguousarray(inc))
    spec = problem.feature_spec
    term_state, scan = _skeleton_states(values, np.ascontiguousarray(times), eps, spec)
    xi = np.asarray(problem.terminal(term_state), dtype=float)
    if not np.all(np.isfinite(xi)):
        raise DomainError("non-finite terminal value on a skeleton")
    if problem.driver is None:
        psi = float(xi.mean())
        stderr = float(xi.std(ddof=1) / np.sqrt(n_paths))
        diag = {"n": n_paths, "steps": m - 1}
    else:
        # backward regression: basis on the actual-path features, driver fed
        # the stopped-skeleton features (adapted substitution)
        base_states = [FeatureState(spec, float(times[0]), np.zeros((n_paths, d)),
                                    np.zeros((n_paths, d)) if spec.track_max else None,
                                    np.zeros((n_paths, d)) if spec.track_min else None,
                                    np.zeros((n_paths, d)) if spec.track_integral else None)]
        for j in range(m - 1):
            base_states.append(base_states[-1].advance(float(times[j + 1]), values[:, j + 1, :]))
        y = xi
        target0 = y
        for j in range(m - 2, -1, -1):
            dt = float(times[j + 1] - times[j])
            _, y_hat, _, _ = fit_layer(base_states[j], spec, y)
            db = values[:, j + 1, :] - values[:, j, :]
            zt = y[:, None] * db / dt
            z_hat = np.empty_like(zt)
            for k in range(d):
                _, z_hat[:, k], _, _ = fit_layer(base_states[j], spec, zt[:, k])
            frozen = _stopped_state(j, values, times, scan, spec)
            y = y_hat + dt * np.asarray(problem.driver(float(times[j]), frozen, y_hat, z_hat), dtype=float)
            if j == 0:
                target0 = y
        psi = float(np.mean(y))
        stderr = float(np.std(target0, ddof=1) / np.sqrt(n_paths))
        diag = {"n": n_paths, "steps": m - 1, "regression": True}
    rho = float(problem.rho0(2.0 * eps))
    half = rho * (1.0 + problem.horizon)
    diag["runtime_ms"] = 1000.0 * (time.perf_counter() - t_start)
    return PerronResult(
        psi=psi, upper=psi + half, lower=psi - half, gap=2.0 * half,
        stderr=stderr, eps=eps, rho_2eps=rho, diagnostics=diag,
    )
