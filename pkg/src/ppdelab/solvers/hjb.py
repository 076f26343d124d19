"""Control-lattice solver for sup-form (HJB) equations.

The generator is a sup over a finite control set of one-step linear
generators; backward induction maximizes per node. The tree mode is the
recombining Rademacher engine (exact pair-average expectations, feature
recombination). The regression mode handles finer grids for problems whose
coefficients depend on the current value only: it fits a polynomial value
function per layer and takes the per-control expectation by Gauss-Hermite
quadrature on the fit, maximizing per path and per step.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..features import FeatureSpec, FeatureState
from ..measures import interval_noise
from ..pathspace import DomainError, TimeGrid
from .common import SolverOutput, subgrid_times
from .tree import tree_solve


@dataclass(frozen=True)
class HJBProblem:
    name: str
    horizon: float
    controls: tuple                 # finite control set K
    sigma: object                   # (t, state, k) -> (n,) volatilities
    driver: object                  # None or (t, state, y, z, k) -> (n,)
    terminal: object
    feature_spec: FeatureSpec


def uncertain_volatility_problem(sig_lo: float, sig_hi: float, terminal,
                                 spec: FeatureSpec, horizon: float = 1.0,
                                 name: str = "uncertain-vol") -> HJBProblem:
    if not 0 < sig_lo < sig_hi:
        raise DomainError("need 0 < sigma_low < sigma_high")
    return HJBProblem(
        name=name, horizon=horizon, controls=(sig_lo, sig_hi),
        sigma=lambda t, state, k: np.full(state.n, float(k)),
        driver=None, terminal=terminal, feature_spec=spec,
    )


def solve_hjb(problem: HJBProblem, grid: TimeGrid, mode: str = "tree",
              n_paths: int = 0, seed: int = 0, basis_degree: int = 4,
              gh_points: int = 12) -> SolverOutput:
    t_start = time.perf_counter()
    times = subgrid_times(grid, 0.0)
    if abs(times[-1] - problem.horizon) > 1e-9:
        raise DomainError("grid horizon differs from the problem horizon")
    if mode == "tree":
        value, diag = tree_solve(list(problem.controls), problem.sigma,
                                 problem.driver, problem.terminal, times,
                                 problem.feature_spec)
        diag["runtime_ms"] = 1000.0 * (time.perf_counter() - t_start)
        return SolverOutput("hjb-tree", problem.name, value, 0.0, diag)
    if mode != "regression":
        raise DomainError(f"unknown mode {mode!r}")
    return _solve_hjb_regression(problem, times, n_paths, seed, basis_degree,
                                 gh_points, t_start)


def _solve_hjb_regression(problem, times, n_paths, seed, degree, gh_points, t_start):
    spec = problem.feature_spec
    if spec.track_max or spec.track_min or spec.track_integral or spec.snapshot_times:
        raise DomainError("regression mode supports current-value problems only")
    if n_paths < 10:
        raise DomainError("regression mode needs a forward cloud (n_paths)")
    m = len(times) - 1
    # exploration cloud: uniformly random control per (path, step)
    x = np.zeros((n_paths, 1))
    xs = [x]
    for j in range(m):
        dt = float(times[j + 1] - times[j])
        zeta = interval_noise(seed, j, n_paths, 1, "gaussian")
        pick = interval_noise(seed, j + 1_000_003, n_paths, 1, "gaussian")
        ki = (np.abs(pick[:, 0]) * 7919).astype(int) % len(problem.controls)
        state = FeatureState(spec, float(times[j]), x)
        sig = np.empty(n_paths)
        for ci, k in enumerate(problem.controls):
            sel = ki == ci
            if np.any(sel):
                sig[sel] = np.asarray(problem.sigma(float(times[j]), state, k))[sel] \
                    if not np.isscalar(problem.sigma) else float(problem.sigma)
        x = x + (sig * np.sqrt(dt) * zeta[:, 0])[:, None]
        xs.append(x)
    nodes, weights = np.polynomial.hermite_e.hermegauss(gh_points)
    weights = weights / weights.sum()  # probabilists' weights normalize to 1
    y = np.asarray(problem.terminal(FeatureState(spec, float(times[-1]), xs[-1])), dtype=float)
    for j in range(m - 1, -1, -1):
        dt = float(times[j + 1] - times[j])
        c = np.polynomial.polynomial.polyfit(xs[j + 1][:, 0], y, degree)
        xj = xs[j][:, 0]
        state = FeatureState(spec, float(times[j]), xs[j])
        best = None
        for k in problem.controls:
            sig = np.asarray(problem.sigma(float(times[j]), state, k), dtype=float)
            sig = np.broadcast_to(sig, xj.shape)
            grid_pts = xj[:, None] + sig[:, None] * np.sqrt(dt) * nodes[None, :]
            vals = np.polynomial.polynomial.polyval(grid_pts, c, tensor=False)
            cond = vals @ weights
            if problem.driver is not None:
                z = (vals * nodes[None, :]) @ weights / np.sqrt(dt)
                cand = cond + dt * np.asarray(problem.driver(float(times[j]), state, cond, z[:, None], k), dtype=float)
            else:
                cand = cond
            best = cand if best is None else np.maximum(best, cand)
        y = best
    value = float(np.mean(y))
    stderr = float(np.std(y, ddof=1) / np.sqrt(len(y)))
    return SolverOutput(
        "hjb-regression", problem.name, value, stderr,
        {"n": n_paths, "steps": m, "degree": degree, "gh_points": gh_points,
         "runtime_ms": 1000.0 * (time.perf_counter() - t_start)},
    )
