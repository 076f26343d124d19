"""Semilinear solver: regression Monte Carlo with an exact-tree mode.

The value is the initial node of the backward equation driven by the
terminal functional and the driver F(t, path, y, z), simulated under the
forward volatility field. The Monte Carlo mode runs least-squares backward
induction on prefix statistics (Gobet-Lemor-Warin style): conditional
expectations are projections on degree-2 polynomials of the tracked
features, z comes from the increment regression, and the driver enters
explicitly (optional Picard sweeps per step). With a zero driver the scheme
telescopes: the layer-0 value is exactly the sample mean of the terminal
functional, so no regression bias enters the reported value.

The tree mode routes through the recombining Rademacher engine with a
singleton control set and is exact up to the time discretization.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..features import FeatureSpec, FeatureState
from ..pathspace import DiscretePath, DomainError, TimeGrid
from .common import (RegressionSurrogate, SolverOutput, fit_layer,
                     forward_states, subgrid_times)
from .tree import tree_solve


@dataclass(frozen=True)
class SemilinearProblem:
    name: str
    horizon: float
    sigma: object                 # scalar, or (t, state) -> (n,) or (n, d, d)
    driver: object                # None (F = 0) or (t, state, y, z) -> (n,)
    terminal: object              # (state at T) -> (n,)
    feature_spec: FeatureSpec
    rho0: object = None           # modulus of continuity in the path argument
    lipschitz: float = 0.0        # driver Lipschitz constant (stability bound)
    c0: float = 1.0

    @staticmethod
    def from_oracle(entry) -> "SemilinearProblem":
        return SemilinearProblem(
            name=entry.name, horizon=entry.horizon, sigma=1.0, driver=None,
            terminal=entry.xi, feature_spec=entry.feature_spec, rho0=entry.rho0,
        )

    def with_driver(self, driver, lipschitz: float) -> "SemilinearProblem":
        return SemilinearProblem(self.name, self.horizon, self.sigma, driver,
                                 self.terminal, self.feature_spec, self.rho0,
                                 lipschitz, self.c0)


def _sigma_scalar_fn(sigma):
    if np.isscalar(sigma) or isinstance(sigma, (int, float)):
        return lambda t, state, k: np.full(state.n, float(sigma))
    return lambda t, state, k: np.asarray(sigma(t, state), dtype=float)


def solve_semilinear(problem: SemilinearProblem, grid: TimeGrid, n_paths: int, seed: int,
                     anchor=None, mode: str = "mc", picard: int = 1,
                     want_surrogate: bool = False, noise: str = "gaussian",
                     terminal_override=None) -> SolverOutput:
    """Value at the anchor (default (0, 0)); see the module docstring.

    anchor: None, a FeatureState, or a (t, DiscretePath) pair.
    """
    t_start = time.perf_counter()
    init = None
    if anchor is not None:
        if isinstance(anchor, FeatureState):
            init = anchor
        else:
            t0, path = anchor
            init = FeatureState.from_path(path, t0, problem.feature_spec)
    times = subgrid_times(grid, 0.0 if init is None else init.t)
    if abs(times[-1] - problem.horizon) > 1e-9:
        raise DomainError("grid horizon differs from the problem horizon")
    terminal = problem.terminal if terminal_override is None else terminal_override

    if mode == "tree":
        if init is not None and init.d != 1:
            raise DomainError("tree mode is one-dimensional")
        driver = None
        if problem.driver is not None:
            driver = lambda t, state, y, z, k: problem.driver(t, state, y, z)
        init_key = None
        if init is not None:
            init_key = _key_from_state(init, problem.feature_spec)
        value, diag = tree_solve([None], _sigma_scalar_fn(problem.sigma), driver,
                                 terminal, times, problem.feature_spec,
                                 init_key=init_key)
        diag["runtime_ms"] = 1000.0 * (time.perf_counter() - t_start)
        return SolverOutput("semilinear-tree", problem.name, value, 0.0, diag)

    if mode != "mc":
        raise DomainError(f"unknown mode {mode!r}")

    needs_backward = problem.driver is not None or want_surrogate
    if not needs_backward:
        final, _ = forward_states(problem.sigma, problem.feature_spec, times,
                                  n_paths, seed, init=init, noise=noise, store=False)
        xi = np.asarray(terminal(final), dtype=float)
        _assert_finite(xi)
        out = SolverOutput(
            "semilinear-mc", problem.name, float(xi.mean()),
            float(xi.std(ddof=1) / np.sqrt(n_paths)),
            {"n": n_paths, "steps": len(times) - 1,
             "runtime_ms": 1000.0 * (time.perf_counter() - t_start)},
        )
        return out

    states, dbs = forward_states(problem.sigma, problem.feature_spec, times,
                                 n_paths, seed, init=init, noise=noise, store=True)
    y = np.asarray(terminal(states[-1]), dtype=float)
    _assert_finite(y)
    coeffs: list = [None] * len(times)
    min_rank, basis_size = np.inf, 0
    target0 = y
    for j in range(len(times) - 2, -1, -1):
        dt = float(times[j + 1] - times[j])
        if j == 0:
            # dispersion of the last regression target, not of its projection
            target0 = y
        c_y, y_hat, rank, basis_size = fit_layer(states[j], problem.feature_spec, y)
        min_rank = min(min_rank, rank)
        coeffs[j] = c_y
        if problem.driver is not None:
            zt = y[:, None] * dbs[:, j, :] / dt
            z_hat = np.empty_like(zt)
            for k in range(zt.shape[1]):
                _, z_hat[:, k], _, _ = fit_layer(states[j], problem.feature_spec, zt[:, k])
            y_new = y_hat + dt * np.asarray(problem.driver(float(times[j]), states[j], y_hat, z_hat), dtype=float)
            for _ in range(max(picard, 0)):
                y_new = y_hat + dt * np.asarray(problem.driver(float(times[j]), states[j], y_new, z_hat), dtype=float)
        else:
            y_new = y_hat
        y = y_new
        _assert_finite(y)
    value = float(np.mean(y))
    stderr = float(np.std(target0, ddof=1) / np.sqrt(n_paths))
    surrogate = None
    if want_surrogate:
        surrogate = RegressionSurrogate(times, problem.feature_spec, coeffs, terminal=problem.terminal)
    return SolverOutput(
        "semilinear-mc", problem.name, value, stderr,
        {"n": n_paths, "steps": len(times) - 1, "basis_size": basis_size,
         "min_rank": int(min_rank), "picard": picard,
         "runtime_ms": 1000.0 * (time.perf_counter() - t_start)},
        surrogate=surrogate,
    )


def solve_at_anchors(problem: SemilinearProblem, grid: TimeGrid, anchors, n_paths: int,
                     seed: int, **kw) -> list[SolverOutput]:
    """Independent solve from each (t, path) anchor (grid refined per anchor)."""
    outs = []
    for t0, path in anchors:
        g = grid.refined_with([t0])
        outs.append(solve_semilinear(problem, g, n_paths, seed, anchor=(t0, path), **kw))
    return outs


def _key_from_state(state: FeatureState, spec: FeatureSpec) -> np.ndarray:
    cols = [state.x[:, 0]]
    if spec.track_max:
        cols.append(state.xmax[:, 0])
    if spec.track_min:
        cols.append(state.xmin[:, 0])
    if spec.track_integral:
        cols.append(state.integral[:, 0])
    for ts in spec.snapshot_times:
        cols.append(state.snapshot(ts)[:, 0])
    return np.column_stack(cols)


def _assert_finite(arr: np.ndarray):
    if not np.all(np.isfinite(arr)):
        bad = int(np.argmax(~np.isfinite(np.atleast_1d(arr))))
        raise DomainError(f"non-finite solver value (first offending path {bad})")
