"""Deterministic-control solver for first-order equations.

Degenerate diffusion: admissible paths are Lipschitz-L, approximated by
piecewise-constant drifts from a finite lattice. The value satisfies

    u(t) = max over drifts a of [ u(t + dt, path extended by a dt)
                                  - dt * running_cost(t, ., a) ]

with terminal data at the horizon. Nodes recombine on rounded prefix
statistics, so value functions of (current value, running max) stay
polynomial-size despite the exponential tree of drift words.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..features import FeatureSpec, FeatureState
from ..pathspace import DiscretePath, DomainError, TimeGrid
from .common import SolverOutput, subgrid_times
from .tree import NODE_BUDGET, KeyLayout, _unique_with_index


@dataclass(frozen=True)
class FirstOrderProblem:
    name: str
    horizon: float
    bound: float                  # Lipschitz bound L on the drift
    drifts: np.ndarray            # (k,) scalar drift lattice within [-L, L]
    running_cost: object          # (t, state, a) -> (n,) cost rate
    terminal: object
    feature_spec: FeatureSpec

    def __post_init__(self):
        if np.any(np.abs(self.drifts) > self.bound * (1 + 1e-9)):
            raise DomainError("drift lattice exceeds the Lipschitz bound")


def max_abs_drift_problem(terminal, spec: FeatureSpec, horizon: float = 1.0,
                          bound: float = 1.0, n_drifts: int = 5,
                          name: str = "abs-drift") -> FirstOrderProblem:
    """The |z| - 1 equation: drifts in [-1, 1], unit running cost."""
    return FirstOrderProblem(
        name=name, horizon=horizon, bound=bound,
        drifts=np.linspace(-bound, bound, n_drifts),
        running_cost=lambda t, state, a: np.ones(state.n),
        terminal=terminal, feature_spec=spec,
    )


def solve_first_order(problem: FirstOrderProblem, grid: TimeGrid, anchor=None,
                      decimals: int = 9) -> SolverOutput:
    """DP over the drift-word tree with feature recombination.

    anchor: None for (0, 0), or a (t, DiscretePath) pair.
    """
    t_start = time.perf_counter()
    layout = KeyLayout(problem.feature_spec, decimals)
    if anchor is None:
        t0 = 0.0
        keys = layout.root()
    else:
        t0, path = anchor
        state = FeatureState.from_path(path, t0, problem.feature_spec)
        cols = [state.x[:, 0]]
        if problem.feature_spec.track_max:
            cols.append(state.xmax[:, 0])
        if problem.feature_spec.track_min:
            cols.append(state.xmin[:, 0])
        if problem.feature_spec.track_integral:
            cols.append(state.integral[:, 0])
        for ts in problem.feature_spec.snapshot_times:
            cols.append(state.snapshot(ts)[:, 0])
        keys = np.round(np.column_stack(cols), decimals)
    times = subgrid_times(grid.refined_with([t0]), t0)
    if abs(times[-1] - problem.horizon) > 1e-9:
        raise DomainError("grid horizon differs from the problem horizon")
    m = len(times) - 1
    layers = [keys]
    maps = []
    for j in range(m):
        t, tn = float(times[j]), float(times[j + 1])
        dt = tn - t
        cur = layers[j]
        children = [layout.advance(cur, t, tn, a * dt) for a in problem.drifts]
        uniq, inverse = _unique_with_index(np.vstack(children))
        if uniq.shape[0] > NODE_BUDGET:
            raise DomainError("first-order tree exceeds the node budget")
        maps.append(inverse.reshape(len(problem.drifts), cur.shape[0]).T)
        layers.append(uniq)
    y = np.asarray(problem.terminal(layout.to_state(layers[-1], float(times[-1]))), dtype=float)
    for j in range(m - 1, -1, -1):
        t = float(times[j])
        dt = float(times[j + 1] - times[j])
        state = layout.to_state(layers[j], t)
        best = None
        for ai, a in enumerate(problem.drifts):
            cost = np.asarray(problem.running_cost(t, state, a), dtype=float)
            cand = y[maps[j][:, ai]] - dt * cost
            best = cand if best is None else np.maximum(best, cand)
        y = best
    sizes = [k.shape[0] for k in layers]
    return SolverOutput(
        "first-order", problem.name, float(y[0]), 0.0,
        {"layer_nodes": sizes, "max_nodes": max(sizes), "steps": m,
         "drifts": len(problem.drifts),
         "runtime_ms": 1000.0 * (time.perf_counter() - t_start)},
    )
