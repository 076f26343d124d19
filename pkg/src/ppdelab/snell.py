"""Nonlinear optimal stopping on control-noise trees.

The reward process is stopped at a hitting time and frozen at its pre-exit
value; backward induction computes the envelope

    Y = max(frozen reward, max over lattice controls of the one-step
            child expectation of Y)

with Rademacher noise (variance-matched to beta^2 dt) so the recursion is
exact, not Monte Carlo. The earliest time Y touches the frozen reward is the
optimal stopping rule. A deliberately independent brute-force recursion over
the same tree serves as the oracle: the sup over adapted stopping rules and
feedback controls factorizes branch by branch, which is what makes an
exhaustive evaluation feasible (literal enumeration of stopping rules is
doubly exponential and is only cross-checked at toy depth in the tests).

Freezing convention: a spatial exit at knot k freezes the reward at the
knot-(k-1) value (discrete left limit); reaching the time cap freezes at the
cap knot itself (the reward is continuous in time there).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .features import FeatureSpec, FeatureState
from .measures import ControlLattice
from .pathspace import DomainError, HittingTimeSpec


class ResourceError(RuntimeError):
    """Tree growth beyond the configured budget."""


@dataclass(frozen=True)
class TreeSpec:
    """Tree resolution: the span [anchor, hitting cap] is cut into `depth` steps."""

    depth: int
    node_budget: int = 4_000_000


def _noise_outcomes(lattice: ControlLattice) -> np.ndarray:
    if np.all(lattice.betas == 0.0):
        return np.zeros((1, lattice.d))
    return np.array(list(itertools.product((-1.0, 1.0), repeat=lattice.d)))


@dataclass
class Layer:
    t: float
    state: FeatureState          # absolute prefix statistics
    rel_x: np.ndarray            # (n_k, d) displacement from the anchor
    raw: np.ndarray              # (n_k,) reward X at the node
    exited: np.ndarray           # (n_k,) bool: hitting time <= t
    xhat: np.ndarray             # (n_k,) stopped-and-frozen reward
    y: np.ndarray = field(default=None)  # type: ignore[assignment]
    cont: np.ndarray = field(default=None)  # type: ignore[assignment]
    best_control: np.ndarray = field(default=None)  # type: ignore[assignment]
    stop: np.ndarray = field(default=None)  # type: ignore[assignment]


class StoppingTree:
    """Layered tree with the envelope, continuation values and stop rule."""

    def __init__(self, layers, lattice, hspec, dt, n_noise):
        self.layers = layers
        self.lattice = lattice
        self.hspec = hspec
        self.dt = dt
        self.n_noise = n_noise

    @property
    def value(self) -> float:
        return float(self.layers[0].y[0])

    @property
    def depth(self) -> int:
        return len(self.layers) - 1

    def stop_time_mean(self) -> float:
        """Expected stopping time of the earliest-stop rule under the
        optimizing feedback control (children of a continue node are
        equally likely given its argmax control).
        """
        b = self.lattice.size * self.n_noise
        prob = np.array([1.0])
        acc = 0.0
        for k, layer in enumerate(self.layers):
            stopped = layer.stop
            acc += float(prob[stopped].sum() * layer.t)
            if k == len(self.layers) - 1:
                break
            nxt = np.zeros(len(self.layers[k + 1].raw))
            cont_idx = np.nonzero(~stopped)[0]
            for i in cont_idx:
                c = layer.best_control[i]
                base = i * b + c * self.n_noise
                nxt[base:base + self.n_noise] += prob[i] / self.n_noise
            prob = nxt
        return acc


def _exit_mask(hspec: HittingTimeSpec, rel_x: np.ndarray) -> np.ndarray:
    if hspec.kind == "radius":
        return np.einsum("ij,ij->i", rel_x, rel_x) >= hspec.eps ** 2
    proj = rel_x @ hspec.normals.T
    return (proj >= hspec.offsets[None, :]).any(axis=1)


def _tree_step(hspec, anchor_t, horizon, depth) -> float:
    cap = hspec.cap_time(anchor_t, horizon)
    if cap <= anchor_t:
        raise DomainError("empty stopping horizon")
    return (cap - anchor_t) / depth


def snell_envelope(reward, hspec: HittingTimeSpec, lattice: ControlLattice,
                   tree: TreeSpec, horizon: float,
                   anchor: FeatureState | None = None) -> StoppingTree:
    """Builds the stopped-reward tree and runs the exact DP recursion.

    reward(t, state, rel_x) -> (n,) must be progressively measurable in the
    tracked statistics. ``anchor`` is the prefix state at the tree root
    (zero state on the unshifted space by default).
    """
    if anchor is None:
        anchor = FeatureState.initial(FeatureSpec(), 1, lattice.d)
    t0 = anchor.t
    dt = _tree_step(hspec, t0, horizon, tree.depth)
    n_ctrl = lattice.size
    noise = _noise_outcomes(lattice)
    n_noise = noise.shape[0]
    b = n_ctrl * n_noise
    if b ** tree.depth > tree.node_budget:
        raise ResourceError(f"tree would hold {b ** tree.depth} leaf nodes")

    # child increments, ordered (control outer, noise inner)
    inc = np.empty((b, lattice.d))
    for c in range(n_ctrl):
        base = lattice.alphas[c] * dt
        for z in range(n_noise):
            inc[c * n_noise + z] = base + lattice.betas[c] @ noise[z] * np.sqrt(dt)

    layers = []
    state = anchor.copy()
    rel_x = np.zeros((1, lattice.d))
    raw = np.asarray(reward(t0, state, rel_x), dtype=float)
    if not np.all(np.isfinite(raw)):
        raise DomainError("reward is not finite at the root")
    exited = np.zeros(1, dtype=bool)
    frozen = raw.copy()
    layers.append(Layer(t0, state, rel_x, raw, exited.copy(), raw.copy()))
    for k in range(1, tree.depth + 1):
        t = t0 + k * dt
        prev = layers[-1]
        n_prev = prev.raw.shape[0]
        rel_x = np.repeat(prev.rel_x, b, axis=0) + np.tile(inc, (n_prev, 1))
        state = prev.state.repeat(b)
        state = state.advance(t, state.x + np.tile(inc, (n_prev, 1)))
        raw = np.asarray(reward(t, state, rel_x), dtype=float)
        if not np.all(np.isfinite(raw)):
            raise DomainError(f"reward is not finite at layer {k}")
        parent_exited = np.repeat(prev.exited, b)
        parent_frozen = np.repeat(frozen, b)
        parent_raw = np.repeat(prev.raw, b)
        newly = ~parent_exited & _exit_mask(hspec, rel_x)
        exited = parent_exited | newly
        frozen = np.where(parent_exited, parent_frozen, parent_raw)
        # spatial exits freeze at the previous knot (discrete left limit);
        # never-exited nodes keep the live reward, including at the time cap
        # where the reward is continuous in t
        xhat = np.where(exited, frozen, raw)
        layers.append(Layer(t, state, rel_x, raw, exited, xhat))

    # backward induction
    last = layers[-1]
    last.y = last.xhat.copy()
    last.cont = np.full_like(last.y, -np.inf)
    last.best_control = np.zeros(len(last.y), dtype=int)
    last.stop = np.ones(len(last.y), dtype=bool)
    for k in range(len(layers) - 2, -1, -1):
        layer = layers[k]
        child_y = layers[k + 1].y.reshape(len(layer.raw), n_ctrl, n_noise)
        per_control = child_y.mean(axis=2)
        layer.cont = per_control.max(axis=1)
        layer.best_control = per_control.argmax(axis=1)
        layer.y = np.maximum(layer.xhat, layer.cont)
        layer.stop = layer.y <= layer.xhat
    return StoppingTree(layers, lattice, hspec, dt, n_noise)


def brute_force_stopping(reward, hspec: HittingTimeSpec, lattice: ControlLattice,
                         tree: TreeSpec, horizon: float,
                         anchor: FeatureState | None = None) -> float:
    """Independent exhaustive recursion over (stopping, feedback control)
    decisions, recomputing prefix statistics node by node in pure Python.
    """
    if tree.depth > 10:
        raise ResourceError("brute force is limited to depth 10")
    if anchor is None:
        anchor = FeatureState.initial(FeatureSpec(), 1, lattice.d)
    t0 = anchor.t
    dt = _tree_step(hspec, t0, horizon, tree.depth)
    noise = _noise_outcomes(lattice)
    n_noise = noise.shape[0]
    members = lattice.members()
    if (len(members) * n_noise) ** tree.depth > tree.node_budget:
        raise ResourceError("brute force budget exceeded")
    sqdt = np.sqrt(dt)

    def recurse(k, state, rel_x, exited, frozen):
        t = t0 + k * dt
        raw = float(np.asarray(reward(t, state, rel_x))[0])
        if not exited and k > 0 and bool(_exit_mask(hspec, rel_x[None, :])[0]):
            exited, frozen = True, frozen  # frozen already holds the parent raw
        elif not exited:
            frozen = raw
        xhat = frozen if exited else raw
        if k == tree.depth:
            return xhat
        best = -np.inf
        for a, bmat in members:
            acc = 0.0
            for z in range(n_noise):
                inc = a * dt + bmat @ noise[z] * sqdt
                nxt = state.advance(t + dt, state.x + inc[None, :])
                acc += recurse(k + 1, nxt, rel_x + inc, exited, frozen)
            best = max(best, acc / n_noise)
        return max(xhat, best)

    return recurse(0, anchor.copy(), np.zeros(lattice.d), False, 0.0)


@dataclass(frozen=True)
class SupermartingaleReport:
    checked_nodes: int
    violations: tuple

    @property
    def ok(self) -> bool:
        return not self.violations


def verify_supermartingale(tree: StoppingTree, tol: float = 1e-12) -> SupermartingaleReport:
    """Exact supermartingale/martingale audit of the envelope.

    Before the hitting time, Y must dominate every one-step expectation
    (supermartingale) and equal the best one on continue nodes (martingale
    up to the stopping rule); Y >= stopped reward everywhere.
    """
    violations = []
    checked = 0
    for k, layer in enumerate(tree.layers):
        checked += len(layer.y)
        bad = layer.y < layer.xhat - tol
        for i in np.nonzero(bad)[0]:
            violations.append((k, int(i), "envelope below reward"))
        if k == len(tree.layers) - 1:
            break
        live = ~layer.exited
        sup_bad = live & (layer.y < layer.cont - tol)
        for i in np.nonzero(sup_bad)[0]:
            violations.append((k, int(i), "supermartingale violated"))
        mart_bad = live & ~layer.stop & (np.abs(layer.y - layer.cont) > tol)
        for i in np.nonzero(mart_bad)[0]:
            violations.append((k, int(i), "martingale violated before stop"))
    return SupermartingaleReport(checked, tuple(violations))


def enumerate_stopping_rules_value(reward, hspec, lattice, tree: TreeSpec,
                                   horizon: float,
                                   anchor: FeatureState | None = None) -> float:
    """Literal enumeration over adapted stopping rules (tiny trees only):
    for each stop/continue labelling of the decision tree, the best feedback
    control value is computed; returns the sup over rules. Used to validate
    the factorized recursion at toy sizes.
    """
    if anchor is None:
        anchor = FeatureState.initial(FeatureSpec(), 1, lattice.d)
    t0 = anchor.t
    dt = _tree_step(hspec, t0, horizon, tree.depth)
    noise = _noise_outcomes(lattice)
    n_noise = noise.shape[0]
    members = lattice.members()
    sqdt = np.sqrt(dt)

    def value_under_rule(k, state, rel_x, exited, frozen, rule, pos):
        """rule: dict node-position -> stop?; pos identifies the prefix."""
        t = t0 + k * dt
        raw = float(np.asarray(reward(t, state, rel_x))[0])
        if not exited and k > 0 and bool(_exit_mask(hspec, rel_x[None, :])[0]):
            exited = True
        elif not exited:
            frozen = raw
        xhat = frozen if exited else raw
        if k == tree.depth or rule.get(pos, False):
            return xhat
        best = -np.inf
        for ci, (a, bmat) in enumerate(members):
            acc = 0.0
            for z in range(n_noise):
                inc = a * dt + bmat @ noise[z] * sqdt
                nxt = state.advance(t + dt, state.x + inc[None, :])
                acc += value_under_rule(k + 1, nxt, rel_x + inc, exited, frozen,
                                        rule, pos + ((ci, z),))
            best = max(best, acc / n_noise)
        return best

    # collect decision-node positions (prefixes of (control, noise) choices)
    positions = [()]
    frontier = [()]
    for k in range(tree.depth - 1):
        nxt = []
        for pos in frontier:
            for ci in range(len(members)):
                for z in range(n_noise):
                    nxt.append(pos + ((ci, z),))
        positions.extend(nxt)
        frontier = nxt
    if 2 ** len(positions) > 1 << 22:
        raise ResourceError("rule enumeration is doubly exponential; use a smaller tree")
    best = -np.inf
    for bits in itertools.product((False, True), repeat=len(positions)):
        rule = dict(zip(positions, bits))
        best = max(best, value_under_rule(0, anchor.copy(), np.zeros(lattice.d), False, 0.0, rule, ()))
    return best
