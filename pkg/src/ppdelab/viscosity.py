"""Numerical viscosity-solution checking.

A candidate test process touches the solution from above (sub side) or below
(super side) when the optimal-stopping value of the recentred difference,
stopped at a small hitting time, is zero; qualifying candidates must then
satisfy the one-sided generator inequality at the anchor. Membership is
decided on exact Rademacher control trees with a tolerance, the inequality
with a second tolerance, and a point where no candidate qualifies is
reported as vacuous - never as a pass.

The default family consists of quadratic-in-state, quadratic-in-time
polynomials centered on the local jet of the solution (analytic when the
oracle carries derivatives, finite differences otherwise) with structured
offsets. The time-quadratic tilt q (s-t)^2 with q of order the measure bound
produces exact members: its one-step drift dominates every admissible
control drift, so the membership margin of the tilted jet is limited only by
the jet's own Taylor remainder, of order (tree horizon)^{3/2}. Offsets in
the slope or curvature directions shift the stopped value at linear order in
the horizon and are rejected by the membership test, which is what keeps the
inequality check sharp.

Measure families by flavor: drift-and-diffusion lattices (fully nonlinear),
drift lattices with unit diffusion (semilinear), drift-only deterministic
paths (first order, candidates need no second derivative).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .features import FeatureSpec, FeatureState
from .measures import ControlLattice, build_lattice, first_order_lattice
from .oracles import GeneratorDef
from .pathspace import DiscretePath, DomainError, HittingTimeSpec
from .snell import TreeSpec, snell_envelope


# ---------------------------------------------------------------------------
# classical residual
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ResidualPoint:
    t: float
    residual: float


@dataclass(frozen=True)
class ResidualReport:
    points: tuple
    tolerance: float

    @property
    def max_abs(self) -> float:
        return max(abs(p.residual) for p in self.points)

    @property
    def ok(self) -> bool:
        return self.max_abs <= self.tolerance

    def verdict(self, side: str = "solution") -> bool:
        if side == "solution":
            return self.ok
        if side == "subsolution":
            return all(p.residual <= self.tolerance for p in self.points)
        if side == "supersolution":
            return all(p.residual >= -self.tolerance for p in self.points)
        raise DomainError(f"unknown side {side!r}")


def classical_residual(smooth, generator: GeneratorDef, points, feature_spec: FeatureSpec,
                       tolerance: float = 1e-6) -> ResidualReport:
    """L u = -dt u - G(., u, dw u, dww u) at the given (t, path) points."""
    rows = []
    for t, path in points:
        state = FeatureState.from_path(path, t, feature_spec)
        y = smooth.u(t, path)
        lu = -smooth.dt(t, path) - generator(t, state, y, smooth.dw(t, path), smooth.dww(t, path))
        rows.append(ResidualPoint(t, float(lu)))
    return ResidualReport(tuple(rows), tolerance)


# ---------------------------------------------------------------------------
# test candidates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TestCandidate:
    """phi(s, w') = a (s-t) + b . w'_s + 1/2 w'^T c w' + q (s-t)^2."""

    __test__ = False  # not a pytest class

    a: float
    b: np.ndarray
    c: np.ndarray
    q: float
    label: str = ""

    def values(self, rel_t: np.ndarray | float, rel_x: np.ndarray) -> np.ndarray:
        quad = 0.5 * np.einsum("ni,ij,nj->n", rel_x, self.c, rel_x)
        return self.a * rel_t + rel_x @ self.b + quad + self.q * np.square(rel_t)

    @property
    def dt0(self) -> float:
        return self.a

    @property
    def dw0(self) -> np.ndarray:
        return self.b

    @property
    def dww0(self) -> np.ndarray:
        return self.c


@dataclass(frozen=True)
class Jet:
    a: float
    b: np.ndarray
    c: np.ndarray


def fd_jet(u_fn, t: float, state: FeatureState, h: float = 1e-4, bump: float = 1e-4,
           clip: float = 25.0) -> Jet:
    """Local jet of a state functional by state-level finite differences."""
    d = state.d

    def val(st, at=None):
        return float(np.asarray(u_fn(st.t if at is None else at, st))[0])

    base = val(state, at=t)
    frozen = state.advance(t + h, state.x.copy())
    a = (val(frozen, at=t + h) - base) / h

    def bumped(vec):
        return state.advance(t, state.x + vec[None, :])

    b = np.empty(d)
    c = np.empty((d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = bump
        up, dn = val(bumped(e), at=t), val(bumped(-e), at=t)
        b[j] = (up - dn) / (2 * bump)
        c[j, j] = (up - 2 * base + dn) / bump ** 2
        for k in range(j + 1, d):
            e2 = np.zeros(d)
            e2[k] = bump
            pp = val(bumped(e + e2), at=t)
            pm = val(bumped(e - e2), at=t)
            mp = val(bumped(-e + e2), at=t)
            mm = val(bumped(-e - e2), at=t)
            c[j, k] = c[k, j] = (pp - pm - mp + mm) / (4 * bump ** 2)
    return Jet(float(np.clip(a, -clip, clip)),
               np.clip(b, -clip, clip),
               np.clip(0.5 * (c + c.T), -2 * clip, 2 * clip))


def default_family(jet: Jet, bound: float, d: int, first_order: bool,
                   da: float = 0.75, db: float = 0.75, dc: float = 1.0,
                   q_scale: float | None = None) -> list[TestCandidate]:
    """Jet-centered polynomial sweep with structured offsets.

    The offsets are sized so that an offset candidate's stopping margin
    (floored at -offset^2 / (4 q) by the time tilt) clears the membership
    tolerance at every swept localization: offsets are meant to be rejected,
    the tilted jets accepted.
    """
    q_big = (1.0 + 0.5 * bound) if q_scale is None else q_scale
    cands = []
    b_offsets = [np.zeros(d)]
    for k in range(d):
        e = np.zeros(d)
        e[k] = db
        b_offsets += [e, -e]
    c_offsets = [np.zeros((d, d))]
    if not first_order:
        c_offsets += [dc * np.eye(d), -dc * np.eye(d)]
    for dda in (0.0, da, -da):
        for bb in b_offsets:
            for cc in c_offsets:
                for q in (0.0, q_big, -q_big):
                    cands.append(TestCandidate(
                        a=jet.a + dda, b=jet.b + bb, c=jet.c + cc, q=q,
                        label=f"da={dda:+.2f},db={bb.sum():+.2f},dc={np.trace(cc):+.2f},q={q:+.2f}",
                    ))
    return cands


# ---------------------------------------------------------------------------
# the checker
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CheckConfig:
    """Tolerances and localization of the numerical membership test.

    The hitting times swept are balls of radius r capped at a time of order
    r^2 / L: diffusive paths leave an r-ball in time ~ r^2, so matching the
    two scales is what lets a shallow tree resolve both the exit and the cap
    (a radius-r hitting time capped at r itself would need depth ~ 1/r).
    """

    bound: float = 1.0                        # measure-family bound L
    tree_depth: int = 4
    radii: tuple = (0.3, 0.45, 0.6)           # localization ball radii
    cap_scale: float = 0.5                    # time cap = cap_scale * r^2 / max(L, 1/2)
    membership_coeff: float = 0.2             # tol_member = coeff * (1+L) * span^{3/2}
    check_tolerance: float = 1e-3
    drift_points: int = 3                     # drift lattice resolution
    diffusion_points: int = 3                 # fully-nonlinear beta resolution
    node_budget: int = 4_000_000

    def membership_tolerance(self, span: float) -> float:
        return max(1e-9, self.membership_coeff * (1.0 + self.bound) * span ** 1.5)

    def localizations(self, t: float, horizon: float):
        """(radius, absolute cap) pairs for the membership sweep."""
        out = []
        for r in self.radii:
            cap = t + self.cap_scale * r * r / max(self.bound, 0.5)
            cap = min(cap, horizon)
            if cap > t + 1e-9:
                out.append((r, cap))
        return out


def flavor_lattice(flavor: str, cfg: CheckConfig, d: int) -> ControlLattice:
    L = cfg.bound
    if flavor == "first-order":
        return first_order_lattice(L, d, refinement=cfg.drift_points)
    if flavor == "semilinear":
        drifts = np.linspace(-L, L, cfg.drift_points)
        alphas = np.array([[a] * d for a in drifts], dtype=float)
        betas = np.tile(np.eye(d), (len(drifts), 1, 1))
        labels = tuple(f"a={a:+.3f},b=I" for a in drifts)
        return ControlLattice(max(L, 0.5 * d), alphas, betas, labels)
    if flavor == "fully-nonlinear":
        return build_lattice(L, d, n_magnitudes=max(2, (cfg.drift_points + 1) // 2),
                             n_scalings=cfg.diffusion_points)
    raise DomainError(f"unknown flavor {flavor!r}")


@dataclass(frozen=True)
class CandidateRecord:
    label: str
    qualified: bool
    membership_margin: float
    eps: float
    lphi: float
    violated: bool


@dataclass(frozen=True)
class CheckVerdict:
    side: str
    status: str                    # pass | violation | vacuous
    records: tuple
    anchor_time: float

    @property
    def ok(self) -> bool:
        return self.status == "pass"

    @property
    def n_qualified(self) -> int:
        return sum(1 for r in self.records if r.qualified)


def _membership_value(candidate: TestCandidate, u_eval, u0: float, anchor: FeatureState,
                      hspec: HittingTimeSpec, lattice: ControlLattice, cfg: CheckConfig,
                      horizon: float, side: str) -> float:
    """Stopped-game value of the recentred difference phi - u^{t,w}.

    Sub side: the lower stopping value (must be ~0 from below).
    Super side: the upper stopping value (must be ~0 from above).
    """
    t0 = anchor.t

    def reward(t, state, rel_x):
        diff = candidate.values(t - t0, rel_x) + u0 - u_eval(t, state)
        return -diff if side == "sub" else diff

    tree = snell_envelope(reward, hspec, lattice, TreeSpec(cfg.tree_depth, cfg.node_budget),
                          horizon=horizon, anchor=anchor)
    # sup of the negated difference = -(lower value); report the signed margin
    return -tree.value if side == "sub" else tree.value


def _check_side(u_fn, generator: GeneratorDef, anchor: FeatureState, family,
                cfg: CheckConfig, horizon: float, side: str) -> CheckVerdict:
    lattice = flavor_lattice(generator.flavor, cfg, anchor.d)
    u0 = float(np.asarray(u_fn(anchor.t, anchor))[0])
    records = []
    status = "vacuous"
    # the tree layers are identical across candidates: cache u per (eps, layer)
    cache: dict = {}

    def cached_u_for(eps_key):
        def ev(t, state):
            key = (eps_key, round(t, 12), state.n)
            if key not in cache:
                cache[key] = np.asarray(u_fn(t, state), dtype=float)
            return cache[key]

        return ev

    localizations = cfg.localizations(anchor.t, horizon)
    # one tolerance for the whole sweep, set by the tightest localization:
    # offset candidates have span-flat margins and would sneak past a
    # loosened large-span tolerance, while the tilted jets qualify at the
    # smallest span where their Taylor remainder is smallest too
    tol = cfg.membership_tolerance(min((cap - anchor.t) for _, cap in localizations)) \
        if localizations else 0.0
    for cand in family:
        qualified = False
        best_margin = -np.inf
        eps_used = np.nan
        for radius, cap in localizations:
            hspec = HittingTimeSpec.ball_domain(radius, anchor.d, cap)
            value = _membership_value(cand, cached_u_for(radius), u0, anchor, hspec,
                                      lattice, cfg, horizon, side)
            # sub: value = lower stopping value <= 0; super: >= 0
            margin = value if side == "sub" else -value
            if margin > best_margin:
                best_margin, eps_used = margin, radius
            if margin >= -tol:
                qualified = True
                break
        lphi = -cand.dt0 - generator(anchor.t, anchor, u0, cand.dw0, cand.dww0)
        if side == "sub":
            violated = qualified and lphi > cfg.check_tolerance
        else:
            violated = qualified and lphi < -cfg.check_tolerance
        records.append(CandidateRecord(cand.label, qualified, float(best_margin),
                                       float(eps_used), float(lphi), violated))
        if qualified and status == "vacuous":
            status = "pass"
        if violated:
            status = "violation"
    return CheckVerdict(side, status, tuple(records), anchor.t)


def check_subsolution(u_fn, generator: GeneratorDef, point, feature_spec: FeatureSpec,
                      cfg: CheckConfig, horizon: float, family=None, jet: Jet | None = None) -> CheckVerdict:
    """Viscosity subsolution check at one (t, path) point.

    u_fn: (t, FeatureState) -> (n,) evaluator of the solution candidate.
    """
    anchor = _anchor_state(point, feature_spec)
    fam = _resolve_family(u_fn, anchor, generator, cfg, family, jet)
    return _check_side(u_fn, generator, anchor, fam, cfg, horizon, "sub")


def check_supersolution(u_fn, generator: GeneratorDef, point, feature_spec: FeatureSpec,
                        cfg: CheckConfig, horizon: float, family=None, jet: Jet | None = None) -> CheckVerdict:
    anchor = _anchor_state(point, feature_spec)
    fam = _resolve_family(u_fn, anchor, generator, cfg, family, jet)
    return _check_side(u_fn, generator, anchor, fam, cfg, horizon, "super")


def _anchor_state(point, feature_spec: FeatureSpec) -> FeatureState:
    if isinstance(point, FeatureState):
        return point
    t, path = point
    return FeatureState.from_path(path, t, feature_spec)


def _resolve_family(u_fn, anchor, generator, cfg, family, jet):
    if family is not None:
        return family
    if jet is None:
        jet = fd_jet(u_fn, anchor.t, anchor)
    return default_family(jet, cfg.bound, anchor.d,
                          first_order=(generator.flavor == "first-order"))


def analytic_jet(entry, t: float, state: FeatureState) -> Jet:
    """Jet from an oracle entry's analytic derivative evaluators."""
    sf = entry.smooth_feat
    if sf is None:
        raise DomainError(f"{entry.name} has no analytic derivatives")
    return Jet(
        float(np.asarray(sf["dt"](t, state)).ravel()[0]),
        np.atleast_1d(np.asarray(sf["dw"](t, state))[0]).astype(float),
        np.atleast_2d(np.asarray(sf["dww"](t, state))[0]).astype(float),
    )
