"""The acceptance suite: one callable per criterion, shared by the CLI
driver and tests/test_acceptance.py. Every tolerance is pinned here.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .calculus import SmoothFunctional, ito_residual_rms, smooth_from_fd
from .expectation import (lower_expectation, positivity_bound_check,
                          upper_expectation)
from .features import FeatureSpec, FeatureState
from .measures import (ControlLattice, build_lattice, first_order_lattice,
                       refine_lattice, simulate_paths, ControlProcess)
from .oracles import GeneratorDef, classical_defect, registry, sample_paths
from .pathspace import DiscretePath, HittingTimeSpec, TimeGrid
from .snell import (SupermartingaleReport, TreeSpec, brute_force_stopping,
                    snell_envelope, verify_supermartingale)
from .solvers import (SemilinearProblem, dpp_consistency, max_abs_drift_problem,
                      partial_comparison_probe, perron_scheme, solve_first_order,
                      solve_hjb, solve_semilinear, stability_probe,
                      stability_signed_defect, uncertain_volatility_problem)
from .viscosity import (CheckConfig, analytic_jet, check_subsolution,
                        check_supersolution, classical_residual)


@dataclass
class CriterionResult:
    cid: int
    name: str
    passed: bool
    measured: str
    target: str
    runtime_s: float = 0.0
    details: list = field(default_factory=list)

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return (f"[{flag}] {self.cid:2d} {self.name}: measured {self.measured}"
                f" | target {self.target} ({self.runtime_s:.1f}s)")


def _timed(fn):
    import functools

    @functools.wraps(fn)
    def wrapper(*a, **kw):
        t0 = time.perf_counter()
        res = fn(*a, **kw)
        res.runtime_s = time.perf_counter() - t0
        return res

    return wrapper


# ---------------------------------------------------------------------------
# 1. running-max heat value
# ---------------------------------------------------------------------------

@_timed
def criterion_1_runmax_value(fast: bool = False) -> CriterionResult:
    steps = 400 if fast else 2000
    n = 50_000 if fast else 200_000
    target = math.sqrt(2.0 / math.pi)
    entry = registry(1.0)["HEAT-RUNMAX"]
    problem = SemilinearProblem.from_oracle(entry)
    grid = TimeGrid.uniform(1.0, steps)
    t0 = time.perf_counter()
    out = solve_semilinear(problem, grid, n, seed=20240401)
    runtime = time.perf_counter() - t0
    defect = abs(out.value - target)
    tol = 0.03
    passed = defect <= tol and runtime <= 120.0
    return CriterionResult(
        1, "running-max heat value", passed,
        f"{out.value:.5f} (defect {defect:.4f}, {runtime:.0f}s)",
        f"{target:.5f} +- {tol} in <= 120 s",
    )


# ---------------------------------------------------------------------------
# 2. kink solution at sampled anchors
# ---------------------------------------------------------------------------

@_timed
def criterion_2_kink(fast: bool = False) -> CriterionResult:
    n_anchor = 20 if fast else 100
    entry = registry(1.0)["KINK"]
    t_half = entry.t0
    problem = SemilinearProblem.from_oracle(entry)
    base_grid = TimeGrid.uniform(1.0, 64).refined_with([t_half])
    anchors_batch = sample_paths(base_grid, n_anchor, seed=7)
    rng = np.random.Generator(np.random.Philox(key=np.array([7, 1], dtype=np.uint64)))
    worst = 0.0
    for i in range(n_anchor):
        t = float(rng.uniform(0.0, 0.95))
        g = base_grid.refined_with([t])
        path = anchors_batch.path(i).on_refined([t])
        out = solve_semilinear(problem, g, 20_000, seed=100 + i, anchor=(t, path))
        truth = float(path.value(min(t, t_half))[0])
        worst = max(worst, abs(out.value - truth))
    tol = 0.02
    return CriterionResult(
        2, "frozen-at-t0 terminal value field", worst <= tol,
        f"max anchor defect {worst:.4f} over {n_anchor} points", f"<= {tol}",
    )


# ---------------------------------------------------------------------------
# 3. Snell envelope vs brute force on random trees
# ---------------------------------------------------------------------------

def _random_tree_instance(rng):
    depth = int(rng.integers(2, 11))
    # keep the brute-force recursion budget ~ (controls * noise)^depth sane
    if depth >= 8:
        lattice = first_order_lattice(1.0, 1, refinement=2)
    elif depth >= 4:
        lattice = ControlLattice(
            1.0,
            np.array([[rng.uniform(-1, 1)], [rng.uniform(-1, 1)]]),
            np.array([[[0.0]], [[rng.uniform(0.5, np.sqrt(2))]]]),
            ("m0", "m1"),
        )
    else:
        lattice = build_lattice(1.0, 1, n_magnitudes=2, n_scalings=2)
    kind = rng.integers(0, 3)
    a, b, c = rng.uniform(-1, 1, size=3)
    spec = FeatureSpec(track_max=True)
    if kind == 0:
        reward = lambda t, st, rx: a * t + b * np.abs(st.x[:, 0]) + c * st.xmax[:, 0]
    elif kind == 1:
        reward = lambda t, st, rx: b * st.x[:, 0] ** 2 + a * (1.0 - t) + c
    else:
        reward = lambda t, st, rx: a + b * st.xmax[:, 0] - c * t * st.x[:, 0]
    if rng.integers(0, 2) == 0:
        hspec = HittingTimeSpec.radius(float(rng.uniform(0.3, 1.0)))
    else:
        hspec = HittingTimeSpec.ball_domain(float(rng.uniform(0.3, 1.2)), 1,
                                            cap=float(rng.uniform(0.3, 1.0)))
    anchor = FeatureState.initial(spec, 1, 1)
    return reward, hspec, lattice, TreeSpec(depth), anchor


@_timed
def criterion_3_snell_oracle(fast: bool = False) -> CriterionResult:
    n_trees = 15 if fast else 50
    rng = np.random.Generator(np.random.Philox(key=np.array([11, 0], dtype=np.uint64)))
    worst = 0.0
    violations = 0
    for _ in range(n_trees):
        reward, hspec, lattice, tree, anchor = _random_tree_instance(rng)
        env = snell_envelope(reward, hspec, lattice, tree, horizon=1.0, anchor=anchor)
        bf = brute_force_stopping(reward, hspec, lattice, tree, horizon=1.0, anchor=anchor)
        worst = max(worst, abs(env.value - bf))
        violations += len(verify_supermartingale(env).violations)
    passed = worst <= 1e-12 and violations == 0
    return CriterionResult(
        3, "stopping envelope equals exhaustive oracle", passed,
        f"max |DP - oracle| {worst:.2e}, {violations} audit violations over {n_trees} trees",
        "<= 1e-12 and 0 violations",
    )


# ---------------------------------------------------------------------------
# 4. positivity of the lower expected hitting time
# ---------------------------------------------------------------------------

@_timed
def criterion_4_positivity(fast: bool = False) -> CriterionResult:
    grid = TimeGrid.uniform(1.0, 128 if fast else 256)
    n = 2048 if fast else 4096
    eps = 0.25
    margins = []
    for L in (1.0, 2.0, 4.0):
        lat = build_lattice(L, 1)
        rep = positivity_bound_check(eps, L, lat, grid, n, seed=13)
        margins.append(rep.margin)
    ok = all(m > 0 for m in margins) and margins[0] > margins[1] > margins[2]
    return CriterionResult(
        4, "hitting-time positivity margins", ok,
        "margins " + ", ".join(f"{m:.4f}" for m in margins),
        "all > 0 and decreasing in L",
    )


# ---------------------------------------------------------------------------
# 5. uncertain-volatility values
# ---------------------------------------------------------------------------

@_timed
def criterion_5_uncertain_vol(fast: bool = False) -> CriterionResult:
    spec = FeatureSpec()
    grid = TimeGrid.uniform(1.0, 16)
    up = solve_hjb(uncertain_volatility_problem(0.5, 1.0, lambda st: st.x[:, 0] ** 2, spec), grid)
    dn = solve_hjb(uncertain_volatility_problem(0.5, 1.0, lambda st: -st.x[:, 0] ** 2, spec), grid)
    ok = abs(up.value - 1.0) <= 0.02 and abs(dn.value - (-0.25)) <= 0.005
    return CriterionResult(
        5, "uncertain-volatility band values", ok,
        f"convex {up.value:.4f}, concave {dn.value:.4f}",
        "1.0 +- 2% and -0.25 +- 2%",
    )


# ---------------------------------------------------------------------------
# 6. first-order solver vs twice-max-minus-state
# ---------------------------------------------------------------------------

@_timed
def criterion_6_first_order(fast: bool = False) -> CriterionResult:
    steps = 32
    n_anchor = 15 if fast else 50
    spec = FeatureSpec(track_max=True)
    problem = max_abs_drift_problem(lambda st: 2 * st.xmax[:, 0] - st.x[:, 0], spec)
    grid = TimeGrid.uniform(1.0, steps)
    at_zero = solve_first_order(problem, grid)
    tol = (1.0 / steps) * (1.0 + 2.0 * problem.bound)
    worst = abs(at_zero.value - 0.0)
    batch = sample_paths(grid, n_anchor, seed=23, scale=0.7)
    rng = np.random.Generator(np.random.Philox(key=np.array([23, 5], dtype=np.uint64)))
    for i in range(n_anchor):
        t = float(rng.uniform(0.0, 0.9))
        path = batch.path(i).on_refined([t])
        truth = 2.0 * max(path.values[path.times <= t + 1e-12, 0].max(), path.value(t)[0]) - path.value(t)[0]
        out = solve_first_order(problem, grid.refined_with([t]), anchor=(t, path))
        worst = max(worst, abs(out.value - truth))
    return CriterionResult(
        6, "first-order control solver vs closed form", worst <= tol,
        f"max defect {worst:.4f} over {n_anchor} anchors and the origin",
        f"<= dt (1 + 2L) = {tol:.4f}",
    )


# ---------------------------------------------------------------------------
# 7. envelope scheme: exact gap and sandwich
# ---------------------------------------------------------------------------

@_timed
def criterion_7_perron(fast: bool = False) -> CriterionResult:
    entry = registry(1.0)["QUADRATIC"]
    problem = SemilinearProblem.from_oracle(entry)
    grid = TimeGrid.uniform(1.0, 256 if fast else 512)
    n = 10_000 if fast else 20_000
    u_true = 1.0
    ok = True
    lines = []
    prev_bound = np.inf
    for eps in (0.2, 0.1, 0.05):
        res = perron_scheme(problem, eps, grid, n, seed=17)
        gap_formula = 2.0 * float(problem.rho0(2 * eps)) * (1.0 + problem.horizon)
        bound = float(problem.rho0(2 * eps)) * (1.0 + problem.horizon) + 3.0 * res.stderr
        sandwich = abs(res.psi - u_true) <= bound
        gap_exact = res.gap == gap_formula
        ok = ok and sandwich and gap_exact and bound < prev_bound
        prev_bound = bound
        lines.append(f"eps={eps}: psi={res.psi:.4f} gap={res.gap:.3f} bound={bound:.3f}")
    return CriterionResult(
        7, "exit-skeleton envelope gap and sandwich", ok,
        "; ".join(lines), "gap exact, |psi - u| within the shrinking bound",
    )


# ---------------------------------------------------------------------------
# 8. consistency: classical solutions pass both viscosity checks
# ---------------------------------------------------------------------------

@_timed
def criterion_8_consistency(fast: bool = False) -> CriterionResult:
    reg = registry(1.0)
    grid = TimeGrid.uniform(1.0, 32)
    batch = sample_paths(grid, 10, seed=42)
    cfg = CheckConfig(bound=1.0)
    n_points = 4 if fast else 10
    rng = np.random.Generator(np.random.Philox(key=np.array([42, 8], dtype=np.uint64)))
    details = []
    ok = True
    smooth_names = [n for n, e in reg.items() if e.classification == "classical-smooth"]
    for name in smooth_names:
        entry = reg[name]
        points = []
        for _ in range(50):
            i = int(rng.integers(0, batch.n))
            t = float(rng.uniform(0.0, 0.9))
            points.append((t, batch.path(i)))
        rep = classical_residual(entry.smooth, entry.generator, points, entry.feature_spec)
        analytic_ok = rep.max_abs <= 1e-6
        fd_ok, fd_note = _fd_residual_ratio(entry, points[:10])
        visc_ok = True
        for k in range(n_points):
            i = int(rng.integers(0, batch.n))
            t = float(rng.uniform(0.0, 0.85))
            st = FeatureState.from_path(batch.path(i), t, entry.feature_spec)
            jet = analytic_jet(entry, t, st)
            sub = check_subsolution(entry.value, entry.generator, st, entry.feature_spec, cfg, 1.0, jet=jet)
            sup = check_supersolution(entry.value, entry.generator, st, entry.feature_spec, cfg, 1.0, jet=jet)
            if sub.status != "pass" or sup.status != "pass":
                visc_ok = False
        ok = ok and analytic_ok and fd_ok and visc_ok
        details.append(f"{name}: residual {rep.max_abs:.1e}, fd {fd_note}, viscosity {'ok' if visc_ok else 'BAD'}")
    # negative controls on the correct side
    entry = reg["QUADRATIC"]
    c = 0.1
    st = FeatureState.from_path(batch.path(0), 0.25, entry.feature_spec)
    up_fn = lambda t, s: np.asarray(entry.value(t, s)) + c * (1.0 - t)
    dn_fn = lambda t, s: np.asarray(entry.value(t, s)) - c * (1.0 - t)
    neg_ok = (
        check_subsolution(up_fn, entry.generator, st, entry.feature_spec, cfg, 1.0).status == "violation"
        and check_supersolution(up_fn, entry.generator, st, entry.feature_spec, cfg, 1.0).status != "violation"
        and check_supersolution(dn_fn, entry.generator, st, entry.feature_spec, cfg, 1.0).status == "violation"
        and check_subsolution(dn_fn, entry.generator, st, entry.feature_spec, cfg, 1.0).status != "violation"
    )
    ok = ok and neg_ok
    details.append(f"negative controls flagged on the correct side: {neg_ok}")
    return CriterionResult(
        8, "classical-viscosity consistency", ok,
        "; ".join(details), "all smooth oracles pass, bumps flagged",
        details=details,
    )


def _fd_residual_ratio(entry, points):
    """Finite-difference classical residual must vanish at first order in the
    step (ratio about 2 under halving) or be exactly representable."""
    res = []
    for h in (0.02, 0.01):
        sm = smooth_from_fd(lambda t, p, e=entry: e.u_path(t, p), h, math.sqrt(h))
        rep = classical_residual(sm, entry.generator, points, entry.feature_spec)
        res.append(rep.max_abs)
    if res[0] <= 1e-9:
        return True, "exact"
    ratio = res[0] / max(res[1], 1e-300)
    return (1.3 <= ratio <= 4.0), f"ratio {ratio:.2f}"


# ---------------------------------------------------------------------------
# 9. stability under driver perturbation
# ---------------------------------------------------------------------------

@_timed
def criterion_9_stability(fast: bool = False) -> CriterionResult:
    entry = registry(1.0)["QUADRATIC"]
    problem = SemilinearProblem.from_oracle(entry)
    grid = TimeGrid.uniform(1.0, 64)
    rows = stability_probe(problem, (0.1, 0.05), grid, 10_000 if fast else 40_000, seed=31)
    decreasing = rows[0].defect > rows[1].defect
    tree_grid = TimeGrid.uniform(1.0, 8)
    s_plus = stability_signed_defect(problem, 0.1, tree_grid)
    s_minus = stability_signed_defect(problem, -0.1, tree_grid)
    sign_ok = s_plus > 0 > s_minus
    ok = all(r.ok for r in rows) and decreasing and sign_ok
    return CriterionResult(
        9, "driver-perturbation stability", ok,
        "; ".join(f"d={r.delta}: defect {r.defect:.4f} <= {r.bound:.4f}" for r in rows)
        + f"; signed tree defects {s_plus:+.3f}/{s_minus:+.3f}",
        "defects within delta T e^(L0 T) + 3 SE, decreasing, sign-faithful",
    )


# ---------------------------------------------------------------------------
# 10. partial comparison ordering
# ---------------------------------------------------------------------------

@_timed
def criterion_10_partial_comparison(fast: bool = False) -> CriterionResult:
    entry = registry(1.0)["QUADRATIC"]
    grid = TimeGrid.uniform(1.0, 64)
    n = 10_000 if fast else 40_000
    c = 0.25
    rep = partial_comparison_probe(entry, c, grid, n, seed=37)
    margin_ok = rep.margin_super >= c - 3.0 * rep.stderr and rep.margin_sub >= c - 3.0 * rep.stderr
    eq = partial_comparison_probe(entry, 0.0, grid, n, seed=37)
    eq_ok = abs(eq.margin_super) <= 3.0 * eq.stderr and abs(eq.margin_sub) <= 3.0 * eq.stderr
    ok = rep.ok and margin_ok and eq.ok and eq_ok
    return CriterionResult(
        10, "partial comparison ordering", ok,
        f"margins {rep.margin_super:.4f}/{rep.margin_sub:.4f} (c={c}), equality case {eq.margin_super:+.4f}",
        "ordering with margin >= c - 3 SE; equality within 3 SE",
    )


# ---------------------------------------------------------------------------
# 11. Ito residual convergence
# ---------------------------------------------------------------------------

@_timed
def criterion_11_ito(fast: bool = False) -> CriterionResult:
    reg = registry(1.0)
    n = 100 if fast else 200
    details = []
    ok = True
    for name, entry in reg.items():
        if entry.classification == "classical-smooth":
            rmss = []
            for steps in (64, 128):
                grid = TimeGrid.uniform(1.0, steps)
                batch = sample_paths(grid, n, seed=19)
                rmss.append(ito_residual_rms(entry.smooth, batch))
            if rmss[0] <= 1e-10 and rmss[1] <= 1e-10:
                details.append(f"{name}: exact")
                continue
            ratio = rmss[0] / max(rmss[1], 1e-300)
            good = 1.5 <= ratio <= 3.0
            ok = ok and good
            details.append(f"{name}: ratio {ratio:.2f}")
    entry = reg["RUNMAX-NONSMOOTH"]
    floors = []
    for steps in (64, 128):
        grid = TimeGrid.uniform(1.0, steps)
        batch = sample_paths(grid, n, seed=19)
        zero = SmoothFunctional(
            u=lambda t, p, e=entry: e.u_path(t, p),
            dt=lambda t, p: 0.0, dw=lambda t, p: np.zeros(1),
            dww=lambda t, p: np.zeros((1, 1)), provenance="zero-assignment",
        )
        floors.append(ito_residual_rms(zero, batch))
    floor_ok = min(floors) >= 0.3
    ok = ok and floor_ok
    details.append(f"non-smooth floor {min(floors):.3f}")
    return CriterionResult(
        11, "Ito defect convergence", ok, "; ".join(details),
        "ratios in [1.5, 3] (or exact); non-smooth defect bounded away from 0",
    )


# ---------------------------------------------------------------------------
# 12. estimator algebra under common random numbers
# ---------------------------------------------------------------------------

@_timed
def criterion_12_algebra(fast: bool = False) -> CriterionResult:
    n_pairs = 30 if fast else 100
    grid = TimeGrid.uniform(1.0, 16)
    lat = build_lattice(1.0, 1, n_magnitudes=3, n_scalings=3)
    fine = refine_lattice(lat)
    rng = np.random.Generator(np.random.Philox(key=np.array([3, 3], dtype=np.uint64)))
    n, seed = 256, 12
    failures = []
    for k in range(n_pairs):
        a, b, c, d = rng.uniform(-1, 1, size=4)

        def xi(batch, a=a, b=b):
            return a * batch.values[:, -1, 0] + b * np.abs(batch.values).max(axis=1)[:, 0]

        def eta(batch, c=c, d=d):
            return c * batch.values[:, -1, 0] ** 2 + d * batch.values[:, 8, 0]

        up_xi = upper_expectation(xi, lat, grid, n, seed).value
        up_eta = upper_expectation(eta, lat, grid, n, seed).value
        up_sum = upper_expectation(lambda bt: xi(bt) + eta(bt), lat, grid, n, seed).value
        if up_sum > up_xi + up_eta + 1e-12:
            failures.append((k, "sublinearity"))
        dom = upper_expectation(lambda bt: xi(bt) + np.abs(eta(bt)), lat, grid, n, seed).value
        if up_xi > dom + 1e-12:
            failures.append((k, "monotonicity"))
        lo = lower_expectation(xi, lat, grid, n, seed).value
        neg_up = upper_expectation(lambda bt: -xi(bt), lat, grid, n, seed).value
        if lo != -neg_up:
            failures.append((k, "duality"))
        up_fine = upper_expectation(xi, fine, grid, n, seed).value
        lo_fine = lower_expectation(xi, fine, grid, n, seed).value
        if up_fine < up_xi - 1e-12 or lo_fine > lo + 1e-12:
            failures.append((k, "lattice nesting"))
    cval = upper_expectation(lambda bt: np.full(bt.n, 0.7), lat, grid, n, seed).value
    if cval != 0.7:
        failures.append((-1, "constants"))
    return CriterionResult(
        12, "estimator algebra (CRN-exact)", not failures,
        f"{len(failures)} failures over {n_pairs} pairs", "0 failures",
    )


# ---------------------------------------------------------------------------
# 13. byte-identical CLI output
# ---------------------------------------------------------------------------

@_timed
def criterion_13_determinism(fast: bool = False) -> CriterionResult:
    from . import cli

    cases = []
    for seed in (1, 2, 3):
        cases.append(["simulate", "--alpha", "0.3", "--beta", "0.8", "--bound", "1",
                      "--steps", "8", "--n", "16", "--seed", str(seed)])
        cases.append(["expectation", "--functional", "terminal-square", "--bound", "1",
                      "--steps", "16", "--n", "128", "--seed", str(seed)])
        cases.append(["expectation", "--functional", "terminal", "--bound", "1",
                      "--steps", "16", "--n", "128", "--seed", str(seed), "--workers", "4"])
        cases.append(["solve-semilinear", "--problem", "QUADRATIC", "--steps", "32",
                      "--n", "512", "--seed", str(seed)])
        cases.append(["snell", "--reward", "absvalue", "--bound", "1", "--depth", "4",
                      "--radius", "0.8", "--seed", str(seed)])
        cases.append(["perron", "--problem", "QUADRATIC", "--eps", "0.2", "--steps", "64",
                      "--n", "256", "--seed", str(seed)])
    mismatches = 0
    for argv in cases:
        out1 = cli.capture_csv(argv)
        out2 = cli.capture_csv(argv)
        if out1 != out2:
            mismatches += 1
        if "--workers" in argv:
            alt = [a if a != "4" else "1" for a in argv]
            if cli.capture_csv(alt) != out1:
                mismatches += 1
    return CriterionResult(
        13, "byte-identical stochastic output", mismatches == 0,
        f"{mismatches} mismatching runs over {len(cases)} cases x 2 repeats",
        "0 mismatches (repeats and 1-vs-4 workers)",
    )


ALL_CRITERIA = [
    criterion_1_runmax_value,
    criterion_2_kink,
    criterion_3_snell_oracle,
    criterion_4_positivity,
    criterion_5_uncertain_vol,
    criterion_6_first_order,
    criterion_7_perron,
    criterion_8_consistency,
    criterion_9_stability,
    criterion_10_partial_comparison,
    criterion_11_ito,
    criterion_12_algebra,
    criterion_13_determinism,
]


def run_suite(only=None, fast: bool = False) -> list[CriterionResult]:
    results = []
    for fn in ALL_CRITERIA:
        res_probe = fn(fast=fast) if (only is None or _cid_of(fn) in only) else None
        if res_probe is not None:
            results.append(res_probe)
    return results


def _cid_of(fn) -> int:
    return int(fn.__name__.split("_")[1])


def list_criteria() -> list[str]:
    return [f"{_cid_of(fn):2d} {fn.__name__}" for fn in ALL_CRITERIA]
