"""Experiment runner: subcommand dispatch, config files, CSV emission.

Config files are INI ("[ppdelab]" section, keys mirroring the long flags);
command-line flags override config values, unknown keys are rejected. Every
stochastic subcommand requires an explicit seed, and the emitted CSV is a
pure function of (arguments, seed): the metadata comment carries the format
version and the seed but no timestamp, so repeated runs are byte-identical
(a wall-clock stamp can be opted in with --timestamp for provenance at the
cost of reproducibility).

Exit codes: 0 success, 1 usage/config error, 2 checks ran and found
violations or failures.
"""

from __future__ import annotations

import argparse
import configparser
import math
import sys
import time

import numpy as np

from .expectation import (hitting_functional, lower_expectation,
                          upper_expectation)
from .features import FeatureSpec, FeatureState
from .measures import ControlProcess, build_lattice, simulate_paths
from .oracles import registry, sample_paths, verify_all
from .pathspace import DomainError, HittingTimeSpec, TimeGrid
from .snell import TreeSpec, brute_force_stopping, snell_envelope, verify_supermartingale
from .solvers import (SemilinearProblem, max_abs_drift_problem, perron_scheme,
                      solve_first_order, solve_hjb, solve_semilinear,
                      uncertain_volatility_problem)
from .viscosity import CheckConfig, analytic_jet, check_subsolution, check_supersolution

CSV_VERSION = 1


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(header: list[str], rows: list[list], seed, stamp: bool = False) -> str:
    meta = f"# ppdelab-csv v{CSV_VERSION} seed={seed}"
    if stamp:
        meta += f" time={time.strftime('%Y-%m-%dT%H:%M:%S')}"
    lines = [meta, ",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# registered functionals and rewards for the CLI surface
# ---------------------------------------------------------------------------

def named_functional(name: str):
    if name == "terminal":
        return lambda b: b.values[:, -1, 0]
    if name == "terminal-square":
        return lambda b: b.values[:, -1, 0] ** 2
    if name == "running-max":
        return lambda b: np.maximum.accumulate(b.values[:, :, 0], axis=1)[:, -1]
    if name.startswith("hitting-eps:"):
        eps = float(name.split(":", 1)[1])
        return hitting_functional(HittingTimeSpec.radius(eps))
    raise DomainError(f"unknown functional {name!r}")


def named_reward(name: str):
    if name == "absvalue":
        return lambda t, st, rx: np.abs(st.x[:, 0])
    if name == "terminal-decay":
        return lambda t, st, rx: 1.0 - t
    if name == "maxgap":
        return lambda t, st, rx: st.xmax[:, 0] - st.x[:, 0]
    raise DomainError(f"unknown reward {name!r}")


def oracle_problem(name: str) -> SemilinearProblem:
    reg = registry(1.0)
    if name not in reg:
        raise DomainError(f"unknown problem {name!r}; oracles: {', '.join(reg)}")
    return SemilinearProblem.from_oracle(reg[name])


# ---------------------------------------------------------------------------
# subcommand implementations: each returns (csv text, exit code)
# ---------------------------------------------------------------------------

def cmd_simulate(a) -> tuple[str, int]:
    grid = TimeGrid.uniform(a.horizon, a.steps)
    control = ControlProcess.constant(grid, a.alpha, a.beta, a.bound)
    batch = simulate_paths(control, a.n, a.seed, a.noise)
    header = ["path_id", "t"] + [f"x{k + 1}" for k in range(batch.d)]
    rows = []
    for i in range(batch.n):
        for t, v in zip(batch.times, batch.values[i]):
            rows.append([i, float(t)] + [float(x) for x in v])
    return write_csv(header, rows, a.seed, a.timestamp), 0


def cmd_expectation(a) -> tuple[str, int]:
    grid = TimeGrid.uniform(a.horizon, a.steps)
    lat = build_lattice(a.bound, 1, a.magnitudes, a.scalings)
    xi = named_functional(a.functional)
    fn = lower_expectation if a.side == "lower" else upper_expectation
    est = fn(xi, lat, grid, a.n, a.seed, noise=a.noise, workers=a.workers)
    rows = [[a.functional, a.bound, a.n, a.seed, est.value, est.stderr, est.control_label]]
    return write_csv(["functional", "L", "n", "seed", "value", "stderr", "arg_control"],
                     rows, a.seed, a.timestamp), 0


def cmd_snell(a) -> tuple[str, int]:
    lat = build_lattice(a.bound, 1, 2, 2)
    spec = (HittingTimeSpec.radius(a.radius) if a.domain_radius is None
            else HittingTimeSpec.ball_domain(a.domain_radius, 1, a.cap))
    reward = named_reward(a.reward)
    anchor = FeatureState.initial(FeatureSpec(track_max=True), 1, 1)
    tree = TreeSpec(a.depth)
    env = snell_envelope(reward, spec, lat, tree, horizon=a.horizon, anchor=anchor)
    oracle = brute_force_stopping(reward, spec, lat, tree, horizon=a.horizon,
                                  anchor=anchor) if a.depth <= 10 else float("nan")
    match = int(abs(env.value - oracle) <= 1e-12) if not math.isnan(oracle) else -1
    rows = [[a.depth, a.bound, env.value, env.stop_time_mean(), oracle, match]]
    code = 0 if match != 0 and verify_supermartingale(env).ok else 2
    return write_csv(["depth", "L", "Y0", "tau_star_mean", "oracle_value", "match"],
                     rows, a.seed, a.timestamp), code


def _solver_csv(scheme: str, problem: str, dt: float, n: int, seed, out, stamp: bool,
                extra=None) -> str:
    # the wall-clock column is opt-in: default output is byte-reproducible
    runtime = float(out.diagnostics.get("runtime_ms", 0.0)) if stamp else 0.0
    header = ["scheme", "problem", "dt", "npaths", "seed", "value", "stderr", "runtime_ms"]
    row = [scheme, problem, dt, n, seed, out.value, out.stderr, runtime]
    for k, v in (extra or {}).items():
        header.append(k)
        row.append(v)
    return write_csv(header, [row], seed, stamp)


def cmd_solve_semilinear(a) -> tuple[str, int]:
    problem = oracle_problem(a.problem)
    grid = TimeGrid.uniform(problem.horizon, a.steps)
    out = solve_semilinear(problem, grid, a.n, a.seed, mode=a.mode, picard=a.picard)
    return _solver_csv(out.scheme, a.problem, problem.horizon / a.steps, a.n, a.seed, out,
                       a.timestamp), 0


def cmd_solve_hjb(a) -> tuple[str, int]:
    spec = FeatureSpec()
    sign = -1.0 if a.payoff == "neg-square" else 1.0
    problem = uncertain_volatility_problem(
        a.sigma_low, a.sigma_high, lambda st: sign * st.x[:, 0] ** 2, spec,
        name=f"uv-{a.payoff}")
    grid = TimeGrid.uniform(problem.horizon, a.steps)
    out = solve_hjb(problem, grid, mode=a.mode, n_paths=a.n, seed=a.seed)
    return _solver_csv(out.scheme, problem.name, problem.horizon / a.steps, a.n, a.seed, out,
                       a.timestamp, {"k_lo": a.sigma_low, "k_hi": a.sigma_high}), 0


def cmd_solve_first_order(a) -> tuple[str, int]:
    spec = FeatureSpec(track_max=True)
    problem = max_abs_drift_problem(lambda st: 2 * st.xmax[:, 0] - st.x[:, 0], spec,
                                    bound=a.bound, n_drifts=a.drifts)
    grid = TimeGrid.uniform(problem.horizon, a.steps)
    out = solve_first_order(problem, grid)
    return _solver_csv(out.scheme, problem.name, problem.horizon / a.steps, 0, a.seed, out,
                       a.timestamp, {"drifts": a.drifts}), 0


def cmd_perron(a) -> tuple[str, int]:
    problem = oracle_problem(a.problem)
    grid = TimeGrid.uniform(problem.horizon, a.steps)
    res = perron_scheme(problem, a.eps, grid, a.n, a.seed)
    header = ["scheme", "problem", "dt", "npaths", "seed", "eps", "psi", "upper", "lower",
              "gap", "stderr"]
    rows = [["perron", a.problem, problem.horizon / a.steps, a.n, a.seed, a.eps,
             res.psi, res.upper, res.lower, res.gap, res.stderr]]
    return write_csv(header, rows, a.seed, a.timestamp), 0


def cmd_check_viscosity(a) -> tuple[str, int]:
    reg = registry(1.0)
    if a.oracle not in reg:
        raise DomainError(f"unknown oracle {a.oracle!r}")
    entry = reg[a.oracle]
    cfg = CheckConfig(bound=a.bound, check_tolerance=a.check_tol)
    grid = TimeGrid.uniform(1.0, 32)
    batch = sample_paths(grid, max(a.points, 2), seed=a.seed)
    rng = np.random.Generator(np.random.Philox(key=np.array([a.seed, 77], dtype=np.uint64)))
    bump = a.corrupt

    def u_fn(t, st):
        base = np.asarray(entry.value(t, st), dtype=float)
        return base + bump * (1.0 - t) if bump else base

    rows = []
    worst = "pass"
    for k in range(a.points):
        t = float(rng.uniform(0.0, 0.85))
        st = FeatureState.from_path(batch.path(k % batch.n), t, entry.feature_spec)
        jet = None
        if entry.smooth_feat is not None and not bump:
            jet = analytic_jet(entry, t, st)
        sub = check_subsolution(u_fn, entry.generator, st, entry.feature_spec, cfg, 1.0, jet=jet)
        sup = check_supersolution(u_fn, entry.generator, st, entry.feature_spec, cfg, 1.0, jet=jet)
        for v in (sub, sup):
            rows.append([a.oracle, v.side, round(t, 6), v.status, v.n_qualified,
                         max((r.lphi for r in v.records if r.qualified), default=0.0)])
            if v.status == "violation":
                worst = "violation"
    code = 2 if worst == "violation" else 0
    return write_csv(["oracle", "side", "t", "status", "qualified", "max_lphi"],
                     rows, a.seed, a.timestamp), code


def cmd_verify_example(a) -> tuple[str, int]:
    rows = []
    code = 0
    for r in verify_all():
        if a.name != "all" and r.oracle != a.name:
            continue
        rows.append([r.oracle, r.check, r.points, r.max_defect, int(r.passed)])
        if not r.passed:
            code = 2
    if not rows:
        raise DomainError(f"unknown oracle {a.name!r}")
    return write_csv(["oracle", "check", "points", "max_defect", "pass"], rows, 0), code


def cmd_acceptance(a) -> tuple[str, int]:
    from .acceptance import list_criteria, run_suite

    if a.list:
        return "\n".join(list_criteria()) + "\n", 0
    only = set(a.only) if a.only else None
    results = run_suite(only=only, fast=a.fast)
    lines = [r.line() for r in results]
    code = 0 if all(r.passed for r in results) else 2
    lines.append(f"{sum(r.passed for r in results)}/{len(results)} criteria passed")
    return "\n".join(lines) + "\n", code


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------

def _add_common(p, stochastic=True):
    p.add_argument("--config", default=None, help="INI config file ([ppdelab] section)")
    p.add_argument("--out", default=None, help="output file (default stdout)")
    p.add_argument("--timestamp", action="store_true", help="stamp the CSV metadata (breaks byte-reproducibility)")
    if stochastic:
        p.add_argument("--seed", type=int, required=False, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ppdelab", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Euler paths under a constant control")
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--bound", type=float, default=1.0)
    p.add_argument("--horizon", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=16)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--noise", choices=["gaussian", "rademacher"], default="gaussian")
    _add_common(p)

    p = sub.add_parser("expectation", help="upper/lower nonlinear expectation")
    p.add_argument("--functional", required=True)
    p.add_argument("--side", choices=["upper", "lower"], default="upper")
    p.add_argument("--bound", type=float, default=1.0)
    p.add_argument("--horizon", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=64)
    p.add_argument("--n", type=int, default=4096)
    p.add_argument("--magnitudes", type=int, default=5)
    p.add_argument("--scalings", type=int, default=5)
    p.add_argument("--noise", choices=["gaussian", "rademacher", "exact-tree"], default="gaussian")
    p.add_argument("--workers", type=int, default=1)
    _add_common(p)

    p = sub.add_parser("snell", help="optimal stopping envelope vs brute force")
    p.add_argument("--reward", required=True)
    p.add_argument("--bound", type=float, default=1.0)
    p.add_argument("--depth", type=int, default=6)
    p.add_argument("--radius", type=float, default=0.8)
    p.add_argument("--domain-radius", type=float, default=None)
    p.add_argument("--cap", type=float, default=1.0)
    p.add_argument("--horizon", type=float, default=1.0)
    _add_common(p)

    p = sub.add_parser("solve-semilinear", help="regression/tree backward solver")
    p.add_argument("--problem", required=True)
    p.add_argument("--steps", type=int, default=64)
    p.add_argument("--n", type=int, default=20000)
    p.add_argument("--mode", choices=["mc", "tree"], default="mc")
    p.add_argument("--picard", type=int, default=1)
    _add_common(p)

    p = sub.add_parser("solve-hjb", help="uncertain-volatility control lattice")
    p.add_argument("--sigma-low", type=float, default=0.5)
    p.add_argument("--sigma-high", type=float, default=1.0)
    p.add_argument("--payoff", choices=["square", "neg-square"], default="square")
    p.add_argument("--steps", type=int, default=16)
    p.add_argument("--n", type=int, default=0)
    p.add_argument("--mode", choices=["tree", "regression"], default="tree")
    _add_common(p)

    p = sub.add_parser("solve-first-order", help="deterministic drift-control solver")
    p.add_argument("--bound", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=32)
    p.add_argument("--drifts", type=int, default=5)
    _add_common(p)

    p = sub.add_parser("perron", help="exit-skeleton envelope scheme")
    p.add_argument("--problem", required=True)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--steps", type=int, default=512)
    p.add_argument("--n", type=int, default=20000)
    _add_common(p)

    p = sub.add_parser("check-viscosity", help="sub/supersolution verdicts at sampled points")
    p.add_argument("--oracle", required=True)
    p.add_argument("--corrupt", type=float, default=0.0,
                   help="add this multiple of (T - t) to the solution (negative control)")
    p.add_argument("--bound", type=float, default=1.0)
    p.add_argument("--points", type=int, default=5)
    p.add_argument("--check-tol", type=float, default=1e-3)
    _add_common(p)

    p = sub.add_parser("verify-example", help="closed-form registry audit")
    p.add_argument("name", nargs="?", default="all")
    _add_common(p, stochastic=False)

    p = sub.add_parser("acceptance", help="run the acceptance criteria")
    p.add_argument("--list", action="store_true")
    p.add_argument("--only", type=int, nargs="*", default=None)
    p.add_argument("--fast", action="store_true", help="reduced sizes (smoke run, not the contract)")
    _add_common(p, stochastic=False)

    return ap


COMMANDS = {
    "simulate": (cmd_simulate, True),
    "expectation": (cmd_expectation, True),
    "snell": (cmd_snell, True),
    "solve-semilinear": (cmd_solve_semilinear, True),
    "solve-hjb": (cmd_solve_hjb, True),
    "solve-first-order": (cmd_solve_first_order, True),
    "perron": (cmd_perron, True),
    "check-viscosity": (cmd_check_viscosity, True),
    "verify-example": (cmd_verify_example, False),
    "acceptance": (cmd_acceptance, False),
}


def _apply_config(ap: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = ap.parse_args(argv)
    if getattr(args, "config", None):
        cp = configparser.ConfigParser()
        read = cp.read(args.config)
        if not read:
            raise DomainError(f"config file {args.config!r} not found")
        if "ppdelab" not in cp:
            raise DomainError("config must contain a [ppdelab] section")
        valid = set(vars(args))
        cli_given = {a.split("=")[0].lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
        for key, raw in cp["ppdelab"].items():
            dest = key.replace("-", "_")
            if dest not in valid:
                raise DomainError(f"unknown config key {key!r} for {args.command}")
            if dest in cli_given:
                continue  # flags override config
            current = getattr(args, dest)
            if isinstance(current, bool):
                setattr(args, dest, cp["ppdelab"].getboolean(key))
            elif isinstance(current, int) and current is not None:
                setattr(args, dest, int(raw))
            elif isinstance(current, float) and current is not None:
                setattr(args, dest, float(raw))
            else:
                setattr(args, dest, raw)
    return args


def run(argv: list[str]) -> tuple[str, int]:
    ap = build_parser()
    try:
        args = _apply_config(ap, argv)
        fn, stochastic = COMMANDS[args.command]
        if stochastic and getattr(args, "seed", None) is None:
            raise DomainError("stochastic subcommands require --seed (no wall-clock default)")
        text, code = fn(args)
    except DomainError as exc:
        return f"error: {exc}\n", 1
    out_path = getattr(args, "out", None)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
        return "", code
    return text, code


def capture_csv(argv: list[str]) -> str:
    """Run a subcommand and return its CSV text (used by the determinism test)."""
    text, code = run(argv)
    if code == 1:
        raise DomainError(text)
    return text


def main() -> None:
    text, code = run(sys.argv[1:])
    if text:
        sys.stdout.write(text)
    sys.exit(code)


if __name__ == "__main__":
    main()
