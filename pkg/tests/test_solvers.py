import math

import numpy as np
import pytest

from ppdelab.features import FeatureSpec, FeatureState
from ppdelab.measures import ControlProcess, simulate_paths
from ppdelab.oracles import registry, sample_paths
from ppdelab.pathspace import DiscretePath, DomainError, HittingTimeSpec, TimeGrid
from ppdelab.solvers import (FirstOrderProblem, SemilinearProblem,
                             coupled_mc_convergence, dpp_consistency,
                             exit_skeleton, max_abs_drift_problem,
                             partial_comparison_probe, perron_scheme,
                             skeleton_sup_distance, solve_first_order,
                             solve_hjb, solve_semilinear, stability_probe,
                             stability_signed_defect, tree_convergence_ratios,
                             uncertain_volatility_problem)

REG = registry(1.0)
SPEC0 = FeatureSpec()


def quad_problem():
    return SemilinearProblem.from_oracle(REG["QUADRATIC"])


class TestSemilinear:
    def test_terminal_square(self):
        out = solve_semilinear(quad_problem(), TimeGrid.uniform(1.0, 64), 20_000, seed=5)
        assert out.value == pytest.approx(1.0, abs=3 * out.stderr + 0.01)

    def test_frozen_terminal_value_field(self):
        # terminal value frozen mid-horizon: u(t, w) = w(min(t, t0))
        entry = REG["KINK"]
        problem = SemilinearProblem.from_oracle(entry)
        grid = TimeGrid.uniform(1.0, 32)
        batch = sample_paths(grid, 4, seed=6)
        for i, t in [(0, 0.25), (1, 0.6), (2, 0.75)]:
            g = grid.refined_with([t])
            p = batch.path(i).on_refined([t])
            out = solve_semilinear(problem, g, 20_000, seed=7, anchor=(t, p))
            truth = float(p.value(min(t, entry.t0))[0])
            assert out.value == pytest.approx(truth, abs=3 * out.stderr + 0.01)

    def test_runmax_terminal_coarse(self):
        out = solve_semilinear(SemilinearProblem.from_oracle(REG["HEAT-RUNMAX"]),
                               TimeGrid.uniform(1.0, 256), 20_000, seed=5)
        # 0.58 sqrt(dt) discrete-monitoring bias pushes the value down
        assert out.value == pytest.approx(math.sqrt(2 / math.pi), abs=0.05)
        assert out.value < math.sqrt(2 / math.pi)

    def test_driver_in_y(self):
        problem = quad_problem().with_driver(lambda t, st, y, z: 0.5 * np.asarray(y), 0.5)
        out = solve_semilinear(problem, TimeGrid.uniform(1.0, 64), 20_000, seed=5, picard=2)
        assert out.value == pytest.approx(math.exp(0.5), abs=3 * out.stderr + 0.03)

    def test_driver_in_z(self):
        # F = c z with unit vol and linear terminal: value c T by Girsanov
        problem = SemilinearProblem("linear-z", 1.0, 1.0,
                                    lambda t, st, y, z: 0.8 * z[:, 0],
                                    lambda st: st.x[:, 0], SPEC0, lipschitz=0.8)
        out = solve_semilinear(problem, TimeGrid.uniform(1.0, 64), 40_000, seed=5, picard=2)
        assert out.value == pytest.approx(0.8, abs=3 * out.stderr + 0.03)

    def test_tree_mode_exact(self):
        out = solve_semilinear(quad_problem(), TimeGrid.uniform(1.0, 10), 0, 0, mode="tree")
        assert out.value == pytest.approx(1.0, abs=1e-9)
        assert out.stderr == 0.0

    def test_monotone_in_terminal_data(self):
        p1 = quad_problem()
        p2 = SemilinearProblem("shifted", 1.0, 1.0, None,
                               lambda st: st.x[:, 0] ** 2 + 0.25, SPEC0)
        a = solve_semilinear(p1, TimeGrid.uniform(1.0, 32), 4000, seed=9)
        b = solve_semilinear(p2, TimeGrid.uniform(1.0, 32), 4000, seed=9)
        assert b.value >= a.value  # exact under common random numbers

    def test_surrogate_value_field(self):
        out = solve_semilinear(quad_problem(), TimeGrid.uniform(1.0, 32), 20_000, seed=5,
                               want_surrogate=True)
        st = FeatureState(SPEC0, 0.5, np.array([[0.4]]))
        val = float(out.surrogate.evaluate(0.5, st)[0])
        assert val == pytest.approx(0.4 ** 2 + 0.5, abs=0.02)

    def test_grid_horizon_mismatch(self):
        with pytest.raises(DomainError):
            solve_semilinear(quad_problem(), TimeGrid.uniform(2.0, 8), 100, seed=1)


class TestHJB:
    def test_uncertain_vol_band(self):
        grid = TimeGrid.uniform(1.0, 16)
        up = solve_hjb(uncertain_volatility_problem(0.5, 1.0, lambda st: st.x[:, 0] ** 2, SPEC0), grid)
        dn = solve_hjb(uncertain_volatility_problem(0.5, 1.0, lambda st: -st.x[:, 0] ** 2, SPEC0), grid)
        assert up.value == pytest.approx(1.0, abs=1e-9)
        assert dn.value == pytest.approx(-0.25, abs=1e-9)

    def test_singleton_control_matches_semilinear_tree_bitwise(self):
        grid = TimeGrid.uniform(1.0, 12)
        hjb = solve_hjb(uncertain_volatility_problem(0.999999, 1.0, lambda st: st.x[:, 0] ** 2, SPEC0), grid)
        single = solve_hjb(
            uncertain_volatility_problem(0.5, 1.0, lambda st: st.x[:, 0] ** 2, SPEC0)
            .__class__(name="single", horizon=1.0, controls=(1.0,),
                       sigma=lambda t, st, k: np.full(st.n, float(k)),
                       driver=None, terminal=lambda st: st.x[:, 0] ** 2,
                       feature_spec=SPEC0),
            grid)
        semi = solve_semilinear(quad_problem(), grid, 0, 0, mode="tree")
        assert single.value == semi.value  # same engine, bit-identical

    def test_regression_mode_close_to_tree(self):
        grid = TimeGrid.uniform(1.0, 32)
        p = uncertain_volatility_problem(0.5, 1.0, lambda st: st.x[:, 0] ** 2, SPEC0)
        out = solve_hjb(p, grid, mode="regression", n_paths=20_000, seed=11, basis_degree=4)
        assert out.value == pytest.approx(1.0, abs=0.03)

    def test_regression_mode_guards_path_features(self):
        p = uncertain_volatility_problem(0.5, 1.0, lambda st: st.xmax[:, 0],
                                         FeatureSpec(track_max=True))
        with pytest.raises(DomainError):
            solve_hjb(p, TimeGrid.uniform(1.0, 8), mode="regression", n_paths=100, seed=1)


class TestFirstOrder:
    def test_value_at_origin_is_zero(self):
        problem = max_abs_drift_problem(lambda st: 2 * st.xmax[:, 0] - st.x[:, 0],
                                        FeatureSpec(track_max=True))
        out = solve_first_order(problem, TimeGrid.uniform(1.0, 32))
        assert out.value == pytest.approx(0.0, abs=1e-12)

    def test_anchor_closed_form(self):
        problem = max_abs_drift_problem(lambda st: 2 * st.xmax[:, 0] - st.x[:, 0],
                                        FeatureSpec(track_max=True))
        g = TimeGrid.uniform(1.0, 32)
        times = np.linspace(0, 0.5, 9)
        p = DiscretePath.from_knots(times, np.concatenate([np.linspace(0, 1, 5), np.full(4, 1.0)])[:9] * np.linspace(0, 1, 9))
        # simple prefix with running max 1 and current value 0.3 at t = 0.5
        knots = np.linspace(0, 0.5, 6)
        vals = np.array([0.0, 0.5, 1.0, 0.8, 0.5, 0.3])
        p = DiscretePath.from_knots(knots, vals)
        out = solve_first_order(problem, g, anchor=(0.5, p))
        assert out.value == pytest.approx(2 * 1.0 - 0.3, abs=(1 / 32) * 3)

    def test_linear_terminal_max_drift_exact(self):
        problem = FirstOrderProblem(
            "linear", 1.0, 1.0, np.array([-1.0, 1.0]),
            running_cost=lambda t, st, a: np.zeros(st.n),
            terminal=lambda st: st.x[:, 0], feature_spec=SPEC0)
        out = solve_first_order(problem, TimeGrid.uniform(1.0, 16))
        assert out.value == 1.0  # L * T exactly

    def test_elementary_upper_bound(self):
        # value never exceeds the best terminal minus the accumulated least cost
        spec = FeatureSpec(track_max=True)
        problem = max_abs_drift_problem(lambda st: 2 * st.xmax[:, 0] - st.x[:, 0], spec)
        steps = 8
        out = solve_first_order(problem, TimeGrid.uniform(1.0, steps))
        # enumerate all drift words on the same lattice
        best = -np.inf
        dt = 1.0 / steps
        for word in np.ndindex(*(len(problem.drifts),) * steps):
            x, m = 0.0, 0.0
            for w in word:
                x += problem.drifts[w] * dt
                m = max(m, x)
            best = max(best, 2 * m - x)
        assert out.value <= best - 1.0 * 1.0 + 1e-12 + 1e-9  # cost rate 1 over [0, 1]


class TestExitSkeleton:
    def test_low_oscillation_is_chord(self):
        g = TimeGrid.uniform(1.0, 16)
        p = DiscretePath(g, 0.05 * np.sin(np.pi * g.knots))
        sk = exit_skeleton(p, 0.5)
        assert len(sk.times) == 2
        assert sk.values[-1, 0] == p.values[-1, 0]

    def test_sup_distance_bound(self, grid64):
        c = ControlProcess.constant(grid64, 0.0, 1.0, bound=1.0)
        batch = simulate_paths(c, 100, seed=15)
        eps = 0.25
        lip_slack = 0.0
        for i in range(batch.n):
            p = batch.path(i)
            d = skeleton_sup_distance(p, eps)
            # one grid step of exit overshoot on top of the 2 eps bound
            step_osc = np.abs(np.diff(p.values[:, 0])).max()
            assert d <= 2 * eps + 2 * step_osc + 1e-12

    def test_knot_count_monotone_in_eps(self, grid64):
        c = ControlProcess.constant(grid64, 0.0, 1.0, bound=1.0)
        p = simulate_paths(c, 1, seed=16).path(0)
        n_coarse = len(exit_skeleton(p, 0.5).times)
        n_fine = len(exit_skeleton(p, 0.25).times)
        assert n_fine >= n_coarse

    def test_terminal_knot_is_path_terminal(self, grid64):
        c = ControlProcess.constant(grid64, 0.2, 1.0, bound=1.0)
        p = simulate_paths(c, 1, seed=17).path(0)
        sk = exit_skeleton(p, 0.3)
        assert sk.times[-1] == p.times[-1]
        assert sk.values[-1, 0] == p.values[-1, 0]


class TestPerron:
    def test_linear_terminal_unbiased(self):
        problem = SemilinearProblem("linear", 1.0, 1.0, None, lambda st: st.x[:, 0],
                                    SPEC0, rho0=lambda r: r)
        for eps in (0.3, 0.15):
            res = perron_scheme(problem, eps, TimeGrid.uniform(1.0, 256), 20_000, seed=18)
            assert res.psi == pytest.approx(0.0, abs=3 * res.stderr)

    def test_gap_formula_exact(self):
        problem = SemilinearProblem("lip1", 1.0, 1.0, None, lambda st: st.x[:, 0],
                                    SPEC0, rho0=lambda r: r)
        res = perron_scheme(problem, 0.1, TimeGrid.uniform(1.0, 128), 1000, seed=18)
        assert res.gap == 2 * 0.2 * 2.0  # 2 rho(2 eps) (1 + T) with rho = id

    def test_sandwich_quadratic(self):
        problem = quad_problem()
        res = perron_scheme(problem, 0.1, TimeGrid.uniform(1.0, 512), 20_000, seed=18)
        bound = problem.rho0(0.2) * 2.0 + 3 * res.stderr
        assert abs(res.psi - 1.0) <= bound
        assert res.lower <= 1.0 <= res.upper

    def test_integral_terminal_sees_skeleton_bias(self):
        # path-integral data genuinely distinguishes skeleton from path
        problem = SemilinearProblem.from_oracle(REG["HEAT-INTEGRAL"])
        res_c = perron_scheme(problem, 0.5, TimeGrid.uniform(1.0, 256), 20_000, seed=19)
        res_f = perron_scheme(problem, 0.05, TimeGrid.uniform(1.0, 256), 20_000, seed=19)
        # both within their envelopes of the true value 0, tighter for small eps
        assert abs(res_c.psi) <= problem.rho0(1.0) * 2 + 3 * res_c.stderr
        assert abs(res_f.psi) <= problem.rho0(0.1) * 2 + 3 * res_f.stderr

    def test_driver_with_skeleton_arguments(self):
        # driver reads the stopped skeleton; constant drivers must integrate
        problem = SemilinearProblem(
            "driver", 1.0, 1.0,
            lambda t, st, y, z: 0.3 * np.ones(st.n),
            lambda st: st.x[:, 0], SPEC0, rho0=lambda r: r, lipschitz=0.0)
        res = perron_scheme(problem, 0.2, TimeGrid.uniform(1.0, 128), 10_000, seed=20)
        assert res.psi == pytest.approx(0.3, abs=3 * res.stderr + 0.01)

    def test_unit_diffusion_required(self):
        bad = SemilinearProblem("bad", 1.0, 2.0, None, lambda st: st.x[:, 0], SPEC0,
                                rho0=lambda r: r)
        with pytest.raises(DomainError):
            perron_scheme(bad, 0.1, TimeGrid.uniform(1.0, 64), 100, seed=1)


class TestProbes:
    def test_dpp_fixed_time(self):
        rep = dpp_consistency(quad_problem(), 0.5, TimeGrid.uniform(1.0, 32), 20_000, seed=21)
        assert rep.ok and rep.defect <= rep.tolerance

    def test_dpp_degenerate_times_exact(self):
        rep0 = dpp_consistency(quad_problem(), 0.0, TimeGrid.uniform(1.0, 16), 2000, seed=21)
        assert rep0.defect == 0.0 and rep0.exact
        repT = dpp_consistency(quad_problem(), 1.0, TimeGrid.uniform(1.0, 16), 2000, seed=21)
        assert repT.defect == 0.0

    def test_dpp_hitting_time(self):
        spec = HittingTimeSpec.ball_domain(0.8, 1, cap=0.5)
        rep = dpp_consistency(quad_problem(), spec, TimeGrid.uniform(1.0, 32), 20_000, seed=22)
        assert rep.defect <= max(rep.tolerance, 0.02)

    def test_dpp_with_driver(self):
        # the two legs re-integrate the driver, so the defect carries the
        # explicit scheme's O(dt) bias on top of the Monte Carlo noise
        problem = quad_problem().with_driver(lambda t, st, y, z: 0.5 * np.asarray(y), 0.5)
        grid = TimeGrid.uniform(1.0, 128)
        rep = dpp_consistency(problem, 0.5, grid, 20_000, seed=23, picard=2)
        assert rep.defect <= rep.tolerance + 2.0 * (1.0 / 128)

    def test_stability_rows(self):
        rows = stability_probe(quad_problem(), (0.1, 0.05), TimeGrid.uniform(1.0, 32), 20_000, seed=24)
        assert all(r.ok for r in rows)
        assert rows[0].defect > rows[1].defect

    def test_stability_sign_flip_tree(self):
        grid = TimeGrid.uniform(1.0, 8)
        assert stability_signed_defect(quad_problem(), 0.1, grid) == pytest.approx(0.1, abs=1e-9)
        assert stability_signed_defect(quad_problem(), -0.1, grid) == pytest.approx(-0.1, abs=1e-9)

    def test_partial_comparison(self):
        rep = partial_comparison_probe(REG["QUADRATIC"], 0.25, TimeGrid.uniform(1.0, 32), 20_000, seed=25)
        assert rep.ok
        assert rep.margin_super >= 0.25 - 3 * rep.stderr
        assert rep.margin_sub >= 0.25 - 3 * rep.stderr
        eq = partial_comparison_probe(REG["QUADRATIC"], 0.0, TimeGrid.uniform(1.0, 32), 20_000, seed=25)
        assert abs(eq.margin_super) <= 3 * eq.stderr

    def test_tree_convergence_first_order_rate(self):
        problem = quad_problem().with_driver(lambda t, st, y, z: 0.5 * np.asarray(y), 0.5)
        ratios = tree_convergence_ratios(problem, 8, levels=4)
        for r in ratios:
            assert 1.4 <= r <= 3.0

    def test_coupled_mc_convergence_runmax(self):
        ratios = coupled_mc_convergence(REG["HEAT-RUNMAX"], 64, 40_000, seed=26, levels=4)
        for r in ratios:
            assert 1.35 <= r <= 3.0
