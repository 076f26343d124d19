import numpy as np
import pytest

from ppdelab.features import FeatureState
from ppdelab.oracles import (registry, sample_paths,
                             uncertain_volatility_generator)
from ppdelab.pathspace import DiscretePath, TimeGrid
from ppdelab.viscosity import (CheckConfig, Jet, TestCandidate, analytic_jet,
                               check_subsolution, check_supersolution,
                               classical_residual, default_family, fd_jet,
                               flavor_lattice)

REG = registry(1.0)
CFG = CheckConfig(bound=1.0)
GRID = TimeGrid.uniform(1.0, 32)


@pytest.fixture(scope="module")
def batch():
    return sample_paths(GRID, 8, seed=42)


def _point(entry, batch, i, t):
    return FeatureState.from_path(batch.path(i), t, entry.feature_spec)


class TestClassicalResidual:
    def test_heat_oracle_zero(self, batch):
        e = REG["HEAT-INTEGRAL"]
        pts = [(0.2, batch.path(0)), (0.5, batch.path(1)), (0.8, batch.path(2))]
        rep = classical_residual(e.smooth, e.generator, pts, e.feature_spec)
        assert rep.ok and rep.max_abs == 0.0

    def test_runmax_closed_form_residual(self, batch, rng):
        e = REG["HEAT-RUNMAX"]
        pts = []
        for _ in range(50):
            pts.append((float(rng.uniform(0, 0.9)), batch.path(int(rng.integers(0, batch.n)))))
        rep = classical_residual(e.smooth, e.generator, pts, e.feature_spec, tolerance=1e-6)
        assert rep.ok

    def test_maxdrift_off_peak_hand_value(self):
        # -dt u - |dw u| + 1 = -0 - 1 + 1 = 0 on the smooth branch
        e = REG["MAXDRIFT"]
        g = TimeGrid.uniform(1.0, 8)
        p = DiscretePath(g, np.concatenate([np.linspace(0, 0.6, 5), np.linspace(0.45, 0.2, 4)]))
        rep = classical_residual(e.smooth, e.generator, [(0.8, p)], e.feature_spec)
        assert rep.max_abs == 0.0

    def test_one_sided_verdicts(self, batch):
        e = REG["QUADRATIC"]
        sm = e.smooth
        from ppdelab.calculus import SmoothFunctional

        sub = SmoothFunctional(sm.u, lambda t, p: sm.dt(t, p) + 0.2, sm.dw, sm.dww)
        pts = [(0.3, batch.path(0))]
        rep = classical_residual(sub, e.generator, pts, e.feature_spec, tolerance=1e-9)
        assert rep.verdict("subsolution") and not rep.verdict("supersolution")


class TestConsistency:
    @pytest.mark.parametrize("name", ["QUADRATIC", "HEAT-INTEGRAL", "FROZEN"])
    def test_classical_oracles_pass_both_sides(self, name, batch):
        e = REG[name]
        for i, t in [(0, 0.25), (1, 0.5)]:
            st = _point(e, batch, i, t)
            jet = analytic_jet(e, t, st)
            sub = check_subsolution(e.value, e.generator, st, e.feature_spec, CFG, 1.0, jet=jet)
            sup = check_supersolution(e.value, e.generator, st, e.feature_spec, CFG, 1.0, jet=jet)
            assert sub.status == "pass" and sup.status == "pass"
            assert sub.n_qualified > 0 and sup.n_qualified > 0

    def test_fd_jet_matches_analytic_on_smooth(self, batch):
        e = REG["QUADRATIC"]
        st = _point(e, batch, 2, 0.4)
        j_fd = fd_jet(e.value, 0.4, st)
        j_an = analytic_jet(e, 0.4, st)
        assert j_fd.a == pytest.approx(j_an.a, abs=1e-6)
        assert j_fd.b[0] == pytest.approx(j_an.b[0], abs=1e-6)
        assert j_fd.c[0, 0] == pytest.approx(j_an.c[0, 0], abs=1e-3)

    def test_negative_controls_flag_correct_side(self, batch):
        e = REG["QUADRATIC"]
        c = 0.1
        st = _point(e, batch, 0, 0.25)
        up = lambda t, s: np.asarray(e.value(t, s)) + c * (1.0 - t)
        dn = lambda t, s: np.asarray(e.value(t, s)) - c * (1.0 - t)
        assert check_subsolution(up, e.generator, st, e.feature_spec, CFG, 1.0).status == "violation"
        assert check_supersolution(up, e.generator, st, e.feature_spec, CFG, 1.0).status != "violation"
        assert check_supersolution(dn, e.generator, st, e.feature_spec, CFG, 1.0).status == "violation"
        assert check_subsolution(dn, e.generator, st, e.feature_spec, CFG, 1.0).status != "violation"

    def test_fully_nonlinear_flavor(self, batch):
        # the convex solution solves the volatility-band equation too
        e = REG["QUADRATIC"]
        guv = uncertain_volatility_generator(0.5, 1.0)
        st = _point(e, batch, 1, 0.375)
        jet = analytic_jet(e, 0.375, st)
        assert check_subsolution(e.value, guv, st, e.feature_spec, CFG, 1.0, jet=jet).status == "pass"
        assert check_supersolution(e.value, guv, st, e.feature_spec, CFG, 1.0, jet=jet).status == "pass"


class TestMaxDrift:
    def test_vacuous_sub_side_at_peak(self):
        e = REG["MAXDRIFT"]
        g = TimeGrid.uniform(1.0, 16)
        p = DiscretePath(g, np.concatenate([np.linspace(0, 0.5, 9), np.full(8, 0.5)]))
        st = FeatureState.from_path(p, 0.5, e.feature_spec)
        sub = check_subsolution(e.value, e.generator, st, e.feature_spec, CFG, 1.0)
        sup = check_supersolution(e.value, e.generator, st, e.feature_spec, CFG, 1.0)
        assert sub.status == "vacuous"     # reported as vacuous, never as pass
        assert sub.n_qualified == 0
        assert sup.status == "pass"

    def test_frozen_candidates_time_slopes(self, batch):
        # qualifying candidates of the state-frozen solution carry the right
        # one-sided time slopes: -a <= tol on the sub side, >= -tol on super
        e = REG["FROZEN"]
        st = _point(e, batch, 3, 0.5)
        jet = analytic_jet(e, 0.5, st)
        sub = check_subsolution(e.value, e.generator, st, e.feature_spec, CFG, 1.0, jet=jet)
        sup = check_supersolution(e.value, e.generator, st, e.feature_spec, CFG, 1.0, jet=jet)
        assert sub.status == "pass" and sup.status == "pass"
        for r in sub.records:
            if r.qualified:
                assert r.lphi <= CFG.check_tolerance
        for r in sup.records:
            if r.qualified:
                assert r.lphi >= -CFG.check_tolerance


class TestQualifyingSetMonotonicity:
    def test_larger_bound_shrinks_memberships(self, batch):
        e = REG["QUADRATIC"]
        st = _point(e, batch, 1, 0.375)
        jet = analytic_jet(e, 0.375, st)
        fam = default_family(jet, 1.0, 1, first_order=False)
        cfg1 = CheckConfig(bound=1.0)
        cfg2 = CheckConfig(bound=2.0)
        sub1 = check_subsolution(e.value, e.generator, st, e.feature_spec, cfg1, 1.0, family=fam)
        sub2 = check_subsolution(e.value, e.generator, st, e.feature_spec, cfg2, 1.0, family=fam)
        q1 = {r.label for r in sub1.records if r.qualified}
        q2 = {r.label for r in sub2.records if r.qualified}
        # NOTE: the nesting L1 < L2 => memberships shrink holds when the
        # lattices are nested and the tolerance is common; cfg2's localization
        # spans differ, so compare on cfg1's geometry with cfg2's lattice
        cfg2_same_geom = CheckConfig(bound=2.0, cap_scale=cfg1.cap_scale * 0.5)
        sub2b = check_subsolution(e.value, e.generator, st, e.feature_spec, cfg2_same_geom, 1.0, family=fam)
        q2b = {r.label for r in sub2b.records if r.qualified}
        assert q2b <= q1 or q2 <= q1

    def test_recentring_idempotent(self):
        # candidates are built recentred: phi(t, 0) = 0 by construction, so
        # recentring again changes nothing
        cand = TestCandidate(0.3, np.array([0.2]), np.array([[1.0]]), 0.5)
        assert cand.values(0.0, np.zeros((1, 1)))[0] == 0.0


class TestReporting:
    def test_vacuous_never_pass(self, batch):
        e = REG["MAXDRIFT"]
        g = TimeGrid.uniform(1.0, 16)
        p = DiscretePath(g, np.concatenate([np.linspace(0, 0.5, 9), np.full(8, 0.5)]))
        st = FeatureState.from_path(p, 0.5, e.feature_spec)
        sub = check_subsolution(e.value, e.generator, st, e.feature_spec, CFG, 1.0)
        assert sub.status == "vacuous" and not sub.ok

    def test_flavor_lattices(self):
        assert np.all(flavor_lattice("first-order", CFG, 1).betas == 0)
        semi = flavor_lattice("semilinear", CFG, 1)
        assert np.allclose([b[0, 0] for b in semi.betas], 1.0)
        fn = flavor_lattice("fully-nonlinear", CFG, 1)
        assert fn.size >= 6
