import math

import numpy as np
import pytest

from ppdelab.calculus import SmoothFunctional, ito_residual_rms, smooth_from_fd
from ppdelab.features import FeatureState
from ppdelab.oracles import (classical_defect, heat_runmax_entry, kink_entry,
                             psi_lookback, registry, sample_paths, verify_all)
from ppdelab.pathspace import DiscretePath, DomainError, TimeGrid

REG = registry(1.0)
GRID = TimeGrid.uniform(1.0, 64)


class TestClosedForms:
    def test_runmax_at_origin(self):
        z = DiscretePath.zero(GRID, 1)
        assert REG["HEAT-RUNMAX"].u_path(0.0, z) == pytest.approx(2.0 / math.sqrt(2 * math.pi))

    def test_runmax_value_is_mc_mean(self, brownian_batch):
        # closed form == Monte Carlo mean of the conditional running max
        vals = REG["HEAT-RUNMAX"].xi_batch(brownian_batch)
        # independent quadrature oracle for E[max of BM]: sqrt(2/pi)
        from scipy.integrate import quad

        density_mean = quad(lambda x: 2 * x * math.exp(-x * x / 2) / math.sqrt(2 * math.pi), 0, 12)[0]
        assert density_mean == pytest.approx(math.sqrt(2 / math.pi), abs=1e-10)

    def test_heat_integral_linear_path(self):
        g = TimeGrid.uniform(1.0, 8)
        p = DiscretePath(g, 2 * g.knots)
        assert REG["HEAT-INTEGRAL"].u_path(0.5, p) == pytest.approx(0.75)

    def test_maxdrift_origin(self):
        z = DiscretePath.zero(GRID, 1)
        assert REG["MAXDRIFT"].u_path(0.0, z) == 0.0

    def test_psi_function(self):
        assert psi_lookback(np.array([0.0]))[0] == pytest.approx(2 / math.sqrt(2 * math.pi))
        # psi(z) -> z for large z (the max is almost surely the head start)
        assert psi_lookback(np.array([6.0]))[0] == pytest.approx(6.0, abs=1e-7)

    def test_runmax_rejects_x_above_y(self):
        e = REG["HEAT-RUNMAX"]
        bad = FeatureState(e.feature_spec, 0.3, np.array([[1.0]]), xmax=np.array([[0.5]]))
        with pytest.raises(DomainError):
            e.value(0.3, bad)

    def test_kink_freeze(self):
        e = REG["KINK"]
        g = TimeGrid.uniform(1.0, 8)
        p = DiscretePath(g, g.knots.copy())  # identity path
        assert e.u_path(0.25, p) == pytest.approx(0.25)   # before t0: current value
        assert e.u_path(0.8, p) == pytest.approx(0.5)     # after t0: frozen


class TestRegistryAudit:
    def test_verify_all_passes(self):
        rows = verify_all()
        assert rows, "registry audit produced no rows"
        bad = [r for r in rows if not r.passed]
        assert not bad, f"failing checks: {bad}"

    def test_expected_membership(self):
        names = set(REG)
        assert names == {"HEAT-INTEGRAL", "HEAT-RUNMAX", "FROZEN", "MAXDRIFT",
                         "KINK", "RUNMAX-NONSMOOTH", "QUADRATIC"}
        classes = {n: e.classification for n, e in REG.items()}
        assert classes["QUADRATIC"] == "classical-smooth"
        assert classes["KINK"] == "viscosity-only"
        assert classes["RUNMAX-NONSMOOTH"] == "non-smooth-counterexample"

    def test_corrupted_space_derivative_fails_residual(self, brownian_batch):
        e = REG["HEAT-INTEGRAL"]
        sm = e.smooth
        corrupted = SmoothFunctional(sm.u, sm.dt, lambda t, p: sm.dw(t, p) + 0.1, sm.dww)
        p = brownian_batch.path(0)
        # the heat generator ignores dw, so corrupting dw is invisible in the
        # residual but blows up the Ito defect instead
        batch = sample_paths(TimeGrid.uniform(1.0, 32), 64, seed=3)
        assert ito_residual_rms(corrupted, batch) > 0.02
        corrupted_t = SmoothFunctional(sm.u, lambda t, p: sm.dt(t, p) + 0.1, sm.dw, sm.dww)
        defect = abs(-corrupted_t.dt(0.3, p) - 0.0)
        assert defect == pytest.approx(0.1)

    def test_kink_without_freeze_handling_spikes(self):
        e = REG["KINK"]
        batch = sample_paths(TimeGrid.uniform(1.0, 32), 128, seed=5)
        good = e.smooth
        assert ito_residual_rms(good, batch) <= 1e-10
        # dropping the derivative cut at t0 leaves the post-t0 increments in
        naive = SmoothFunctional(good.u, good.dt, lambda t, p: np.ones(1), good.dww)
        rms = ito_residual_rms(naive, batch)
        assert rms == pytest.approx(math.sqrt(0.5), abs=0.15)  # std of B_T - B_{T/2}


class TestBoundaryIdentity:
    def test_dy_vanishes_on_diagonal(self, rng):
        for _ in range(50):
            t, x = float(rng.uniform(0, 0.9)), float(rng.normal())
            e = heat_runmax_entry(1.0)
            h = 1e-5

            def v(y):
                st = FeatureState(e.feature_spec, t, np.array([[x]]), xmax=np.array([[y]]))
                return float(np.asarray(e.value(t, st))[0])

            dy = (-3 * v(x) + 4 * v(x + h) - v(x + 2 * h)) / (2 * h)
            assert abs(dy) <= 1e-8


class TestGeneratorAssumptions:
    @pytest.mark.parametrize("name", list(REG))
    def test_ellipticity_spot_checks(self, name, rng):
        g = REG[name].generator
        for _ in range(100):
            y, z = rng.normal(), rng.normal(size=1)
            g1 = rng.normal(size=(1, 1))
            g2 = g1 + abs(rng.normal())
            t = float(rng.uniform(0, 1))
            assert g(t, None, y, z, g2) >= g(t, None, y, z, g1) - 1e-12

    def test_classical_defect_zero_on_smooth(self, brownian_batch, rng):
        for name in ("HEAT-INTEGRAL", "QUADRATIC", "FROZEN", "HEAT-RUNMAX"):
            e = REG[name]
            for _ in range(10):
                t = float(rng.uniform(0, 0.9))
                assert classical_defect(e, t, brownian_batch.path(int(rng.integers(0, 8)))) <= 1e-9

    def test_maxdrift_residual_off_max(self):
        # hand check of the first-order equation on the smooth branch
        e = REG["MAXDRIFT"]
        g = TimeGrid.uniform(1.0, 8)
        vals = np.concatenate([np.linspace(0, 0.6, 5), np.linspace(0.45, 0.2, 4)])
        p = DiscretePath(g, vals)
        assert classical_defect(e, 0.8, p) <= 1e-12
