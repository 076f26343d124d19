import numpy as np
import pytest

from ppdelab.measures import (ControlLattice, ControlProcess, DomainError,
                              build_lattice, first_order_lattice,
                              rademacher_enumeration, refine_lattice,
                              simulate_paths)
from ppdelab.pathspace import TimeGrid


class TestControlProcess:
    def test_bounds_enforced(self, grid16):
        with pytest.raises(DomainError):
            ControlProcess.constant(grid16, 1.5, 0.0, bound=1.0)
        with pytest.raises(DomainError):
            ControlProcess.constant(grid16, 0.0, 2.0, bound=1.0)  # tr(b^2)/2 = 2 > 1
        ControlProcess.constant(grid16, 1.0, np.sqrt(2.0), bound=1.0)

    def test_symmetry_required(self, grid16):
        bad = np.array([[0.0, 1.0], [0.0, 0.0]])
        with pytest.raises(DomainError):
            ControlProcess.constant(grid16, np.zeros(2), bad, bound=2.0)


class TestSimulation:
    def test_deterministic_drift(self):
        grid = TimeGrid.uniform(1.0, 4)
        c = ControlProcess.constant(grid, 0.5, 0.0, bound=1.0)
        b = simulate_paths(c, 1, seed=0)
        np.testing.assert_allclose(b.values.ravel(), [0, 0.125, 0.25, 0.375, 0.5])

    def test_zero_control(self, grid16):
        c = ControlProcess.constant(grid16, 0.0, 0.0, bound=1.0)
        b = simulate_paths(c, 3, seed=1)
        assert np.all(b.values == 0.0)

    def test_martingale_mean(self):
        grid = TimeGrid.uniform(1.0, 16)
        c = ControlProcess.constant(grid, 0.0, 1.0, bound=1.0)
        b = simulate_paths(c, 100_000, seed=5)
        terminal = b.values[:, -1, 0]
        assert abs(terminal.mean()) <= 3.0 * terminal.std(ddof=1) / np.sqrt(b.n)

    def test_increment_moments_match_control(self):
        grid = TimeGrid.uniform(1.0, 8)
        alpha, beta = 0.4, 0.9
        c = ControlProcess.constant(grid, alpha, beta, bound=1.0)
        b = simulate_paths(c, 10_000, seed=6)
        dt = 1.0 / 8
        inc = np.diff(b.values[:, :, 0], axis=1)
        drift_hat = inc.mean(axis=0) / dt
        se = inc.std(axis=0, ddof=1) / dt / np.sqrt(b.n)
        assert np.all(np.abs(drift_hat - alpha) <= 3 * se)
        var_hat = inc.var(axis=0, ddof=1)
        # chi-square spread of the sample variance, 3 sigma
        se_var = var_hat * np.sqrt(2.0 / (b.n - 1))
        assert np.all(np.abs(var_hat - beta ** 2 * dt) <= 3 * se_var)

    def test_bitwise_determinism(self, grid16):
        c = ControlProcess.constant(grid16, 0.2, 0.7, bound=1.0)
        a = simulate_paths(c, 64, seed=9)
        b = simulate_paths(c, 64, seed=9)
        np.testing.assert_array_equal(a.values, b.values)

    def test_rademacher_support(self, grid16):
        c = ControlProcess.constant(grid16, 0.0, 1.0, bound=1.0)
        b = simulate_paths(c, 32, seed=2, noise="rademacher")
        inc = np.diff(b.values[:, :, 0], axis=1) / np.sqrt(1.0 / 16)
        assert set(np.round(np.unique(inc), 9)) <= {-1.0, 1.0}


class TestLattice:
    def test_minimal_contains_extremes(self):
        lat = build_lattice(1.0, 1, n_magnitudes=2, n_scalings=2)
        drifts = {round(a[0], 9) for a in lat.alphas}
        betas = {round(b[0, 0], 9) for b in lat.betas}
        assert {-1.0, 0.0, 1.0} <= drifts
        assert {0.0, round(np.sqrt(2.0), 9)} <= betas

    def test_bound_positivity(self):
        with pytest.raises(DomainError):
            build_lattice(0.0, 1)

    def test_members_satisfy_invariants(self, grid16):
        lat = build_lattice(2.0, 2)
        assert lat.validate_members()
        for i in range(lat.size):
            lat.member(i, grid16)  # constructor re-validates

    def test_nesting_in_bound(self):
        lat = build_lattice(1.0, 1)
        assert lat.validate_members(bound=2.0)
        assert not build_lattice(2.0, 1).validate_members(bound=1.0)

    def test_refinement_is_superset(self):
        lat = build_lattice(1.0, 1, 3, 3)
        fine = refine_lattice(lat)
        coarse = {(round(a[0], 9), round(b[0, 0], 9)) for a, b in lat.members()}
        finer = {(round(a[0], 9), round(b[0, 0], 9)) for a, b in fine.members()}
        assert coarse <= finer


class TestFirstOrderLattice:
    def test_degenerate_diffusion(self):
        lat = first_order_lattice(1.0, 1, 3)
        np.testing.assert_allclose(sorted(a[0] for a in lat.alphas), [-1.0, 0.0, 1.0])
        assert np.all(lat.betas == 0.0)

    def test_refinement_grid(self):
        lat = first_order_lattice(1.0, 1, 5)
        np.testing.assert_allclose(sorted(a[0] for a in lat.alphas), [-1, -0.5, 0, 0.5, 1])

    def test_simulated_paths_lipschitz(self, grid16):
        lat = first_order_lattice(1.0, 1, 5)
        dt = grid16.step
        for i in range(lat.size):
            b = simulate_paths(lat.member(i, grid16), 4, seed=3)
            inc = np.abs(np.diff(b.values[:, :, 0], axis=1))
            assert np.all(inc <= 1.0 * dt + 1e-12)


def test_rademacher_enumeration_cap():
    combos = rademacher_enumeration(3, 1)
    assert combos.shape == (8, 3, 1)
    with pytest.raises(DomainError):
        rademacher_enumeration(20, 1)


def test_batch_csv_has_path_id(grid16):
    c = ControlProcess.constant(grid16, 0.0, 1.0, bound=1.0)
    b = simulate_paths(c, 2, seed=4)
    lines = b.to_csv().splitlines()
    assert lines[0] == "path_id,t,x1"
    assert lines[1].startswith("0,")
