"""Compiled kernels must agree with the numpy reference exactly."""

import numpy as np
import pytest

from ppdelab._kernels import BACKEND, reference
from ppdelab import _kernels


def _random_batch(rng, n=32, m=40, d=2):
    inc = rng.normal(scale=0.3, size=(n, m - 1, d))
    vals = np.concatenate([np.zeros((n, 1, d)), np.cumsum(inc, axis=1)], axis=1)
    return np.ascontiguousarray(vals)


@pytest.fixture()
def batch(rng):
    return _random_batch(rng)


def test_backend_is_compiled_by_default():
    # the build ships the extension; the pure path stays available via env
    assert BACKEND in ("fastpath", "reference")


def test_first_exit_radius_matches(batch):
    for eps in (0.2, 0.5, 1.0, 3.0):
        a = _kernels.first_exit_radius(batch, eps)
        b = reference.first_exit_radius(batch, eps)
        np.testing.assert_array_equal(a, b)


def test_first_exit_radius_start_offset(batch):
    a = _kernels.first_exit_radius(batch, 0.4, 5)
    b = reference.first_exit_radius(batch, 0.4, 5)
    np.testing.assert_array_equal(a, b)
    assert np.all(a >= 5)


def test_first_exit_halfspaces_matches(batch, rng):
    normals = rng.normal(size=(3, batch.shape[2]))
    offsets = np.abs(rng.normal(size=3)) + 0.2
    a = _kernels.first_exit_halfspaces(batch, np.ascontiguousarray(normals), offsets)
    b = reference.first_exit_halfspaces(batch, normals, offsets)
    np.testing.assert_array_equal(a, b)


def test_exact_boundary_counts_as_exit():
    vals = np.zeros((1, 3, 1))
    vals[0, 1, 0] = 0.5
    vals[0, 2, 0] = 1.0
    idx = _kernels.first_exit_radius(np.ascontiguousarray(vals), 0.5)
    assert idx[0] == 1  # >= fires on the barrier


def test_skeleton_scan_matches(batch):
    times = np.linspace(0.0, 1.0, batch.shape[1])
    for eps in (0.3, 0.7):
        a = _kernels.skeleton_scan(batch, times, eps)
        b = reference.skeleton_scan(batch, times, eps)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)


def test_euler_paths_matches(rng):
    inc = np.ascontiguousarray(rng.normal(size=(8, 12, 3)))
    np.testing.assert_array_equal(_kernels.euler_paths(inc), reference.euler_paths(inc))


def test_skeleton_anchor_semantics():
    # successive exits at |x - anchor| >= eps
    vals = np.array([[0.0, 0.3, 0.55, 0.6, 0.0, -0.1]]).reshape(1, 6, 1)
    times = np.linspace(0, 1, 6)
    anchor, integral, high, low = _kernels.skeleton_scan(np.ascontiguousarray(vals), times, 0.5)
    # first exit at index 2 (0.55 >= 0.5), next anchor move at index 4 (|0 - 0.55| >= 0.5)
    np.testing.assert_array_equal(anchor[0], [0, 0, 2, 2, 4, 4])
    assert high[0, -1, 0] == pytest.approx(0.55)
    assert low[0, -1, 0] == pytest.approx(0.0)
