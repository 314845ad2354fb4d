from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import bilevelkit as bk

from conftest import all_sets


# --- frozen hand values ----------------------------------------------------

def test_box_clips_componentwise():
    box = bk.Box(np.array([-1.0, 0.0]), np.array([1.0, 2.0]))
    np.testing.assert_array_equal(bk.project(box, np.array([3.0, -0.5])),
                                  np.array([1.0, 0.0]))


def test_l1ball_symmetric_corner():
    ball = bk.L1Ball(2, 1.0)
    np.testing.assert_allclose(bk.project(ball, np.array([1.0, 1.0])),
                               np.array([0.5, 0.5]), atol=1e-15)


def test_l1ball_interior_identity():
    ball = bk.L1Ball(3, 1.0)
    z = np.array([0.2, -0.3, 0.1])
    np.testing.assert_array_equal(bk.project(ball, z), z)


def test_simplex_uniform_from_origin():
    np.testing.assert_allclose(bk.project(bk.Simplex(4, 1.0), np.zeros(4)),
                               np.full(4, 0.25), atol=1e-15)


def test_l2ball_radial_shrink():
    ball = bk.L2Ball(np.zeros(2), 1.0)
    np.testing.assert_allclose(bk.project(ball, np.array([3.0, 4.0])),
                               np.array([0.6, 0.8]), atol=1e-15)


def test_halfspace_closed_form():
    hs = bk.HalfSpace(np.array([1.0, 0.0]), 0.0)
    np.testing.assert_allclose(bk.project(hs, np.array([2.0, 5.0])),
                               np.array([0.0, 5.0]), atol=1e-15)
    z = np.array([-1.0, 2.0])  # already feasible
    np.testing.assert_array_equal(bk.project(hs, z), z)


# --- properties against the brute-force oracle ------------------------------

@pytest.mark.parametrize("dim", [2, 3, 5])
def test_matches_brute_force(dim, rng):
    for cset in all_sets(dim, rng):
        for _ in range(100):
            z = rng.standard_normal(dim) * rng.choice([0.1, 1.0, 10.0])
            p = bk.project(cset, z)
            q = bk.brute_force_projection(cset, z)
            assert np.linalg.norm(p - q) < 1e-8, type(cset).__name__


@pytest.mark.parametrize("dim", [2, 4])
def test_idempotent(dim, rng):
    for cset in all_sets(dim, rng):
        for _ in range(50):
            p = bk.project(cset, rng.standard_normal(dim) * 3.0)
            assert np.linalg.norm(bk.project(cset, p) - p) <= 1e-12


@pytest.mark.parametrize("dim", [2, 4])
def test_nonexpansive_exactly(dim, rng):
    for cset in all_sets(dim, rng):
        for _ in range(200):
            z = rng.standard_normal(dim) * 3.0
            w = rng.standard_normal(dim) * 3.0
            lhs = np.linalg.norm(bk.project(cset, z) - bk.project(cset, w))
            assert lhs <= np.linalg.norm(z - w)


def test_variational_certificate_accepts_true_projection(rng):
    for cset in all_sets(3, rng):
        z = rng.standard_normal(3) * 2.0
        worst = bk.check_variational_inequality(cset, z, bk.project(cset, z))
        assert worst <= 1e-10


def test_variational_certificate_rejects_wrong_point():
    # (1,0) is feasible for the unit l1 ball but is not the projection of (1,1)
    worst = bk.check_variational_inequality(
        bk.L1Ball(2, 1.0), np.array([1.0, 1.0]), np.array([1.0, 0.0]))
    assert worst > 0.1


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False),
                min_size=1, max_size=6),
       st.floats(min_value=0.1, max_value=10.0))
def test_l1ball_projection_properties(coords, radius):
    z = np.array(coords)
    ball = bk.L1Ball(len(coords), radius)
    p = bk.project(ball, z)
    assert np.abs(p).sum() <= radius + 1e-9
    # idempotence is limited by the ulp of the original input scale: the
    # soft threshold |z| - theta cancels catastrophically for huge z
    drift_cap = 1e-12 * max(1.0, float(np.abs(z).max()))
    assert np.linalg.norm(bk.project(ball, p) - p) <= drift_cap
    # projecting never moves a point past the original
    assert np.linalg.norm(p - z) <= np.linalg.norm(z) + radius


# --- construction and shape errors ------------------------------------------

def test_rejects_wrong_dimension():
    with pytest.raises(ValueError, match="length 3"):
        bk.project(bk.Box(-np.ones(3), np.ones(3)), np.zeros(4))


def test_rejects_inverted_box():
    with pytest.raises(ValueError, match="lo <= hi"):
        bk.Box(np.ones(2), -np.ones(2))


def test_rejects_bad_radius():
    with pytest.raises(ValueError, match="radius"):
        bk.L1Ball(3, -1.0)
    with pytest.raises(ValueError, match="radius"):
        bk.L2Ball(np.zeros(3), 0.0)


def test_rejects_nonfinite_input():
    with pytest.raises(ValueError):
        bk.project(bk.L1Ball(2, 1.0), np.array([np.nan, 0.0]))
