from __future__ import annotations

import numpy as np
import pytest

import bilevelkit as bk
from bilevelkit.smoothing import sample_unit_ball, sample_unit_sphere


def test_ball_draws_stay_inside(rng):
    u = sample_unit_ball(3, rng, size=10_000)
    assert np.all(np.linalg.norm(u, axis=1) <= 1.0 + 1e-15)


def test_ball_moments(rng):
    # mean 0, per-coordinate variance 1/(dim+2)
    u = sample_unit_ball(3, rng, size=100_000)
    assert np.max(np.abs(u.mean(axis=0))) < 3e-2
    np.testing.assert_allclose(u.var(axis=0), 1.0 / 5.0, atol=5e-3)


def test_sphere_draws_have_unit_norm(rng):
    u = sample_unit_sphere(4, rng, size=1000)
    np.testing.assert_allclose(np.linalg.norm(u, axis=1), 1.0, atol=1e-12)


def test_smoothed_projection_unconstrained_is_exact(rng):
    # antithetic +/-u pairs cancel, so the average equals z with no MC error
    z = rng.standard_normal(4)
    out = bk.smoothed_projection(bk.Unconstrained(4), z,
                                 bk.SmoothingParams(1e-2), 501, rng)
    np.testing.assert_allclose(out, z, atol=1e-14)


def test_smoothed_projection_stays_within_delta(rng):
    delta = 1e-2
    for cset in (bk.L1Ball(3, 1.0), bk.Box(-np.ones(3) * 0.2, np.ones(3) * 0.2)):
        for _ in range(20):
            z = rng.standard_normal(3)
            p = bk.project(cset, z)
            s = bk.smoothed_projection(cset, z, bk.SmoothingParams(delta), 2000, rng)
            assert np.linalg.norm(s - p) <= delta + 1e-12


def test_estimate_is_deterministic_given_rng():
    cset = bk.L1Ball(3, 1.0)
    z = np.array([0.8, -0.6, 0.3])
    a = bk.estimate_jacobian(cset, z, bk.SmoothingParams(1e-3),
                             np.random.default_rng(42)).dense()
    b = bk.estimate_jacobian(cset, z, bk.SmoothingParams(1e-3),
                             np.random.default_rng(42)).dense()
    np.testing.assert_array_equal(a, b)


def test_apply_and_transpose_match_dense(rng):
    est = bk.estimate_jacobian(bk.Box(-np.ones(3), np.ones(3)) , np.zeros(3),
                               bk.SmoothingParams(1e-2), rng)
    J = est.dense()
    v = rng.standard_normal(3)
    np.testing.assert_allclose(est.apply(v), J @ v, atol=1e-14)
    np.testing.assert_allclose(est.apply_transpose(v), J.T @ v, atol=1e-14)
    assert est.n_projection_calls == 6


def test_ramp_sphere_samples_are_exactly_half(rng):
    # d=1 ramp: P(z)=max(z,0); at z=0 every antithetic sphere sample gives 1/2
    ramp = bk.Box(np.array([0.0]), np.array([np.inf]))
    params = bk.SmoothingParams(1e-4)
    for _ in range(50):
        est = bk.estimate_jacobian(ramp, np.zeros(1), params, rng)
        assert est.dense()[0, 0] == 0.5


def test_ramp_ball_mean_is_one_sixth(rng):
    # E[u^2]/2 = 1/6 for u ~ U[-1,1]
    ramp = bk.Box(np.array([0.0]), np.array([np.inf]))
    params = bk.SmoothingParams(1e-4, direction_dist="ball")
    mean = bk.mc_mean_jacobian(ramp, np.zeros(1), params, 200_000, rng)
    np.testing.assert_allclose(mean[0, 0], 1.0 / 6.0, atol=3e-3)


def test_mc_mean_unconstrained_sphere_is_identity(rng):
    mean = bk.mc_mean_jacobian(bk.Unconstrained(3), np.zeros(3),
                               bk.SmoothingParams(1e-2), 50_000, rng)
    np.testing.assert_allclose(mean, np.eye(3), atol=1.5e-2)


def test_mc_mean_unconstrained_ball_shrinks(rng):
    # ball second moment pulls the mean to (d/(d+2)) I = 0.5 I at d=2
    mean = bk.mc_mean_jacobian(bk.Unconstrained(2), np.zeros(2),
                               bk.SmoothingParams(1e-2, direction_dist="ball"),
                               100_000, rng)
    np.testing.assert_allclose(mean, 0.5 * np.eye(2), atol=1e-2)


def test_direction_count_rescale_keeps_mean(rng):
    # m=1 direction per estimate still averages to the identity
    params = bk.SmoothingParams(1e-2, n_directions=1)
    mean = bk.mc_mean_jacobian(bk.Unconstrained(4), np.zeros(4), params,
                               200_000, rng)
    np.testing.assert_allclose(mean, np.eye(4), atol=2.5e-2)


def test_mc_mean_sphere_chunk_invariant():
    # same direction stream for any chunking; only summation order differs
    r1, r2 = np.random.default_rng(7), np.random.default_rng(7)
    u_all = sample_unit_sphere(3, r1, size=12)
    u_split = np.vstack([sample_unit_sphere(3, r2, size=5),
                         sample_unit_sphere(3, r2, size=7)])
    np.testing.assert_array_equal(u_all, u_split)

    cset = bk.L1Ball(3, 1.0)
    z = np.array([0.9, 0.4, -0.2])
    params = bk.SmoothingParams(1e-2)
    a = bk.mc_mean_jacobian(cset, z, params, 10_000,
                            np.random.default_rng(7), chunk=4096)
    b = bk.mc_mean_jacobian(cset, z, params, 10_000,
                            np.random.default_rng(7), chunk=97)
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_mc_mean_matches_fd_jacobian(rng):
    cset = bk.Box(-np.ones(2) * 0.5, np.ones(2) * 0.5)
    z = np.array([0.45, -0.1])  # one coordinate near a face
    mc = bk.mc_mean_jacobian(cset, z, bk.SmoothingParams(1e-2), 200_000, rng)
    fd = bk.fd_smoothed_jacobian(cset, z, delta=1e-2, h=1e-3,
                                 n_samples=200_000, seed=1)
    np.testing.assert_allclose(mc, fd, atol=2e-2)


def test_params_validation():
    with pytest.raises(ValueError, match="delta"):
        bk.SmoothingParams(0.0)
    with pytest.raises(ValueError, match="direction_dist"):
        bk.SmoothingParams(1e-3, direction_dist="cube")
    with pytest.raises(ValueError, match="n_directions"):
        bk.SmoothingParams(1e-3, n_directions=0)
