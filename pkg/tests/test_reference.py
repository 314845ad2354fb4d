from __future__ import annotations

import numpy as np
import pytest

import bilevelkit as bk


def test_inner_solve_matches_dense_solution(small_quad):
    quad = small_quad
    p = quad.problem
    for xv in ([0.2, -0.5, 0.1], [1.0, 0.0, -1.0]):
        x = np.array(xv)
        sol = bk.inner_solve(p, x, eta=0.5, tol=1e-12)
        assert sol.converged
        np.testing.assert_allclose(sol.y_star, np.linalg.solve(quad.A, quad.B @ x),
                                   atol=1e-8)


def test_inner_solve_residuals_decrease(small_quad):
    sol = bk.inner_solve(small_quad.problem, np.array([0.3, 0.3, -0.2]),
                         eta=0.5, tol=1e-10)
    r = np.array(sol.residuals)
    assert np.all(r[1:] <= r[:-1] * (1.0 + 1e-12))


def test_inner_solve_raises_when_budget_too_small(small_quad):
    with pytest.raises(bk.ConvergenceError, match="3 iterations") as exc:
        bk.inner_solve(small_quad.problem, np.ones(3), eta=0.5,
                       tol=1e-14, max_iter=3)
    assert exc.value.residual > 1e-14


def test_inner_solve_rejects_bad_eta(small_quad):
    with pytest.raises(ValueError, match="eta"):
        bk.inner_solve(small_quad.problem, np.zeros(3), eta=0.0)


def test_diagonal_instance_clips_componentwise():
    # separable KKT: with diagonal A the constrained optimum is the clip
    A = np.diag([1.0, 2.0, 4.0])
    B = np.array([[1.0], [2.0], [8.0]])
    quad = bk.QuadraticBilevel(A=A, B=B, y_target=np.zeros(3), rho=0.1,
                               box=bk.Box(-np.ones(3) * 0.5, np.ones(3) * 0.5))
    x = np.array([0.9])
    sol = bk.inner_solve(quad.problem, x, eta=0.25, tol=1e-12)
    unclipped = np.linalg.solve(A, B @ x)
    np.testing.assert_allclose(sol.y_star, np.clip(unclipped, -0.5, 0.5),
                               atol=1e-8)


def test_brute_force_projection_grid_value():
    # dim-2 box: brute force must land on the analytic clip
    box = bk.Box(np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
    z = np.array([1.7, -0.4])
    np.testing.assert_allclose(bk.brute_force_projection(box, z),
                               np.array([1.0, -0.4]), atol=1e-8)


def test_finite_diff_exact_on_quadratic_composite(small_quad):
    # with an interior, linear y*(x) the composite F is quadratic, so
    # central differences have zero truncation error; only the inner
    # solve tolerance is left
    quad = small_quad
    x = np.array([0.4, -0.1, 0.2])
    exact = bk.exact_hypergradient_interior(quad, x)
    cfg = bk.HypergradConfig()
    for h in (1e-2, 1e-3):
        fd = bk.finite_diff_hypergradient(quad.problem, x, cfg, h=h)
        assert np.linalg.norm(fd - exact) < 1e-7


def test_stationarity_small_at_optimum_large_away(small_quad):
    quad = small_quad
    p = quad.problem
    # unconstrained composite optimum: minimize f(x, y*(x)) in closed form
    # y*(x) = A^{-1} B x  =>  dF = rho x + (A^{-1}B)^T (y* - y_target)
    M = np.linalg.solve(quad.A, quad.B)
    x_hat = np.linalg.solve(quad.rho * np.eye(p.d1) + M.T @ M,
                            M.T @ quad.y_target)
    cfg = bk.HypergradConfig(delta=1e-5)
    at_opt = bk.stationarity_measure(p, x_hat, cfg, n_seeds=2, inner_tol=1e-10,
                                     n_samples=4000)
    away = bk.stationarity_measure(p, x_hat + 1.0, cfg, n_seeds=2,
                                   inner_tol=1e-10, n_samples=4000)
    assert at_opt < 0.05
    assert away > 10.0 * at_opt


def test_hypergrad_samples_are_reproducible(small_quad):
    p = small_quad.problem
    cfg = bk.HypergradConfig(delta=1e-5)
    a = bk.hypergrad_samples_at_solution(p, np.zeros(3), cfg, n_seeds=3,
                                         n_samples=500)
    b = bk.hypergrad_samples_at_solution(p, np.zeros(3), cfg, n_seeds=3,
                                         n_samples=500)
    assert len(a) == 3
    for sa, sb in zip(a, b):
        np.testing.assert_array_equal(sa, sb)


def test_mc_jacobian_seed_spread_tightens_like_clt(small_quad):
    # the fd jacobian is noiseless at interior points (antithetic pairs
    # cancel exactly), so probe the genuinely stochastic mc path: the
    # spread over seeds shrinks roughly as 1/sqrt(n_samples)
    p = small_quad.problem
    cfg = bk.HypergradConfig(delta=1e-5)
    x = np.array([0.5, 0.2, -0.3])

    def spread(n):
        vals = np.array([
            bk.exact_smoothed_hypergradient(p, x, cfg, jac_method="mc",
                                            n_samples=n, seed=s)
            for s in range(6)])
        return vals.std(axis=0, ddof=1).sum()

    # 16x more samples: expect ~4x tighter, allow generous slack
    assert spread(3200) < 0.5 * spread(200)
