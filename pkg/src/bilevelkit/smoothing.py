"""Randomized smoothing of projections and Jacobian estimation.

The smoothed projection is the expectation of ``P(z + delta * u)``
over ``u`` uniform in the unit ball. It is differentiable even where
``P`` is not, stays within ``delta`` of ``P`` (nonexpansiveness), and
its Jacobian admits the classical two-point zeroth-order estimator:
directions on the unit sphere paired with central differences give an
unbiased estimate of the ball-smoothed Jacobian.

Sampling directions uniformly in the ball instead is available as an
option; it shrinks the estimate by roughly ``d/(d+2)`` (the second
moment of the ball), which is sometimes convenient but no longer
matches the smoothed Jacobian. Tests pin both behaviours.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .projections import ConstraintSet, _as_vector

_DIRECTION_DISTS = ("sphere", "ball")


@dataclasses.dataclass(frozen=True)
class SmoothingParams:
    """Knobs for the smoothed projection and its Jacobian estimator.

    ``n_directions=None`` means one direction per ambient dimension,
    which makes a single two-point estimate an unbiased Jacobian.
    """

    delta: float
    n_directions: int | None = None
    direction_dist: str = "sphere"

    def __post_init__(self):
        if not (self.delta > 0 and np.isfinite(self.delta)):
            raise ValueError("delta must be positive and finite")
        if self.n_directions is not None and self.n_directions < 1:
            raise ValueError("n_directions must be >= 1")
        if self.direction_dist not in _DIRECTION_DISTS:
            raise ValueError(f"direction_dist must be one of {_DIRECTION_DISTS}")

    def resolve_directions(self, dim: int) -> int:
        return dim if self.n_directions is None else int(self.n_directions)


def sample_unit_sphere(dim: int, rng: np.random.Generator, size: int | None = None):
    """Uniform samples on the unit sphere (normalized Gaussians)."""
    m = 1 if size is None else int(size)
    G = rng.standard_normal((m, dim))
    nrm = np.linalg.norm(G, axis=1, keepdims=True)
    nrm[nrm == 0.0] = 1.0
    U = G / nrm
    return U[0] if size is None else U


def sample_unit_ball(dim: int, rng: np.random.Generator, size: int | None = None):
    """Uniform samples from the closed unit ball.

    Gaussian direction scaled by U^(1/dim), so E||u||^2 = dim/(dim+2).
    """
    m = 1 if size is None else int(size)
    U = sample_unit_sphere(dim, rng, size=m)
    r = rng.uniform(size=(m, 1)) ** (1.0 / dim)
    U = U * r
    return U[0] if size is None else U


def _draw_directions(dim: int, m: int, dist: str, rng: np.random.Generator) -> np.ndarray:
    if dist == "sphere":
        return sample_unit_sphere(dim, rng, size=m)
    return sample_unit_ball(dim, rng, size=m)


def smoothed_projection(cset: ConstraintSet, z, params: SmoothingParams,
                        n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Monte Carlo estimate of the ball-smoothed projection at ``z``.

    Uses antithetic pairs +/-u, so ``n_samples`` is rounded up to an
    even number of projection evaluations. Wherever ``P`` is affine on
    the whole delta-ball (e.g. any interior point at distance > delta
    from the boundary) the pairing cancels the noise entirely.
    """
    z = _as_vector(z, cset.dim, "z")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    m = (int(n_samples) + 1) // 2
    U = sample_unit_ball(cset.dim, rng, size=m)
    pts = np.concatenate([z + params.delta * U, z - params.delta * U])
    return cset.project_rows(pts).mean(axis=0)


@dataclasses.dataclass(frozen=True)
class JacobianEstimate:
    """Factored two-point estimate ``H = sum_i diffs[i] directions[i]^T``.

    ``apply`` / ``apply_transpose`` are exact adjoints of each other
    and cost O(m * d) instead of materializing the d-by-d matrix.
    """

    directions: np.ndarray  # (m, d) rows u_i
    diffs: np.ndarray       # (m, d) rows (P(z + delta u_i) - P(z - delta u_i)) / (2 delta)

    def __post_init__(self):
        if self.directions.shape != self.diffs.shape or self.directions.ndim != 2:
            raise ValueError("directions and diffs must share shape (m, d)")

    @property
    def n_projection_calls(self) -> int:
        return 2 * self.directions.shape[0]

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.diffs.T @ (self.directions @ v)

    def apply_transpose(self, w: np.ndarray) -> np.ndarray:
        return self.directions.T @ (self.diffs @ w)

    def dense(self) -> np.ndarray:
        return self.diffs.T @ self.directions


def estimate_jacobian(cset: ConstraintSet, z, params: SmoothingParams,
                      rng: np.random.Generator) -> JacobianEstimate:
    """One two-point estimate of the smoothed-projection Jacobian.

    The diffs carry a dim/m factor so that the sphere-direction
    estimate is unbiased for any direction count m, not just the
    default m = dim (where the factor is 1 and this is the plain sum
    of central differences times direction transposes).
    """
    z = _as_vector(z, cset.dim, "z")
    d = cset.dim
    m = params.resolve_directions(d)
    U = _draw_directions(d, m, params.direction_dist, rng)
    pts = np.concatenate([z + params.delta * U, z - params.delta * U])
    P = cset.project_rows(pts)
    D = (P[:m] - P[m:]) * (d / (2.0 * params.delta * m))
    return JacobianEstimate(directions=U, diffs=D)


def mc_mean_jacobian(cset: ConstraintSet, z, params: SmoothingParams,
                     n_samples: int, rng: np.random.Generator,
                     chunk: int = 4096) -> np.ndarray:
    """Dense average of ``n_samples`` independent Jacobian estimates.

    Test-and-oracle helper; the solver never materializes this matrix.
    Chunked accumulation keeps memory bounded; with sphere directions
    the RNG stream consumed is identical for any chunk size, so results
    differ across chunk sizes only by summation rounding.
    """
    z = _as_vector(z, cset.dim, "z")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    d = cset.dim
    m = params.resolve_directions(d)
    total = np.zeros((d, d))
    done = 0
    while done < n_samples:
        b = min(int(chunk), n_samples - done)
        U = _draw_directions(d, b * m, params.direction_dist, rng)
        pts = np.concatenate([z + params.delta * U, z - params.delta * U])
        P = cset.project_rows(pts)
        D = (P[: b * m] - P[b * m:]) * (d / (2.0 * params.delta * m))
        total += D.T @ U
        done += b
    return total / n_samples


def fd_smoothed_jacobian(cset: ConstraintSet, z, delta: float, h: float,
                         n_samples: int, seed: int = 0) -> np.ndarray:
    """Column-wise central differences of the smoothed projection.

    Common random numbers (a fresh generator with the same ``seed``
    per evaluation) make the columns exact wherever the projection is
    affine across the probed neighbourhood, so this serves as the
    reference Jacobian in tests and exact-gradient oracles.
    """
    z = _as_vector(z, cset.dim, "z")
    params = SmoothingParams(delta=delta)
    d = cset.dim
    J = np.empty((d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        pp = smoothed_projection(cset, z + e, params, n_samples, np.random.default_rng(seed))
        pm = smoothed_projection(cset, z - e, params, n_samples, np.random.default_rng(seed))
        J[:, j] = (pp - pm) / (2.0 * h)
    return J
