"""Reference oracles: slow, independent implementations for testing.

Everything here favours transparency over speed: the lower level is
solved by plain projected gradient iteration, projections are
recomputed by exhaustive active-set enumeration, and hypergradients
are cross-checked by central differences of the solved upper
objective.
"""

from __future__ import annotations

import dataclasses
import itertools
from functools import lru_cache

import numpy as np

from .hypergradient import HypergradConfig, exact_smoothed_hypergradient
from .problem import BilevelProblem
from .projections import (Box, ConstraintSet, HalfSpace, L1Ball, L2Ball,
                          Simplex, Unconstrained, _as_vector)
from .rngs import substream

_ENUM_DIM_LIMIT = 6


class ConvergenceError(RuntimeError):
    """Inner solve ran out of iterations; carries the last residual."""

    def __init__(self, residual: float, max_iter: int):
        self.residual = residual
        super().__init__(
            f"no fixed point within {max_iter} iterations (residual {residual:.3e})")


@dataclasses.dataclass(frozen=True)
class InnerSolveReport:
    y_star: np.ndarray
    residuals: tuple[float, ...]
    converged: bool

    @property
    def n_iter(self) -> int:
        return len(self.residuals)

    @property
    def residual(self) -> float:
        return self.residuals[-1] if self.residuals else float("inf")


def inner_solve(p: BilevelProblem, x, eta: float, tol: float = 1e-10,
                max_iter: int = 200_000) -> InnerSolveReport:
    """Projected gradient iteration y <- P(y - eta * grad_y g(x, y)).

    Converges linearly for eta < 2/L_g; the residual is the step norm,
    which bounds the distance to the fixed point up to the contraction
    factor. Starts from the projection of the origin.
    """
    if not (eta > 0 and np.isfinite(eta)):
        raise ValueError("eta must be positive and finite")
    x = np.asarray(x, dtype=np.float64)
    y = p.constraint.project(np.zeros(p.d2))
    residuals = []
    for _ in range(max_iter):
        y_next = p.constraint.project(y - eta * np.asarray(p.grad_y_g(x, y)))
        res = float(np.linalg.norm(y_next - y))
        residuals.append(res)
        y = y_next
        if res <= tol:
            return InnerSolveReport(y_star=y, residuals=tuple(residuals), converged=True)
    raise ConvergenceError(residuals[-1], max_iter)


@lru_cache(maxsize=None)
def _sign_patterns(d: int) -> tuple[np.ndarray, np.ndarray]:
    pats = np.array([s for s in itertools.product((-1.0, 0.0, 1.0), repeat=d)
                     if any(v != 0.0 for v in s)])
    return pats, np.count_nonzero(pats, axis=1).astype(np.float64)


@lru_cache(maxsize=None)
def _support_masks(d: int) -> tuple[np.ndarray, np.ndarray]:
    masks = np.array([[(m >> j) & 1 for j in range(d)]
                      for m in range(1, 2 ** d)], dtype=bool)
    return masks, masks.sum(axis=1).astype(np.float64)


def _brute_l1(z: np.ndarray, radius: float) -> np.ndarray:
    if np.abs(z).sum() <= radius:
        return z.copy()
    S, sizes = _sign_patterns(z.shape[0])
    # on each sign pattern the boundary optimum is an equality-constrained
    # least squares problem with multiplier nu
    sz = S * z
    nu = (sz.sum(axis=1) - radius) / sizes
    T = sz - nu[:, None]
    feasible = np.all((T >= -1e-12) | (S == 0.0), axis=1)
    Y = np.where(S != 0.0, S * T, 0.0)
    obj = ((Y - z) ** 2).sum(axis=1)
    obj[~feasible] = np.inf
    return Y[int(np.argmin(obj))]


def _brute_simplex(z: np.ndarray, total: float) -> np.ndarray:
    M, sizes = _support_masks(z.shape[0])
    lam = (np.where(M, z, 0.0).sum(axis=1) - total) / sizes
    Y = np.where(M, z - lam[:, None], 0.0)
    feasible = np.all(Y >= -1e-12, axis=1)
    obj = ((Y - z) ** 2).sum(axis=1)
    obj[~feasible] = np.inf
    return Y[int(np.argmin(obj))]


def brute_force_projection(cset: ConstraintSet, z) -> np.ndarray:
    """Projection recomputed without the production kernels.

    Box/half-space/l2-ball come from their KKT conditions directly;
    l1-ball and simplex enumerate every sign/support pattern (hence
    the dim <= 6 limit for those kinds).
    """
    z = _as_vector(z, cset.dim, "z")
    if isinstance(cset, Unconstrained):
        return z.copy()
    if isinstance(cset, Box):
        return np.minimum(np.maximum(z, cset.lo), cset.hi)
    if isinstance(cset, HalfSpace):
        slack = float(cset.a @ z - cset.b)
        if slack <= 0.0:
            return z.copy()
        return z - (slack / float(cset.a @ cset.a)) * cset.a
    if isinstance(cset, L2Ball):
        # KKT: y = center + (z - center)/(1 + lam), lam >= 0 active on the shell
        lam = max(0.0, float(np.linalg.norm(z - cset.center)) / cset.radius - 1.0)
        return cset.center + (z - cset.center) / (1.0 + lam)
    if cset.dim > _ENUM_DIM_LIMIT:
        raise ValueError(f"enumeration supports dim <= {_ENUM_DIM_LIMIT}")
    if isinstance(cset, L1Ball):
        return _brute_l1(z, cset.radius)
    if isinstance(cset, Simplex):
        return _brute_simplex(z, cset.total)
    raise TypeError(f"unsupported constraint kind {type(cset).__name__}")


def finite_diff_hypergradient(p: BilevelProblem, x, cfg: HypergradConfig,
                              h: float = 1e-5, inner_tol: float = 1e-10, *,
                              inner_eta: float | None = None,
                              max_inner_iter: int = 200_000) -> np.ndarray:
    """Central differences of F(x) = f(x, y*(x)) solved per evaluation.

    The inner solves are deterministic, so the +/- evaluations share
    everything but the probed coordinate. Limited to d1 <= 8 because
    cost scales with 2 * d1 inner solves.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] > 8:
        raise ValueError("finite differences limited to d1 <= 8")
    eta = cfg.eta if inner_eta is None else inner_eta

    def upper_at(xp: np.ndarray) -> float:
        rep = inner_solve(p, xp, eta, tol=inner_tol, max_iter=max_inner_iter)
        return float(p.upper_value(xp, rep.y_star))

    grad = np.empty_like(x)
    for j in range(x.shape[0]):
        e = np.zeros_like(x)
        e[j] = h
        grad[j] = (upper_at(x + e) - upper_at(x - e)) / (2.0 * h)
    return grad


def hypergrad_samples_at_solution(p: BilevelProblem, x, cfg: HypergradConfig,
                                  n_seeds: int = 4, inner_tol: float = 1e-10, *,
                                  inner_eta: float | None = None,
                                  n_samples: int = 20_000) -> list[np.ndarray]:
    """Independent exact-oracle hypergradients at (x, y*(x))."""
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    rep = inner_solve(p, x, cfg.eta if inner_eta is None else inner_eta,
                      tol=inner_tol)
    return [
        exact_smoothed_hypergradient(
            p, x, cfg, inner_tol, inner_eta=inner_eta, n_samples=n_samples,
            seed=int(substream(s, "stationarity").integers(2 ** 31)),
            y_star=rep.y_star)
        for s in range(n_seeds)
    ]


def stationarity_measure(p: BilevelProblem, x, cfg: HypergradConfig,
                         n_seeds: int = 4, inner_tol: float = 1e-10, *,
                         inner_eta: float | None = None,
                         n_samples: int = 20_000) -> float:
    """Norm of the seed-averaged exact-oracle hypergradient at (x, y*)."""
    samples = hypergrad_samples_at_solution(
        p, x, cfg, n_seeds, inner_tol, inner_eta=inner_eta, n_samples=n_samples)
    return float(np.linalg.norm(np.mean(samples, axis=0)))
