"""Hypergradients through the smoothed projected fixed point.

With z = y - eta * grad_y g(x, y), the smoothed implicit gradient is

    grad f_delta = grad_x f
        - eta * J_gxy @ Jp^T @ [I - (I - eta * H_g) Jp^T]^{-1} @ grad_y f

where Jp is the Jacobian of the smoothed projection at z and H_g the
lower-level Hessian in y. The inverse is approximated by a truncated
geometric series of length Q (bias decays like (1 - eta * mu_g)^Q),
and the stochastic single-sample estimator replaces each Jp factor by
an independent two-point estimate with a randomized truncation index,
keeping the estimate unbiased for the truncated series at O(Q d2)
projection cost.
"""

from __future__ import annotations

import dataclasses
import math
from typing import TYPE_CHECKING

import numpy as np

from .problem import BilevelProblem
from .smoothing import (JacobianEstimate, SmoothingParams, estimate_jacobian,
                        fd_smoothed_jacobian, mc_mean_jacobian)

if TYPE_CHECKING:  # pragma: no cover
    from .bench import QuadraticBilevel


class NonFiniteError(FloatingPointError):
    """A pipeline stage produced NaN/inf; carries the stage name."""

    def __init__(self, stage: str):
        self.stage = stage
        super().__init__(f"non-finite values at stage {stage!r}")


class InteriorityError(ValueError):
    """The unconstrained minimizer is not interior by the margin."""


def _checked(stage: str, arr: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(stage)
    return arr


@dataclasses.dataclass(frozen=True)
class HypergradConfig:
    eta: float = 0.5
    Q: int = 3
    delta: float = 1e-6
    n_directions: int | None = None
    direction_dist: str = "sphere"

    def __post_init__(self):
        if not (self.eta > 0 and np.isfinite(self.eta)):
            raise ValueError("eta must be positive and finite")
        if self.Q < 1:
            raise ValueError("Q must be >= 1")
        # delegate delta / direction validation
        self.smoothing_params()

    def smoothing_params(self) -> SmoothingParams:
        return SmoothingParams(delta=self.delta, n_directions=self.n_directions,
                               direction_dist=self.direction_dist)


@dataclasses.dataclass(frozen=True)
class HypergradSample:
    value: np.ndarray
    c_drawn: int
    n_projection_calls: int


def eta_window(mu_g: float, d2: int, lipschitz: float = 1.0) -> tuple[float, float]:
    """Step-size window (lo, hi) for geometric bias decay.

    Below ``hi = 1/mu_g`` the truncated-series bias contracts; the
    lower endpoint keeps the smoothed fixed-point map contractive
    despite estimator variance growing with sqrt(d2).
    """
    hi = 1.0 / mu_g
    lo = hi * (1.0 - 1.0 / (4.0 * (2.0 * math.pi) ** 0.25 * math.sqrt(d2) * lipschitz))
    return lo, hi


def bias_bound(mu_g: float, eta: float, Q: int, c_gxy: float, c_fy: float) -> float:
    """Worst-case truncation bias of the Q-term series."""
    return (c_gxy * c_fy / mu_g) * (1.0 - eta * mu_g) ** Q


def stochastic_hypergradient(p: BilevelProblem, x, y, cfg: HypergradConfig,
                             rng: np.random.Generator) -> HypergradSample:
    """Single-sample stochastic hypergradient at the current (x, y).

    Draws a truncation index c uniform on {0, ..., Q-1} and c+1
    independent Jacobian estimates; the product is applied matrix-free
    right-to-left. The factor Q compensates the randomized truncation,
    so the expectation equals the Q-term deterministic series at the
    exact smoothed Jacobian.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    eta, Q = cfg.eta, cfg.Q
    sparams = cfg.smoothing_params()

    gx = _checked("grad_x_f", np.asarray(p.grad_x_f(x, y), dtype=np.float64))
    gy = _checked("grad_y_f", np.asarray(p.grad_y_f(x, y), dtype=np.float64))
    z = _checked("pre-projection point z", y - eta * np.asarray(p.grad_y_g(x, y)))

    c = int(rng.integers(Q))
    estimates = [estimate_jacobian(p.constraint, z, sparams, rng) for _ in range(c + 1)]
    n_proj = sum(e.n_projection_calls for e in estimates)

    t = gy
    for i in range(c, 0, -1):
        t = estimates[i].apply_transpose(t)
        t = _checked(f"series factor {i}", t - eta * np.asarray(p.hvp_yy(x, y, t)))
    t = _checked("jacobian head", estimates[0].apply_transpose(t))
    value = _checked("result", gx - eta * Q * np.asarray(p.cross_jvp(x, y, t)))
    return HypergradSample(value=value, c_drawn=c, n_projection_calls=n_proj)


def _jac_transpose_apply(jac, w: np.ndarray) -> np.ndarray:
    if isinstance(jac, JacobianEstimate):
        return jac.apply_transpose(w)
    return np.asarray(jac).T @ w


def deterministic_hypergradient(p: BilevelProblem, x, y, cfg: HypergradConfig,
                                jac) -> np.ndarray:
    """Q-term series hypergradient with a fixed Jacobian ``jac``.

    ``jac`` may be a dense (d2, d2) array or a
    :class:`~bilevelkit.smoothing.JacobianEstimate`.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    eta = cfg.eta
    gx = np.asarray(p.grad_x_f(x, y), dtype=np.float64)
    gy = np.asarray(p.grad_y_f(x, y), dtype=np.float64)
    t = gy.copy()
    s = gy.copy()
    for _ in range(cfg.Q - 1):
        t = _jac_transpose_apply(jac, t)
        t = t - eta * np.asarray(p.hvp_yy(x, y, t))
        s += t
    head = _jac_transpose_apply(jac, s)
    return _checked("result", gx - eta * np.asarray(p.cross_jvp(x, y, head)))


def dense_hessian_yy(p: BilevelProblem, x, y) -> np.ndarray:
    """Materialize the lower-level Hessian via hvp on basis vectors."""
    A = np.empty((p.d2, p.d2))
    eye = np.eye(p.d2)
    for j in range(p.d2):
        A[:, j] = p.hvp_yy(x, y, eye[j])
    return A


def exact_smoothed_hypergradient(p: BilevelProblem, x, cfg: HypergradConfig,
                                 inner_tol: float = 1e-10, *,
                                 inner_eta: float | None = None,
                                 max_inner_iter: int = 200_000,
                                 jac_method: str = "fd",
                                 n_samples: int = 100_000,
                                 fd_step: float | None = None,
                                 seed: int = 0,
                                 y_star: np.ndarray | None = None,
                                 jac: np.ndarray | None = None) -> np.ndarray:
    """Dense-solve hypergradient at the lower-level solution (oracle).

    Solves the lower level to ``inner_tol``, estimates the smoothed
    Jacobian at z* (``jac_method='fd'``: common-random-number central
    differences of the smoothed projection, exact wherever the
    projection is locally affine; ``'mc'``: plain estimator average),
    and resolves the series limit by a dense linear solve. Intended as
    a test oracle for d2 <= 64. Pass ``y_star`` to reuse an already
    computed lower-level solution, and ``jac`` to supply the dense
    Jacobian directly (skips estimation; useful for comparing against
    a truncated series built from the same matrix).
    """
    if p.d2 > 64:
        raise ValueError("dense oracle limited to d2 <= 64")
    x = np.asarray(x, dtype=np.float64)
    eta = cfg.eta
    if y_star is None:
        from .reference import inner_solve  # local import to avoid a cycle

        report = inner_solve(p, x, eta if inner_eta is None else inner_eta,
                             tol=inner_tol, max_iter=max_inner_iter)
        y = report.y_star
    else:
        y = np.asarray(y_star, dtype=np.float64)
    z = y - eta * np.asarray(p.grad_y_g(x, y))

    if jac is not None:
        J = np.asarray(jac, dtype=np.float64)
        if J.shape != (p.d2, p.d2):
            raise ValueError(f"jac must have shape ({p.d2}, {p.d2})")
    elif jac_method == "fd":
        h = cfg.delta / 32.0 if fd_step is None else fd_step
        J = fd_smoothed_jacobian(p.constraint, z, cfg.delta, h, n_samples, seed=seed)
    elif jac_method == "mc":
        J = mc_mean_jacobian(p.constraint, z, cfg.smoothing_params(), n_samples,
                             np.random.default_rng(seed))
    else:
        raise ValueError("jac_method must be 'fd' or 'mc'")

    A = dense_hessian_yy(p, x, y)
    gy = np.asarray(p.grad_y_f(x, y), dtype=np.float64)
    gx = np.asarray(p.grad_x_f(x, y), dtype=np.float64)
    M = np.eye(p.d2) - (np.eye(p.d2) - eta * A) @ J.T
    try:
        t = np.linalg.solve(M, gy)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"series limit solve failed ({exc}); is eta inside (0, 1/mu_g)?") from exc
    return _checked("result", gx - eta * np.asarray(p.cross_jvp(x, y, J.T @ t)))


def exact_hypergradient_interior(quad: "QuadraticBilevel", x,
                                 min_margin: float = 0.0) -> np.ndarray:
    """Closed-form hypergradient when the lower solution is interior.

    Valid only when the unconstrained minimizer of the quadratic lower
    level lies strictly inside the box by more than ``min_margin``;
    then the constraint is locally inactive and the classical implicit
    formula grad_x f - J_gxy @ H_g^{-1} @ grad_y f applies.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.linalg.solve(quad.A, quad.B @ x)
    margin = float(min((y - quad.box.lo).min(), (quad.box.hi - y).min()))
    if not margin > min_margin:
        raise InteriorityError(
            f"unconstrained minimizer margin {margin:.3e} <= required {min_margin:.3e}")
    p = quad.problem
    t = np.linalg.solve(quad.A, np.asarray(p.grad_y_f(x, y), dtype=np.float64))
    gx = np.asarray(p.grad_x_f(x, y), dtype=np.float64)
    return gx - np.asarray(p.cross_jvp(x, y, t))
