"""Bilevel problem container and oracle validation.

A problem is a bundle of analytic first/second-order oracles for

    min_x f(x, y*(x))   s.t.   y*(x) = argmin_{y in Y} g(x, y)

with Y a closed convex set and g strongly convex in y. No autodiff:
callers supply closures, and :func:`validate_problem` cross-checks
them against finite differences before any optimization is trusted.
"""

from __future__ import annotations

import dataclasses
from typing import Callable

import numpy as np

from .projections import ConstraintSet

Array = np.ndarray


class OracleShapeError(ValueError):
    """An oracle returned the wrong shape; carries the oracle name."""

    def __init__(self, oracle: str, expected, got):
        self.oracle = oracle
        super().__init__(f"oracle {oracle!r}: expected shape {expected}, got {got}")


@dataclasses.dataclass(frozen=True)
class ProblemConstants:
    """Declared regularity bounds.

    Defaults are deliberately loose placeholders; they feed
    configuration advisories only, never the math.
    """

    mu_g: float = 1e-3
    L_g: float = 1e3
    C_gxy: float | None = None
    C_fy: float | None = None
    L_f: float | None = None

    def __post_init__(self):
        if not (0 < self.mu_g <= self.L_g):
            raise ValueError("constants require 0 < mu_g <= L_g")


@dataclasses.dataclass
class BilevelProblem:
    """Oracle bundle. All oracles are pure functions of their inputs.

    Conventions: ``hvp_yy(x, y, v)`` is the lower-level Hessian in y
    applied to ``v``; ``cross_jvp(x, y, v)`` is the mixed second
    derivative of g (d/dx of <grad_y g, v>), a vector of length d1.
    """

    d1: int
    d2: int
    upper_value: Callable[[Array, Array], float]
    grad_x_f: Callable[[Array, Array], Array]
    grad_y_f: Callable[[Array, Array], Array]
    lower_value: Callable[[Array, Array], float]
    grad_y_g: Callable[[Array, Array], Array]
    hvp_yy: Callable[[Array, Array, Array], Array]
    cross_jvp: Callable[[Array, Array, Array], Array]
    constraint: ConstraintSet
    constants: ProblemConstants = dataclasses.field(default_factory=ProblemConstants)
    name: str = ""

    def __post_init__(self):
        if self.d1 < 1 or self.d2 < 1:
            raise ValueError("d1 and d2 must be >= 1")
        if self.constraint.dim != self.d2:
            raise ValueError(
                f"constraint dim {self.constraint.dim} != d2 {self.d2}")


@dataclasses.dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    worst: float
    detail: str = ""


@dataclasses.dataclass(frozen=True)
class ValidationReport:
    checks: tuple[CheckResult, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed_checks(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def summary(self) -> str:
        lines = []
        for c in self.checks:
            status = "ok  " if c.passed else "FAIL"
            lines.append(f"{status} {c.name}: worst={c.worst:.3e} {c.detail}".rstrip())
        return "\n".join(lines)


def _expect_vector(name: str, value, dim: int) -> Array:
    arr = np.asarray(value, dtype=np.float64)
    if arr.shape != (dim,):
        raise OracleShapeError(name, (dim,), arr.shape)
    return arr


def _expect_scalar(name: str, value) -> float:
    arr = np.asarray(value, dtype=np.float64)
    if arr.shape != ():
        raise OracleShapeError(name, (), arr.shape)
    return float(arr)


def _central_diff(fun, point: Array, h: float) -> Array:
    grad = np.empty_like(point)
    for i in range(point.shape[0]):
        e = np.zeros_like(point)
        e[i] = h
        grad[i] = (fun(point + e) - fun(point - e)) / (2.0 * h)
    return grad


def _rel_err(analytic: Array, reference: Array) -> float:
    err = float(np.linalg.norm(analytic - reference)
                / (1.0 + np.linalg.norm(reference)))
    # a NaN here would vanish inside max() accumulation; force a failure
    return err if np.isfinite(err) else np.inf


def validate_problem(p: BilevelProblem, probes: int = 8, seed: int = 0,
                     fd_tol: float = 1e-6, sym_tol: float = 1e-10) -> ValidationReport:
    """Cross-check the oracles at random probe points.

    Dimension mismatches raise :class:`OracleShapeError` immediately;
    numeric disagreements are collected into the report. Probe points
    are standard normal, so the checks sample generic (infeasible is
    fine) inputs where the oracles are defined.
    """
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((probes, p.d1))
    Ys = rng.standard_normal((probes, p.d2))
    V = rng.standard_normal((probes, p.d2))
    W = rng.standard_normal((probes, p.d2))

    # shape pass; raises on the first offending oracle
    x0, y0, v0 = X[0], Ys[0], V[0]
    _expect_scalar("upper_value", p.upper_value(x0, y0))
    _expect_scalar("lower_value", p.lower_value(x0, y0))
    _expect_vector("grad_x_f", p.grad_x_f(x0, y0), p.d1)
    _expect_vector("grad_y_f", p.grad_y_f(x0, y0), p.d2)
    _expect_vector("grad_y_g", p.grad_y_g(x0, y0), p.d2)
    _expect_vector("hvp_yy", p.hvp_yy(x0, y0, v0), p.d2)
    _expect_vector("cross_jvp", p.cross_jvp(x0, y0, v0), p.d1)

    checks: list[CheckResult] = []

    def record(name, worst, tol, detail=""):
        checks.append(CheckResult(name, bool(worst <= tol), float(worst), detail))

    # purity: identical inputs give bitwise identical outputs
    worst = 0.0
    for fn, args in ((p.grad_y_g, (x0, y0)), (p.grad_y_f, (x0, y0)),
                     (p.hvp_yy, (x0, y0, v0)), (p.cross_jvp, (x0, y0, v0))):
        a = np.asarray(fn(*args))
        b = np.asarray(fn(*args))
        if not np.array_equal(a, b):
            worst = max(worst, float(np.max(np.abs(a - b))))
    record("oracle purity", worst, 0.0, "(repeat calls bitwise equal)")

    h = 1e-6
    worst_gx = worst_gy = worst_gg = worst_cross = worst_hvp = 0.0
    worst_sym = 0.0
    worst_sc = 0.0
    for k in range(probes):
        x, y, v, w = X[k], Ys[k], V[k], W[k]
        worst_gx = max(worst_gx, _rel_err(
            p.grad_x_f(x, y), _central_diff(lambda t: p.upper_value(t, y), x, h)))
        worst_gy = max(worst_gy, _rel_err(
            p.grad_y_f(x, y), _central_diff(lambda t: p.upper_value(x, t), y, h)))
        worst_gg = max(worst_gg, _rel_err(
            p.grad_y_g(x, y), _central_diff(lambda t: p.lower_value(x, t), y, h)))

        # mixed second derivative against differences of grad_y_g in x
        fd_cross = np.empty(p.d1)
        for i in range(p.d1):
            e = np.zeros(p.d1)
            e[i] = h
            fd_cross[i] = (p.grad_y_g(x + e, y) - p.grad_y_g(x - e, y)) @ v / (2.0 * h)
        worst_cross = max(worst_cross, _rel_err(p.cross_jvp(x, y, v), fd_cross))

        vn = v / np.linalg.norm(v)
        fd_hvp = (p.grad_y_g(x, y + h * vn) - p.grad_y_g(x, y - h * vn)) / (2.0 * h)
        worst_hvp = max(worst_hvp, _rel_err(p.hvp_yy(x, y, vn), fd_hvp))

        hv, hw = p.hvp_yy(x, y, v), p.hvp_yy(x, y, w)
        scale = 1.0 + abs(float(hv @ w)) + abs(float(hw @ v))
        worst_sym = max(worst_sym, abs(float(hv @ w) - float(hw @ v)) / scale)

        quad = float(p.hvp_yy(x, y, vn) @ vn)
        worst_sc = max(worst_sc, p.constants.mu_g - quad)

    record("grad_x_f consistency", worst_gx, fd_tol)
    record("grad_y_f consistency", worst_gy, fd_tol)
    record("grad_y_g consistency", worst_gg, fd_tol)
    record("cross_jvp consistency", worst_cross, max(fd_tol, 1e-5))
    record("hvp_yy consistency", worst_hvp, max(fd_tol, 1e-5))
    record("hvp symmetry", worst_sym, sym_tol)
    record("strong convexity", max(worst_sc, 0.0), 1e-12,
           f"(against declared mu_g={p.constants.mu_g:g})")
    return ValidationReport(tuple(checks))
