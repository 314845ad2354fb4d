"""Euclidean projections onto the supported constraint sets.

Every set is closed and convex, so the projection is single-valued and
nonexpansive (Lipschitz constant 1, exposed as
``projection_lipschitz``). Batched projections route through the
selected kernel backend, see :mod:`bilevelkit.kernels`.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from . import kernels


def _as_vector(v, dim: int, name: str) -> np.ndarray:
    arr = np.ascontiguousarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] != dim:
        raise ValueError(f"{name} must be a vector of length {dim}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


class ConstraintSet:
    """Base class; concrete sets implement the batched projection."""

    dim: int
    projection_lipschitz: float = 1.0

    def project(self, z) -> np.ndarray:
        z = _as_vector(z, self.dim, "z")
        return self.project_rows(z[None, :])[0]

    def project_rows(self, Z) -> np.ndarray:
        Z = np.ascontiguousarray(Z, dtype=np.float64)
        if Z.ndim != 2 or Z.shape[1] != self.dim:
            raise ValueError(f"Z must have shape (n, {self.dim}), got {Z.shape}")
        return self._project_rows(Z)

    def _project_rows(self, Z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def contains(self, y, tol: float = 1e-10) -> bool:
        raise NotImplementedError


@dataclasses.dataclass(frozen=True, eq=False)
class Box(ConstraintSet):
    """Axis-aligned box [lo, hi]; infinite bounds are allowed."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.ascontiguousarray(self.lo, dtype=np.float64)
        hi = np.ascontiguousarray(self.hi, dtype=np.float64)
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise ValueError("lo and hi must be vectors of equal length")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)) or np.any(lo > hi):
            raise ValueError("box requires lo <= hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    def _project_rows(self, Z):
        return kernels.box_project(Z, self.lo, self.hi)

    def contains(self, y, tol=1e-10) -> bool:
        y = _as_vector(y, self.dim, "y")
        return bool(np.all(y >= self.lo - tol) and np.all(y <= self.hi + tol))


@dataclasses.dataclass(frozen=True, eq=False)
class L2Ball(ConstraintSet):
    center: np.ndarray
    radius: float

    def __post_init__(self):
        center = np.ascontiguousarray(self.center, dtype=np.float64)
        if center.ndim != 1:
            raise ValueError("center must be a vector")
        if not np.all(np.isfinite(center)):
            raise ValueError("center must be finite")
        if not (self.radius > 0 and np.isfinite(self.radius)):
            raise ValueError("radius must be positive and finite")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def _project_rows(self, Z):
        return kernels.l2ball_project(Z, self.center, self.radius)

    def contains(self, y, tol=1e-10) -> bool:
        y = _as_vector(y, self.dim, "y")
        return bool(np.linalg.norm(y - self.center) <= self.radius + tol)


@dataclasses.dataclass(frozen=True, eq=False)
class L1Ball(ConstraintSet):
    """Origin-centered l1 ball { y : sum_i |y_i| <= radius }."""

    dim: int
    radius: float

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ValueError("dim must be >= 1")
        if not (self.radius > 0 and np.isfinite(self.radius)):
            raise ValueError("radius must be positive and finite")
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "radius", float(self.radius))

    def _project_rows(self, Z):
        return kernels.l1ball_project(Z, self.radius)

    def contains(self, y, tol=1e-10) -> bool:
        y = _as_vector(y, self.dim, "y")
        return bool(np.abs(y).sum() <= self.radius + tol)


@dataclasses.dataclass(frozen=True, eq=False)
class Simplex(ConstraintSet):
    """Scaled probability simplex { y : y >= 0, sum_i y_i = total }."""

    dim: int
    total: float = 1.0

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ValueError("dim must be >= 1")
        if not (self.total > 0 and np.isfinite(self.total)):
            raise ValueError("total must be positive and finite")
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "total", float(self.total))

    def _project_rows(self, Z):
        return kernels.simplex_project(Z, self.total)

    def contains(self, y, tol=1e-10) -> bool:
        y = _as_vector(y, self.dim, "y")
        return bool(np.all(y >= -tol) and abs(y.sum() - self.total) <= tol)


@dataclasses.dataclass(frozen=True, eq=False)
class HalfSpace(ConstraintSet):
    """Half space { y : <a, y> <= b }."""

    a: np.ndarray
    b: float

    def __post_init__(self):
        a = np.ascontiguousarray(self.a, dtype=np.float64)
        if a.ndim != 1:
            raise ValueError("a must be a vector")
        if not np.all(np.isfinite(a)) or np.linalg.norm(a) == 0.0:
            raise ValueError("a must be finite and nonzero")
        if not np.isfinite(self.b):
            raise ValueError("b must be finite")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", float(self.b))

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    def _project_rows(self, Z):
        return kernels.halfspace_project(Z, self.a, self.b)

    def contains(self, y, tol=1e-10) -> bool:
        y = _as_vector(y, self.dim, "y")
        # margin normalized by ||a|| so tol means a distance
        return bool((self.a @ y - self.b) / np.linalg.norm(self.a) <= tol)


@dataclasses.dataclass(frozen=True, eq=False)
class Unconstrained(ConstraintSet):
    dim: int

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ValueError("dim must be >= 1")
        object.__setattr__(self, "dim", int(self.dim))

    def _project_rows(self, Z):
        return Z.copy()

    def contains(self, y, tol=1e-10) -> bool:
        y = _as_vector(y, self.dim, "y")
        return bool(np.all(np.isfinite(y)))


def project(cset: ConstraintSet, z) -> np.ndarray:
    """Exact Euclidean projection of ``z`` onto ``cset``."""
    return cset.project(z)


def check_variational_inequality(cset: ConstraintSet, z, p, probes: int = 64,
                                 seed: int = 0) -> float:
    """Worst sampled violation of the projection optimality condition.

    For the true projection ``p = P(z)`` every feasible ``w`` satisfies
    ``<z - p, w - p> <= 0``; the maximum of that inner product over
    sampled feasible points is therefore a certificate: a clearly
    positive value proves ``p`` is not the projection of ``z``.

    Sampled points are projections of Gaussian perturbations of ``p``
    at several scales, plus ``P(z)`` itself.
    """
    z = _as_vector(z, cset.dim, "z")
    p = _as_vector(p, cset.dim, "p")
    if probes < 1:
        raise ValueError("probes must be >= 1")
    rng = np.random.default_rng(seed)
    scale0 = 1.0 + np.linalg.norm(z - p)
    scales = np.array([0.1, 1.0, 10.0]) * scale0
    G = rng.standard_normal((probes, cset.dim))
    pts = p[None, :] + G * scales[rng.integers(len(scales), size=probes)][:, None]
    W = cset.project_rows(pts)
    W = np.concatenate([W, cset.project_rows(z[None, :])])
    return float(((W - p) @ (z - p)).max())
