"""Pure NumPy projection kernels (fallback backend).

Reference semantics for the compiled backend: every function maps a
batch ``Z`` of shape ``(n, d)`` row-wise onto the target set and
returns a new ``(n, d)`` float64 array. Inputs must be C-contiguous
float64; callers in :mod:`bilevelkit.projections` guarantee this.

The sort-and-threshold simplex / l1-ball routines follow the standard
O(d log d) algorithm of Duchi, Shalev-Shwartz, Singer and Chandra
(ICML 2008).
"""

from __future__ import annotations

import numpy as np

# Nonnegative entries below this are snapped to exactly zero by the
# simplex threshold step, so sparsity patterns are reproducible.
SNAP_TOL = 1e-14


def box_project(Z: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    return np.clip(Z, lo, hi)


def halfspace_project(Z: np.ndarray, a: np.ndarray, b: float) -> np.ndarray:
    viol = Z @ a - b
    out = Z.copy()
    mask = viol > 0.0
    if np.any(mask):
        out[mask] -= np.outer(viol[mask] / (a @ a), a)
    return out


def l2ball_project(Z: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    D = Z - center
    nrm = np.sqrt(np.einsum("ij,ij->i", D, D))
    mask = nrm > radius
    scale = np.ones_like(nrm)
    scale[mask] = radius / nrm[mask]
    return center + D * scale[:, None]


def simplex_project(Z: np.ndarray, total: float) -> np.ndarray:
    n, d = Z.shape
    U = np.sort(Z, axis=1)[:, ::-1]
    css = np.cumsum(U, axis=1)
    j = np.arange(1, d + 1, dtype=np.float64)
    thresh = (css - total) / j
    cond = U - thresh > 0.0
    # cond always holds at j=1 because total > 0; take the largest such j.
    rho = d - np.argmax(cond[:, ::-1], axis=1)
    theta = thresh[np.arange(n), rho - 1]
    W = Z - theta[:, None]
    W[W < SNAP_TOL] = 0.0
    return W


def l1ball_project(Z: np.ndarray, radius: float) -> np.ndarray:
    A = np.abs(Z)
    inside = A.sum(axis=1) <= radius
    W = simplex_project(A, radius)
    out = np.sign(Z) * W
    out[inside] = Z[inside]
    return out
