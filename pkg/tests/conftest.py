from __future__ import annotations

import numpy as np
import pytest

import bilevelkit as bk


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def small_quad():
    """d1=3, d2=4 quadratic with a loose box; closed forms stay exact."""
    return bk.make_quadratic(3, 4, mu_g=0.5, L_g=2.0, box_halfwidth=50.0,
                             seed=3, rho=0.1)


@pytest.fixture
def tight_quad():
    """d1=2, d2=3 with a box tight enough to clip some coordinates."""
    return bk.make_quadratic(2, 3, mu_g=0.5, L_g=1.5, box_halfwidth=0.3,
                             seed=5, rho=0.1)


def all_sets(dim: int, rng: np.random.Generator) -> list[bk.ConstraintSet]:
    lo = -np.abs(rng.standard_normal(dim)) - 0.1
    hi = np.abs(rng.standard_normal(dim)) + 0.1
    return [
        bk.Box(lo, hi),
        bk.L1Ball(dim, 1.0),
        bk.L1Ball(dim, 2.5),
        bk.L2Ball(rng.standard_normal(dim) * 0.2, 1.3),
        bk.Simplex(dim, 1.0),
        bk.HalfSpace(rng.standard_normal(dim), 0.4),
        bk.Unconstrained(dim),
    ]
