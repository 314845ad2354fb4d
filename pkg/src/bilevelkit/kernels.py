"""Backend selection for the projection kernels.

The compiled Cython backend is used when the extension imported
cleanly; setting ``BILEVELKIT_PURE_PYTHON=1`` (or any value other than
``0``/empty) forces the NumPy fallback. Both backends implement
identical row-wise contracts, see :mod:`bilevelkit._kernels_py`.
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("BILEVELKIT_PURE_PYTHON", "").strip() not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels_cy as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

box_project = _impl.box_project
halfspace_project = _impl.halfspace_project
l2ball_project = _impl.l2ball_project
simplex_project = _impl.simplex_project
l1ball_project = _impl.l1ball_project

SNAP_TOL = _kernels_py.SNAP_TOL
