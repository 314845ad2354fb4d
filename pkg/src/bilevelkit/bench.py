"""Benchmark problem families and dataset utilities.

Two families:

* a quadratic bilevel family with a box-constrained lower level, whose
  interior solutions have closed-form hypergradients (the main test
  vehicle), and
* data hyper-cleaning: per-training-sample weights sigma(x_i) are
  learned so that a logistic model fitted on the weighted (possibly
  label-corrupted) training set does well on a clean validation set.
"""

from __future__ import annotations

import dataclasses
from functools import cached_property

import numpy as np

from .problem import BilevelProblem, ProblemConstants
from .projections import Box, L1Ball


# ---------------------------------------------------------------------------
# quadratic family


@dataclasses.dataclass
class QuadraticBilevel:
    """g(x,y) = y'Ay/2 - (Bx)'y over a box;  f = ||y - y_target||^2/2 + rho ||x||^2/2.

    A is symmetric positive definite, B couples x into the lower
    level. With the box inactive, y*(x) = A^{-1} B x, which is what
    the closed-form oracles exploit.
    """

    A: np.ndarray
    B: np.ndarray
    y_target: np.ndarray
    rho: float
    box: Box

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=np.float64)
        self.B = np.asarray(self.B, dtype=np.float64)
        self.y_target = np.asarray(self.y_target, dtype=np.float64)
        d2, d1 = self.B.shape
        if self.A.shape != (d2, d2):
            raise ValueError("A must be (d2, d2) matching B's rows")
        if not np.allclose(self.A, self.A.T, atol=1e-12):
            raise ValueError("A must be symmetric")
        if self.y_target.shape != (d2,):
            raise ValueError("y_target must have length d2")
        if self.box.dim != d2:
            raise ValueError("box dim must equal d2")
        if not (self.rho >= 0 and np.isfinite(self.rho)):
            raise ValueError("rho must be nonnegative and finite")
        eigs = np.linalg.eigvalsh(self.A)
        if eigs[0] <= 0:
            raise ValueError("A must be positive definite")
        self._eigs = eigs

    @property
    def d1(self) -> int:
        return self.B.shape[1]

    @property
    def d2(self) -> int:
        return self.B.shape[0]

    @cached_property
    def problem(self) -> BilevelProblem:
        A, B, yt, rho = self.A, self.B, self.y_target, self.rho
        norm_b = float(np.linalg.norm(B, 2))
        constants = ProblemConstants(
            mu_g=float(self._eigs[0]),
            # covers both the y-Lipschitz constant of grad_y g and the
            # cross coupling ||B||, so the y*(x) Lipschitz bound L_g/mu_g holds
            L_g=float(max(self._eigs[-1], norm_b)),
            C_gxy=norm_b,
            L_f=float(max(1.0, rho)),
        )
        return BilevelProblem(
            d1=self.d1, d2=self.d2,
            upper_value=lambda x, y: 0.5 * float((y - yt) @ (y - yt))
            + 0.5 * rho * float(x @ x),
            grad_x_f=lambda x, y: rho * x,
            grad_y_f=lambda x, y: y - yt,
            lower_value=lambda x, y: 0.5 * float(y @ (A @ y)) - float((B @ x) @ y),
            grad_y_g=lambda x, y: A @ y - B @ x,
            hvp_yy=lambda x, y, v: A @ v,
            cross_jvp=lambda x, y, v: -(B.T @ v),
            constraint=self.box,
            constants=constants,
            name="quadratic",
        )


def make_quadratic(d1: int, d2: int, mu_g: float = 0.5, L_g: float = 2.0,
                   coupling_scale: float = 1.0, box_halfwidth: float = 1.0,
                   seed: int = 0, rho: float = 0.1,
                   target_scale: float = 1.0) -> QuadraticBilevel:
    """Random instance with exactly the requested lower-level spectrum.

    A gets eigenvalues linspace(mu_g, L_g) under a random orthogonal
    basis; B is scaled to spectral norm ``coupling_scale``. Use
    ``box_halfwidth=inf`` for an effectively unconstrained lower level.
    """
    if not (0 < mu_g <= L_g):
        raise ValueError("need 0 < mu_g <= L_g")
    if d1 < 1 or d2 < 1:
        raise ValueError("d1 and d2 must be >= 1")
    if not box_halfwidth > 0:
        raise ValueError("box_halfwidth must be positive")
    rng = np.random.default_rng(seed)
    Qmat, _ = np.linalg.qr(rng.standard_normal((d2, d2)))
    spectrum = np.linspace(mu_g, L_g, d2)
    A = (Qmat * spectrum) @ Qmat.T
    A = 0.5 * (A + A.T)
    B = rng.standard_normal((d2, d1))
    B *= coupling_scale / np.linalg.norm(B, 2)
    y_target = target_scale * rng.standard_normal(d2)
    hw = float(box_halfwidth)
    box = Box(lo=np.full(d2, -hw), hi=np.full(d2, hw))
    return QuadraticBilevel(A=A, B=B, y_target=y_target, rho=rho, box=box)


# ---------------------------------------------------------------------------
# datasets


@dataclasses.dataclass
class Dataset:
    """Dense features with +/-1 labels."""

    features: np.ndarray
    labels: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError("features must be 2-d")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("labels must align with feature rows")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features must be finite")
        if not np.all(np.isin(self.labels, (-1.0, 1.0))):
            raise ValueError("labels must be +/-1")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def make_synthetic_binary(n_train: int = 200, n_val: int = 200, dim: int = 20,
                          separation: float = 2.0, seed: int = 0,
                          feature_scale: float = 0.02,
                          signal_coords: int | None = 8) -> tuple[Dataset, Dataset]:
    """Two spherical Gaussians with means +/- separation/2 apart.

    ``signal_coords`` confines the class-mean difference to that many
    randomly chosen coordinates (unit norm overall); None spreads it
    over a dense random direction. A sparse mean keeps an l1-capped
    linear model from parking on vertices whose normal cone swallows
    the reweighting signal.

    ``feature_scale`` multiplies the finished features. Accuracy
    geometry is scale invariant, but the weighted logistic lower level
    has curvature ~ 0.25 * feature_scale**2 * n, so the default keeps a
    200 x 20 instance inside the contraction window of step sizes near
    0.5 even once the l2 weight is raised enough to hold the inner
    optimum off the l1 boundary.
    """
    rng = np.random.default_rng(seed)
    if signal_coords is None:
        direction = rng.standard_normal(dim)
        direction /= np.linalg.norm(direction)
    else:
        if not 1 <= signal_coords <= dim:
            raise ValueError("signal_coords must lie in [1, dim]")
        direction = np.zeros(dim)
        idx = rng.permutation(dim)[:signal_coords]
        direction[idx] = rng.choice([-1.0, 1.0], size=signal_coords)
        direction /= np.sqrt(signal_coords)
    mean = 0.5 * separation * direction
    total = n_train + n_val
    labels = np.where(rng.uniform(size=total) < 0.5, 1.0, -1.0)
    feats = feature_scale * (rng.standard_normal((total, dim))
                             + labels[:, None] * mean)
    train = Dataset(feats[:n_train], labels[:n_train], name="synthetic-train")
    val = Dataset(feats[n_train:], labels[n_train:], name="synthetic-val")
    return train, val


def flip_labels(ds: Dataset, fraction: float, rng) -> tuple[Dataset, np.ndarray]:
    """Flip exactly floor(fraction * n) labels; returns (copy, flip mask)."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    gen = np.random.default_rng(rng)
    k = int(np.floor(fraction * ds.n))
    idx = gen.permutation(ds.n)[:k]
    mask = np.zeros(ds.n, dtype=bool)
    mask[idx] = True
    labels = ds.labels.copy()
    labels[mask] *= -1.0
    name = f"{ds.name}+flipped" if ds.name else "flipped"
    return Dataset(ds.features.copy(), labels, name=name), mask


# ---------------------------------------------------------------------------
# LIBSVM-style text files


class LibsvmParseError(ValueError):
    def __init__(self, path, line_number: int, token: str, reason: str):
        self.line_number = line_number
        self.token = token
        super().__init__(f"{path}:{line_number}: bad token {token!r} ({reason})")


def load_libsvm(path) -> Dataset:
    """Read whitespace-separated ``label idx:val`` lines (1-based idx).

    Label mapping: raw values are floats; files with labels already in
    {-1, +1} load as-is, otherwise exactly two distinct raw values are
    required and the smaller maps to -1, the larger to +1 (this covers
    the common {0, 1} and {1, 2} encodings).
    """
    raw_labels: list[float] = []
    rows: list[dict[int, float]] = []
    max_idx = 0
    with open(path, "r", encoding="utf-8") as fh:
        for ln, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            toks = s.split()
            try:
                raw_labels.append(float(toks[0]))
            except ValueError:
                raise LibsvmParseError(path, ln, toks[0], "label is not a number") from None
            entries: dict[int, float] = {}
            for tok in toks[1:]:
                idx_s, sep, val_s = tok.partition(":")
                if not sep:
                    raise LibsvmParseError(path, ln, tok, "missing ':'")
                try:
                    idx = int(idx_s)
                    val = float(val_s)
                except ValueError:
                    raise LibsvmParseError(path, ln, tok, "index or value not numeric") from None
                if idx < 1:
                    raise LibsvmParseError(path, ln, tok, "feature indices are 1-based")
                entries[idx] = val
                max_idx = max(max_idx, idx)
            rows.append(entries)
    if not rows:
        raise ValueError(f"{path}: no data lines")

    features = np.zeros((len(rows), max_idx))
    for i, entries in enumerate(rows):
        for idx, val in entries.items():
            features[i, idx - 1] = val

    uniq = sorted(set(raw_labels))
    if set(uniq) <= {-1.0, 1.0}:
        labels = np.asarray(raw_labels)
    elif len(uniq) == 2:
        labels = np.where(np.asarray(raw_labels) == uniq[0], -1.0, 1.0)
    else:
        raise ValueError(
            f"{path}: need binary labels, got {len(uniq)} distinct values")
    return Dataset(features, labels, name=str(path))


def save_libsvm(ds: Dataset, path) -> None:
    """Write every feature explicitly so load(save(ds)) round-trips."""
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(ds.n):
            label = int(ds.labels[i])
            feats = " ".join(f"{j + 1}:{float(ds.features[i, j])!r}"
                             for j in range(ds.dim))
            fh.write(f"{label:+d} {feats}\n")


# ---------------------------------------------------------------------------
# data hyper-cleaning


def _sigmoid(t: np.ndarray) -> np.ndarray:
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _logistic_loss(margins: np.ndarray) -> np.ndarray:
    # log(1 + exp(-m)) evaluated stably
    return np.logaddexp(0.0, -margins)


@dataclasses.dataclass
class HypercleanProblem:
    """Weighted-logistic lower level, clean-validation upper level.

    Lower: g(x, y) = sum_i sigma(x_i) * loss(y' a_i, b_i) + c_reg ||y||^2
    over the l1 ball of the given radius; upper: unweighted validation
    loss. The lower level is 2*c_reg strongly convex regardless of the
    weights, since the weighted loss term stays convex.
    """

    train: Dataset
    val: Dataset
    c_reg: float = 1e-2
    radius: float = 1.0

    def __post_init__(self):
        if self.train.n == 0 or self.val.n == 0:
            raise ValueError("train and val sets must not be empty")
        if self.train.dim != self.val.dim:
            raise ValueError("train and val dimensions differ")
        if not (self.c_reg > 0 and np.isfinite(self.c_reg)):
            raise ValueError("c_reg must be positive")

    @property
    def d1(self) -> int:
        return self.train.n

    @property
    def d2(self) -> int:
        return self.train.dim

    def weights(self, x: np.ndarray) -> np.ndarray:
        """Per-sample training weights sigma(x_i)."""
        return _sigmoid(np.asarray(x, dtype=np.float64))

    def val_accuracy(self, y: np.ndarray) -> float:
        margins = self.val.features @ np.asarray(y, dtype=np.float64)
        pred = np.where(margins >= 0.0, 1.0, -1.0)
        return float(np.mean(pred == self.val.labels))

    @cached_property
    def problem(self) -> BilevelProblem:
        At, bt = self.train.features, self.train.labels
        Av, bv = self.val.features, self.val.labels
        c = self.c_reg

        def upper_value(x, y):
            return float(_logistic_loss(bv * (Av @ y)).sum())

        def grad_y_f(x, y):
            m = bv * (Av @ y)
            # d/dm log(1+e^{-m}) = -sigmoid(-m)
            return Av.T @ (-bv * _sigmoid(-m))

        def lower_value(x, y):
            return float(self.weights(x) @ _logistic_loss(bt * (At @ y))
                         + c * float(y @ y))

        def grad_y_g(x, y):
            m = bt * (At @ y)
            return At.T @ (self.weights(x) * (-bt) * _sigmoid(-m)) + 2.0 * c * y

        def hvp_yy(x, y, v):
            m = bt * (At @ y)
            s = _sigmoid(m)
            coef = self.weights(x) * s * (1.0 - s)  # loss curvature on the margin
            return At.T @ (coef * (At @ v)) + 2.0 * c * v

        def cross_jvp(x, y, v):
            m = bt * (At @ y)
            sx = self.weights(x)
            return (sx * (1.0 - sx)) * ((-bt) * _sigmoid(-m)) * (At @ v)

        # loss curvature <= 1/4 and weights <= 1 bound the Hessian;
        # the mixed block has rows sigma'(x_i) * loss'(m_i) * a_i
        L_g = 0.25 * float(np.linalg.norm(At, 2)) ** 2 + 2.0 * c
        cross_bound = 0.25 * float(np.linalg.norm(At))
        constants = ProblemConstants(mu_g=2.0 * c, L_g=max(L_g, cross_bound),
                                     C_gxy=cross_bound)
        return BilevelProblem(
            d1=self.d1, d2=self.d2,
            upper_value=upper_value,
            grad_x_f=lambda x, y: np.zeros(self.d1),
            grad_y_f=grad_y_f,
            lower_value=lower_value,
            grad_y_g=grad_y_g,
            hvp_yy=hvp_yy,
            cross_jvp=cross_jvp,
            constraint=L1Ball(dim=self.d2, radius=self.radius),
            constants=constants,
            name="hyperclean",
        )


def make_hyperclean(train: Dataset, val: Dataset, c_reg: float = 1e-2,
                    radius: float = 1.0) -> HypercleanProblem:
    return HypercleanProblem(train=train, val=val, c_reg=c_reg, radius=radius)
