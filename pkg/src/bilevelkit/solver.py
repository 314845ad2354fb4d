"""Single-loop momentum solver with adaptive scalar step scaling.

Per iteration, with schedule eta_k = t / sqrt(m_shift + k):

    x_{k+1} = x_k - eta_k * gamma * w_k / clamp(sqrt(m2_k) + G0)
    y~      = P_Y(y_k - tau * v_k / clamp(sqrt(m1_k) + G0))
    y_{k+1} = (1 - eta_k) * y_k + eta_k * y~
    w_{k+1} = (1 - alpha_k) * w_k + alpha_k * hypergradient(x_{k+1}, y_{k+1})
    v_{k+1} = (1 - beta_k) * v_k + beta_k * grad_y g(x_{k+1}, y_{k+1})

with alpha_k = c1 * eta_k, beta_k = c2 * eta_k, and m1/m2 exponential
moving averages of the squared norms of the fresh gradient estimates
(of v's and w's source respectively), clamped into [1/c_u, 1/c_l].
Both momentum pairs use the gradient evaluated at the *new* iterate.
The returned iterate is x after a uniformly sampled step index, which
is the form the stationarity guarantee speaks about.
"""

from __future__ import annotations

import dataclasses
import time
import warnings
from typing import Callable

import numpy as np

from .hypergradient import HypergradConfig, NonFiniteError, eta_window, \
    stochastic_hypergradient
from .problem import BilevelProblem
from .rngs import substream


class ConfigError(ValueError):
    """Structural solver-configuration violations (all listed)."""


@dataclasses.dataclass(frozen=True)
class SolverConfig:
    K: int = 1000
    seed: int = 0
    eta: float = 0.5
    delta: float = 1e-6
    Q: int = 3
    gamma: float = 0.3
    tau: float = 0.1
    c1: float = 10.0
    c2: float = 10.0
    t: float = 1.0
    m_shift: float = 100.0
    c_l: float = 0.1
    c_u: float = 10.0
    G0: float = 1e-6
    ema_decay: float = 0.99
    ema_gain: float = 0.01
    n_directions: int | None = None
    direction_dist: str = "sphere"
    per_coordinate_scale: bool = False

    def schedule(self, k: int) -> float:
        return self.t / np.sqrt(self.m_shift + k)

    def hypergrad_config(self) -> HypergradConfig:
        return HypergradConfig(eta=self.eta, Q=self.Q, delta=self.delta,
                               n_directions=self.n_directions,
                               direction_dist=self.direction_dist)


def config_errors(cfg: SolverConfig) -> list[str]:
    """Structurally verifiable violations; empty list means runnable."""
    errs = []
    for field in ("eta", "delta", "gamma", "tau", "c1", "c2", "t"):
        if not (getattr(cfg, field) > 0 and np.isfinite(getattr(cfg, field))):
            errs.append(f"{field} must be positive and finite")
    if cfg.K < 1:
        errs.append("K must be >= 1")
    if cfg.Q < 1:
        errs.append("Q must be >= 1")
    if cfg.m_shift < 0:
        errs.append("m_shift must be >= 0")
    if not (0 < cfg.c_l <= cfg.c_u):
        errs.append(f"need 0 < c_l <= c_u, got c_l={cfg.c_l:g}, c_u={cfg.c_u:g}")
    if cfg.G0 < 0:
        errs.append("G0 must be >= 0")
    if not (0 <= cfg.ema_decay < 1):
        errs.append("ema_decay must lie in [0, 1)")
    if not (0 < cfg.ema_gain <= 1):
        errs.append("ema_gain must lie in (0, 1]")
    if cfg.t > 0 and cfg.m_shift >= 0:
        eta1 = cfg.schedule(1)
        if eta1 > 1.0:
            errs.append(f"step schedule starts at eta_1={eta1:g} > 1 "
                        "(t too large for m_shift)")
        for cname in ("c1", "c2"):
            coef = getattr(cfg, cname) * eta1
            if coef > 1.0:
                errs.append(
                    f"momentum weight {cname}*eta_1 = {coef:g} > 1; "
                    f"lower {cname} or t, or raise m_shift")
    return errs


def config_advisories(cfg: SolverConfig, p: BilevelProblem | None = None) -> list[str]:
    """Theory-window notes that depend on problem constants."""
    notes = []
    if p is None:
        notes.append("problem constants unavailable; step-size window not checked")
        return notes
    mu = p.constants.mu_g
    lo, hi = eta_window(mu, p.d2)
    if cfg.eta >= hi:
        notes.append(f"eta={cfg.eta:g} >= 1/mu_g={hi:g}: truncation bias "
                     "of the hypergradient series will not contract")
    elif cfg.eta < lo:
        notes.append(f"eta={cfg.eta:g} below the variance-safe window "
                     f"[{lo:g}, {hi:g}) for d2={p.d2}")
    if p.constants.L_g > 0 and cfg.eta >= 2.0 / p.constants.L_g:
        notes.append(f"eta={cfg.eta:g} >= 2/L_g={2.0 / p.constants.L_g:g}: "
                     "the inner fixed-point map may be expansive")
    return notes


@dataclasses.dataclass
class SolverState:
    x: np.ndarray
    y: np.ndarray
    v: np.ndarray
    w: np.ndarray
    m1: float | np.ndarray
    m2: float | np.ndarray
    k: int


@dataclasses.dataclass(frozen=True)
class TraceRecord:
    k: int
    eta_k: float
    w_norm: float
    v_norm: float
    x_step_norm: float
    y_step_norm: float
    f_value: float
    g_value: float
    wall_time: float


@dataclasses.dataclass
class RunTrace:
    records: list[TraceRecord]
    output_index: int
    output_iterate: np.ndarray
    final_state: SolverState


def clamp_scale(m, G0: float, c_l: float, c_u: float):
    """sqrt(m) + G0 clamped into [1/c_u, 1/c_l] (works elementwise)."""
    return np.clip(np.sqrt(m) + G0, 1.0 / c_u, 1.0 / c_l)


def _sq(vec: np.ndarray, per_coordinate: bool):
    if per_coordinate:
        return vec * vec
    return float(vec @ vec)


def init_state(p: BilevelProblem, x1, y1, cfg: SolverConfig,
               rng: np.random.Generator) -> SolverState:
    """Momentum buffers start at the raw gradient estimates at (x1, y1)."""
    x = np.array(x1, dtype=np.float64, copy=True)
    y = np.array(y1, dtype=np.float64, copy=True)
    if x.shape != (p.d1,) or y.shape != (p.d2,):
        raise ValueError(f"expected x1 of shape ({p.d1},) and y1 of shape ({p.d2},)")
    if not p.constraint.contains(y):
        warnings.warn("initial y1 infeasible; projecting onto the constraint set",
                      stacklevel=2)
        y = p.constraint.project(y)
    v = np.asarray(p.grad_y_g(x, y), dtype=np.float64)
    w = stochastic_hypergradient(p, x, y, cfg.hypergrad_config(), rng).value
    return SolverState(x=x, y=y, v=v, w=w,
                       m1=_sq(v, cfg.per_coordinate_scale),
                       m2=_sq(w, cfg.per_coordinate_scale), k=1)


def step(p: BilevelProblem, state: SolverState, cfg: SolverConfig,
         rng: np.random.Generator) -> tuple[SolverState, TraceRecord]:
    t0 = time.perf_counter()
    k = state.k
    eta_k = cfg.schedule(k)

    x_new = state.x - eta_k * cfg.gamma * state.w / clamp_scale(
        state.m2, cfg.G0, cfg.c_l, cfg.c_u)
    if not np.all(np.isfinite(x_new)):
        raise NonFiniteError("x update")
    y_tilde = p.constraint.project(
        state.y - cfg.tau * state.v / clamp_scale(state.m1, cfg.G0, cfg.c_l, cfg.c_u))
    y_new = (1.0 - eta_k) * state.y + eta_k * y_tilde
    if not np.all(np.isfinite(y_new)):
        raise NonFiniteError("y update")

    sample = stochastic_hypergradient(p, x_new, y_new, cfg.hypergrad_config(), rng)
    alpha = cfg.c1 * eta_k
    w_new = (1.0 - alpha) * state.w + alpha * sample.value
    if not np.all(np.isfinite(w_new)):
        raise NonFiniteError("upper momentum update")

    gv = np.asarray(p.grad_y_g(x_new, y_new), dtype=np.float64)
    beta = cfg.c2 * eta_k
    v_new = (1.0 - beta) * state.v + beta * gv
    if not np.all(np.isfinite(v_new)):
        raise NonFiniteError("lower momentum update")

    # each scale tracks its own gradient source (fresh estimates, not momenta)
    m1_new = cfg.ema_decay * state.m1 + cfg.ema_gain * _sq(gv, cfg.per_coordinate_scale)
    m2_new = cfg.ema_decay * state.m2 + cfg.ema_gain * _sq(
        sample.value, cfg.per_coordinate_scale)

    record = TraceRecord(
        k=k,
        eta_k=float(eta_k),
        w_norm=float(np.linalg.norm(state.w)),
        v_norm=float(np.linalg.norm(state.v)),
        x_step_norm=float(np.linalg.norm(x_new - state.x)),
        y_step_norm=float(np.linalg.norm(y_tilde - state.y)),
        f_value=float(p.upper_value(x_new, y_new)),
        g_value=float(p.lower_value(x_new, y_new)),
        wall_time=time.perf_counter() - t0,
    )
    new_state = SolverState(x=x_new, y=y_new, v=v_new, w=w_new,
                            m1=m1_new, m2=m2_new, k=k + 1)
    return new_state, record


def run(p: BilevelProblem, x1, y1, cfg: SolverConfig,
        trace_sink: Callable[[TraceRecord], None] | None = None) -> RunTrace:
    """Run K steps and return the uniformly sampled output iterate.

    Deterministic given ``cfg.seed``: initialization, per-step
    estimator draws, and output sampling use independent named
    substreams, so e.g. changing K only affects the draw of the output
    index, never the step-by-step trajectory prefix.
    """
    errs = config_errors(cfg)
    if errs:
        raise ConfigError("; ".join(errs))
    for note in config_advisories(cfg, p):
        warnings.warn(note, stacklevel=2)

    rng_init = substream(cfg.seed, "init")
    rng_hyper = substream(cfg.seed, "hypergrad")
    rng_out = substream(cfg.seed, "output-sampling")

    state = init_state(p, x1, y1, cfg, rng_init)
    output_index = int(rng_out.integers(1, cfg.K + 1))
    output_iterate: np.ndarray | None = None
    records: list[TraceRecord] = []
    for _ in range(cfg.K):
        state, rec = step(p, state, cfg, rng_hyper)
        records.append(rec)
        if trace_sink is not None:
            trace_sink(rec)
        if rec.k == output_index:
            output_iterate = state.x.copy()
    assert output_iterate is not None
    return RunTrace(records=records, output_index=output_index,
                    output_iterate=output_iterate, final_state=state)


def descent_trend(records: list[TraceRecord], cfg: SolverConfig) -> tuple[float, float]:
    """(first-quartile, last-quartile) means of the step-size surrogate.

    The surrogate per step is ||y~ - y||^2 + ||x+ - x||^2 / (gamma*c_l)^2;
    a converging run shows last < first.
    """
    if len(records) < 8:
        raise ValueError("need at least 8 records for a quartile trend")
    scale = (cfg.gamma * cfg.c_l) ** 2
    vals = [r.y_step_norm ** 2 + r.x_step_norm ** 2 / scale for r in records]
    q = len(vals) // 4
    return float(np.mean(vals[:q])), float(np.mean(vals[-q:]))
