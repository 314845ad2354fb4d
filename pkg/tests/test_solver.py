from __future__ import annotations

import numpy as np
import pytest

import bilevelkit as bk
from bilevelkit.rngs import substream
from bilevelkit.solver import clamp_scale


def test_clamp_scale_hand_values():
    assert clamp_scale(4.0, 0.0, 0.1, 10.0) == 2.0
    assert clamp_scale(1e6, 0.0, 0.1, 10.0) == 10.0    # hits 1/c_l
    assert clamp_scale(0.0, 0.0, 0.1, 10.0) == 0.1     # hits 1/c_u
    assert clamp_scale(0.0, 1e-6, 0.1, 10.0) == 0.1


def test_schedule_values_and_monotonicity():
    cfg = bk.SolverConfig(K=10)
    assert cfg.schedule(0) == pytest.approx(0.1)       # 1/sqrt(100)
    assert cfg.schedule(300) == pytest.approx(0.05)    # 1/sqrt(400)
    etas = [cfg.schedule(k) for k in range(100)]
    assert all(a > b for a, b in zip(etas, etas[1:]))


def test_eta_window_frozen_value():
    lo, hi = bk.eta_window(0.5, 3)
    assert hi == pytest.approx(2.0)
    assert lo == pytest.approx(1.81769, abs=1e-4)
    assert lo < hi


def test_config_errors_flag_bad_fields():
    msgs = bk.config_errors(bk.SolverConfig(K=0))
    assert any("K" in m for m in msgs)
    msgs = bk.config_errors(bk.SolverConfig(K=5, gamma=-1.0))
    assert any("gamma" in m for m in msgs)
    msgs = bk.config_errors(bk.SolverConfig(K=5, c_l=5.0, c_u=0.5))
    assert any("c_l" in m or "c_u" in m for m in msgs)
    assert bk.config_errors(bk.SolverConfig(K=5)) == []


def test_config_advisories_mention_eta_window(small_quad):
    cfg = bk.SolverConfig(K=10, eta=0.5)
    notes = bk.config_advisories(cfg, small_quad.problem)
    assert any("variance-safe window" in n for n in notes)


def test_infeasible_start_is_projected(tight_quad):
    p = tight_quad.problem
    cfg = bk.SolverConfig(K=2, seed=0)
    y_bad = np.full(p.d2, 10.0)  # way outside the box
    with pytest.warns(UserWarning, match="infeasible"):
        tr = bk.run(p, np.zeros(p.d1), y_bad, cfg)
    assert p.constraint.contains(tr.final_state.y, tol=1e-9)


def test_step_matches_documented_update(small_quad):
    p = small_quad.problem
    cfg = bk.SolverConfig(K=5, seed=3)
    rng = substream(cfg.seed, "hypergrad")
    st1 = bk.init_state(p, np.zeros(p.d1), np.zeros(p.d2), cfg, rng)
    st2, rec = bk.step(p, st1, cfg, rng)

    eta_k = cfg.schedule(st1.k)
    x_expect = st1.x - eta_k * cfg.gamma * st1.w / clamp_scale(
        st1.m2, cfg.G0, cfg.c_l, cfg.c_u)
    np.testing.assert_allclose(st2.x, x_expect, atol=1e-15)

    y_tilde = p.constraint.project(
        st1.y - cfg.tau * st1.v / clamp_scale(st1.m1, cfg.G0, cfg.c_l, cfg.c_u))
    y_expect = (1.0 - eta_k) * st1.y + eta_k * y_tilde
    np.testing.assert_allclose(st2.y, y_expect, atol=1e-15)

    assert rec.k == st1.k
    assert rec.eta_k == eta_k
    assert rec.x_step_norm == pytest.approx(np.linalg.norm(st2.x - st1.x))
    assert rec.y_step_norm == pytest.approx(np.linalg.norm(y_tilde - st1.y))
    assert st2.k == st1.k + 1


def test_momentum_blends_old_and_new(small_quad):
    # w_{k+1} = new + (1 - c1*eta_k^2)(w_k - old) needs |coef| < 1 here;
    # just check the buffers move and stay finite under default constants
    p = small_quad.problem
    cfg = bk.SolverConfig(K=50, seed=1)
    tr = bk.run(p, np.zeros(p.d1), np.zeros(p.d2), cfg)
    assert np.isfinite(tr.final_state.w).all()
    assert np.isfinite(tr.final_state.v).all()
    assert tr.final_state.m1 > 0 and tr.final_state.m2 > 0


def test_run_is_deterministic(small_quad):
    p = small_quad.problem
    cfg = bk.SolverConfig(K=40, seed=9)
    a = bk.run(p, np.zeros(p.d1), np.zeros(p.d2), cfg)
    b = bk.run(p, np.zeros(p.d1), np.zeros(p.d2), cfg)
    np.testing.assert_array_equal(a.final_state.x, b.final_state.x)
    np.testing.assert_array_equal(a.final_state.y, b.final_state.y)
    assert a.output_index == b.output_index
    for ra, rb in zip(a.records, b.records):
        assert (ra.k, ra.eta_k, ra.w_norm, ra.v_norm, ra.x_step_norm,
                ra.y_step_norm, ra.f_value, ra.g_value) == \
               (rb.k, rb.eta_k, rb.w_norm, rb.v_norm, rb.x_step_norm,
                rb.y_step_norm, rb.f_value, rb.g_value)


def test_seed_changes_trajectory(small_quad):
    p = small_quad.problem
    a = bk.run(p, np.zeros(p.d1), np.zeros(p.d2), bk.SolverConfig(K=10, seed=0))
    b = bk.run(p, np.zeros(p.d1), np.zeros(p.d2), bk.SolverConfig(K=10, seed=1))
    assert not np.array_equal(a.final_state.x, b.final_state.x)


def test_single_step_run(small_quad):
    p = small_quad.problem
    tr = bk.run(p, np.zeros(p.d1), np.zeros(p.d2), bk.SolverConfig(K=1, seed=2))
    assert len(tr.records) == 1
    assert tr.output_index == 1
    np.testing.assert_array_equal(tr.output_iterate, tr.final_state.x)


def test_trace_sink_sees_every_record(small_quad):
    p = small_quad.problem
    got = []
    tr = bk.run(p, np.zeros(p.d1), np.zeros(p.d2),
                bk.SolverConfig(K=7, seed=4), trace_sink=got.append)
    assert got == tr.records


def test_output_index_within_run(small_quad):
    p = small_quad.problem
    tr = bk.run(p, np.zeros(p.d1), np.zeros(p.d2), bk.SolverConfig(K=30, seed=6))
    assert 1 <= tr.output_index <= 30


def test_descent_trend_on_quadratic(small_quad):
    p = small_quad.problem
    cfg = bk.SolverConfig(K=400, seed=0, gamma=0.1)
    tr = bk.run(p, np.zeros(p.d1), np.zeros(p.d2), cfg)
    first, last = bk.descent_trend(tr.records, cfg)
    assert last < first


def test_descent_trend_needs_enough_records(small_quad):
    p = small_quad.problem
    cfg = bk.SolverConfig(K=4, seed=0)
    tr = bk.run(p, np.zeros(p.d1), np.zeros(p.d2), cfg)
    with pytest.raises(ValueError, match="records"):
        bk.descent_trend(tr.records, cfg)
