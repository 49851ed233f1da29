import logging

import numpy as np
import pytest

from eafsched import rolling
from eafsched.dispatch import replay
from eafsched.milp.bnb import INFEASIBLE_UNKNOWN, MIPSolution
from eafsched.milp.model import build_window
from eafsched.plant import FurnaceState, Variant
from eafsched.prices import synth_prices
from eafsched.rolling import RollingConfig, read_checkpoint, run_rolling, solve_full_horizon

from helpers import random_instance, scipy_milp


def test_config_validation():
    with pytest.raises(ValueError):
        RollingConfig(horizon=0)
    with pytest.raises(ValueError):
        RollingConfig(horizon=4, step=5)
    with pytest.raises(ValueError):
        RollingConfig(gap=-1.0)


def test_single_window_equals_one_shot_solve():
    rng = np.random.default_rng(2)
    for variant in Variant:
        plant, prices = random_instance(rng, 2, 8, variant)
        cfg = RollingConfig(horizon=8, step=8, gap=0.0, node_limit=100_000)
        log = run_rolling(plant, prices, cfg)
        full = solve_full_horizon(plant, prices, cfg)
        assert log.info["windows"] == 1
        assert log.total_profit == pytest.approx(full.objective, abs=1e-6)


def test_free_energy_rolling_reaches_full_horizon_optimum(plant1):
    prices = np.zeros(64)
    log = run_rolling(plant1, prices, RollingConfig(horizon=48, step=12))
    ref, _ = scipy_milp(build_window(plant1, prices))
    assert log.total_profit == pytest.approx(ref, rel=1e-4)
    assert ref == pytest.approx(72.0, abs=1e-6)


def test_running_boundary_blocks_startup_at_joint(plant1):
    running = FurnaceState(m=0.3, s=0.4, u=1, v=1, k_prev=1 / 15)
    log = run_rolling(plant1, np.zeros(24), RollingConfig(horizon=12, step=6), initial=[running])
    assert log.y[0, 0] == 0
    for t in range(1, 24):
        if log.y[t, 0]:
            assert log.u[t - 1, 0] == 0 and log.v[t - 1, 0] == 0


def test_replay_and_continuity(plant3):
    _, rtp = synth_prices(4, 1)
    log = run_rolling(plant3, rtp.values[:96], RollingConfig(horizon=24, step=12, node_limit=30))
    rep = replay(log, plant3)
    # stocks at every window joint are the ones the plant model produces
    assert rep.max_stock_error == 0.0
    assert rep.max_profit_error <= 1e-9
    assert rep.total == pytest.approx(log.total_profit, abs=1e-9)
    assert log.info["windows"] == 8


def test_final_partial_window_is_truncated(plant1):
    log = run_rolling(plant1, np.full(30, 40.0), RollingConfig(horizon=12, step=12))
    assert log.n_steps == 30
    assert [w.length for w in log.info["window_records"]] == [12, 12, 6]


def _failing_solver(calls, fail_times):
    real = rolling.solve_mip

    def fake(model, *args, **kw):
        calls.append(args[0] if args else kw.get("rel_gap"))
        if len(calls) <= fail_times:
            return MIPSolution(INFEASIBLE_UNKNOWN, -np.inf, None, np.inf, np.inf, 0)
        return real(model, *args, **kw)
    return fake


def test_failed_window_retries_with_doubled_gap(monkeypatch, tmp_path, plant1):
    calls = []
    monkeypatch.setattr(rolling, "solve_mip", _failing_solver(calls, 1))
    cfg = RollingConfig(horizon=12, step=12, gap=1e-4, checkpoint_dir=str(tmp_path))
    log = run_rolling(plant1, np.zeros(12), cfg)
    assert calls[:2] == [1e-4, 2e-4]
    rec = log.info["window_records"][0]
    assert rec.retried and not rec.skipped
    ck = read_checkpoint(tmp_path / "window_00000.json")
    assert ck["window"] == 0 and ck["start_step"] == 0
    assert ck["boundary"] == [FurnaceState()]


def test_failed_window_is_skipped_idle(monkeypatch, tmp_path, plant1, caplog):
    calls = []
    monkeypatch.setattr(rolling, "solve_mip", _failing_solver(calls, 2))
    cfg = RollingConfig(horizon=12, step=6, checkpoint_dir=str(tmp_path))
    with caplog.at_level(logging.WARNING, logger="eafsched.rolling"):
        log = run_rolling(plant1, np.zeros(24), cfg)
    assert log.info["skipped_windows"] == 1
    assert not log.u[:6].any() and not log.y[:6].any()
    assert "no solution" in caplog.text
    assert (tmp_path / "window_00000.json").exists()


def test_value_is_monotone_in_horizon():
    rng = np.random.default_rng(0)
    gap = 1e-4
    for k in range(20):
        plant, prices = random_instance(rng, 1, 24, list(Variant)[k % 2])
        short = run_rolling(plant, prices, RollingConfig(horizon=4, step=4, gap=gap, node_limit=2000))
        long = run_rolling(plant, prices, RollingConfig(horizon=8, step=4, gap=gap, node_limit=2000))
        assert short.info["node_limited_windows"] == long.info["node_limited_windows"] == 0
        slack = gap * max(1.0, abs(short.total_profit)) * long.info["windows"]
        assert long.total_profit >= short.total_profit - slack
