import numpy as np
import pytest

from eafsched.milp.bnb import solve_mip
from eafsched.milp.model import BuildOptions, build_window
from eafsched.oracle import OracleBudgetError, brute_force_optimal, template_dp
from eafsched.plant import Variant, homogeneous_plant
from eafsched.prices import PriceBucketizer, synth_prices
from eafsched.qlearning import QTable, RLConfig, evaluate, train

from helpers import random_instance, scipy_milp


def test_two_steps_idle(plant1):
    res = brute_force_optimal(plant1, np.full(2, 40.0))
    assert res.objective == pytest.approx(0.0, abs=1e-9)
    assert res.enumerated > 1


def test_one_step_idle(plant1):
    assert brute_force_optimal(plant1, np.zeros(1)).objective == pytest.approx(0.0, abs=1e-9)


def test_budget(plant3):
    with pytest.raises(OracleBudgetError):
        brute_force_optimal(plant3, np.zeros(3))


def test_oracle_matches_independent_solver():
    rng = np.random.default_rng(21)
    for k in range(12):
        variant = list(Variant)[k % 2]
        plant, prices = random_instance(rng, 1, 6, variant)
        res = brute_force_optimal(plant, prices)
        ref, _ = scipy_milp(build_window(plant, prices, options=BuildOptions(cap_covers=False)))
        assert res.objective == pytest.approx(ref, abs=1e-6 * max(1.0, abs(ref)))


def test_oracle_dominates_feasible_schedules():
    rng = np.random.default_rng(4)
    plant, prices = random_instance(rng, 2, 4, Variant.PHYSICAL)
    res = brute_force_optimal(plant, prices)
    model = build_window(plant, prices)
    for nodes in (1, 3, 10):
        sol = solve_mip(model, rel_gap=0.5, node_limit=nodes)
        if sol.has_solution:
            assert res.objective >= sol.objective - 1e-7


def test_template_dp_single_cycle(plant1):
    assert template_dp(plant1, np.zeros(16)).profit == pytest.approx(18.0)


def test_template_dp_short_series(plant1):
    assert template_dp(plant1, np.zeros(15)).profit == 0.0


def test_template_dp_two_cycles(plant1):
    # a cycle plus its idle step takes 17 steps, so 40 steps fit two
    res = template_dp(plant1, np.zeros(40))
    assert res.profit == pytest.approx(36.0)
    starts = np.flatnonzero(res.starts[:, 0])
    assert len(starts) == 2 and starts[1] - starts[0] >= 17 and starts[1] + 16 <= 40


def test_template_dp_bounds_rl_policy(plant3):
    dap, rtp = synth_prices(6, 10)
    split = 7 * 288
    table = train(plant3, dap.values[:split], RLConfig(episodes=30, kappa=16.0)).table
    d, r = dap.values[split:], rtp.values[split:]
    res = evaluate(table, d, r, plant3)
    assert res.profit <= template_dp(plant3, r).profit + 1e-6
    zero = evaluate(QTable.zeros(3, PriceBucketizer((0.0,) * 4, 0.0)), d, r, plant3, lookahead_ties=False)
    assert zero.profit <= template_dp(plant3, r).profit


def test_template_dp_unit_budget():
    with pytest.raises(OracleBudgetError):
        template_dp(homogeneous_plant(4, 0.2), np.zeros(20))


def test_oracles_accept_price_series(plant1):
    _, rtp = synth_prices(0, 1)
    series = rtp.window(0, 40)
    assert template_dp(plant1, series).profit == template_dp(plant1, series.values).profit
    assert brute_force_optimal(plant1, rtp.window(0, 3)).objective == \
        brute_force_optimal(plant1, rtp.values[:3]).objective
