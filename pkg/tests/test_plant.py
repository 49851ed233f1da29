import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eafsched.plant import (
    HIGH_EFFICIENCY_UNIT,
    LEGACY_UNIT,
    STANDARD_UNIT,
    FurnaceState,
    InfeasibleDecisionError,
    PlantConfig,
    StartupLogicError,
    StepDecision,
    UnitFlows,
    Variant,
    cycle_energy_per_ton,
    full_load_of_largest,
    heterogeneous_plant,
    homogeneous_plant,
    load_plant,
    power_draw,
    save_plant,
    step_furnace,
    step_plant,
    step_profit,
    validate_plant,
)

U = STANDARD_UNIT


def test_standard_unit_constants():
    assert (U.batch_size, U.max_tap_rate, U.max_melt_rate) == (1.0, 1 / 12, 1 / 15)
    assert (U.sell_price, U.yield_ratio, U.proc_cost, U.startup_cost) == (400.0, 0.92, 300.0, 50.0)
    assert (U.melt_energy, U.base_energy) == (0.0367, 0.0033)


# power_draw

def test_power_draw_off():
    assert power_draw(0, 0, U) == 0.0


def test_power_draw_base_only():
    assert power_draw(1, 0, U) == 0.0033


def test_power_draw_full_load():
    assert power_draw(1, 1, U) == pytest.approx(0.0033 + 0.0367, abs=1e-15)
    assert power_draw(1, 1, U) == pytest.approx(0.04, abs=1e-12)


def test_power_draw_rejects_melt_while_off():
    with pytest.raises(InfeasibleDecisionError):
        power_draw(0, 1, U)


# step_furnace

def test_charge_from_idle_physical():
    st, fl = step_furnace(FurnaceState(), StepDecision(y=1), U, Variant.PHYSICAL)
    assert (st.s, st.m) == (1.0, 0.0)
    assert fl.i == 1.0


def test_one_melt_step_physical():
    # melt 1/15 at a step with (m=0, s=1); the stocks react one step later
    s0, _ = step_furnace(FurnaceState(m=0.0, s=1.0), StepDecision(u=1, v=1, k=1 / 15), U, Variant.PHYSICAL)
    s1, _ = step_furnace(s0, StepDecision(), U, Variant.PHYSICAL)
    assert s1.s == pytest.approx(1 - 1 / 15, abs=1e-12)
    assert s1.m == pytest.approx(1 / 15, abs=1e-12)


def test_as_written_update():
    s0, _ = step_furnace(FurnaceState(m=1.0, s=1.0), StepDecision(u=1, v=1, r=1 / 12, k=1 / 15), U,
                         Variant.AS_WRITTEN)
    s1, _ = step_furnace(s0, StepDecision(), U, Variant.AS_WRITTEN)
    assert s1.m == pytest.approx(1 - 1 / 15, abs=1e-12)
    assert s1.s == pytest.approx(1 - 1 / 12, abs=1e-12)


def test_negative_stock_is_rejected():
    with pytest.raises(InfeasibleDecisionError):
        step_furnace(FurnaceState(s=0.0), StepDecision(u=1, v=1, k=1 / 15), U, Variant.PHYSICAL)


def test_startup_from_running_unit_is_rejected():
    with pytest.raises(StartupLogicError):
        step_furnace(FurnaceState(u=1), StepDecision(y=1, u=1), U)


def test_rate_caps_are_enforced():
    with pytest.raises(InfeasibleDecisionError):
        step_furnace(FurnaceState(s=1.0), StepDecision(u=1, v=1, k=0.5), U)
    # without the nameplate check the stock limit still applies
    step_furnace(FurnaceState(s=1.0), StepDecision(u=1, v=1, k=0.5), U, check_rates=False)
    with pytest.raises(InfeasibleDecisionError):
        step_furnace(FurnaceState(s=0.4), StepDecision(u=1, v=1, k=0.5), U, check_rates=False)


# step_profit

def test_profit_all_idle():
    flows = [UnitFlows(0, 0, 0, 0.0, 0.0, 0.0, 0.0)] * 3
    assert step_profit(flows, 123.0, [U] * 3) == 0.0


def test_profit_startup_step():
    fl = UnitFlows(u=1, v=1, y=1, r=0.0, k=0.0, i=1.0, P=power_draw(1, 1, U))
    assert step_profit([fl], 40.0, [U]) == pytest.approx(-(300 * 1 + 40 * 0.04 + 50), abs=1e-9)
    assert step_profit([fl], 40.0, [U]) == pytest.approx(-351.6, abs=1e-9)


def test_profit_tapping_step():
    fl = UnitFlows(u=1, v=0, y=0, r=1 / 12, k=0.0, i=0.0, P=power_draw(1, 0, U))
    assert step_profit([fl], 40.0, [U]) == pytest.approx(400 * 0.92 / 12 - 40 * 0.0033, abs=1e-9)
    assert step_profit([fl], 40.0, [U]) == pytest.approx(30.535, abs=1e-3)


def test_profit_output_basis_charges_tapped_tons():
    fl = UnitFlows(u=1, v=0, y=0, r=0.25, k=0.0, i=0.0, P=0.0033)
    assert step_profit([fl], 0.0, [U], cost_basis="output") == pytest.approx((368 - 300) * 0.25)
    with pytest.raises(ValueError):
        step_profit([fl], 0.0, [U], cost_basis="bogus")


# calibration and caps

def test_cycle_energy_per_ton_standard():
    expected = (0.0367 * 1.0 / (1 / 12) + 0.0033 * 1.0 / (1 / 15)) / 1.0
    assert cycle_energy_per_ton(U) == pytest.approx(expected, rel=1e-12)
    assert cycle_energy_per_ton(U) == pytest.approx(0.4899, abs=1e-9)


def test_cycle_energy_per_ton_zero_power():
    p = dataclasses.replace(U, melt_energy=0.0, base_energy=0.0)
    assert cycle_energy_per_ton(p) == 0.0


def test_cycle_energy_per_ton_high_efficiency_unit():
    # melt load over I/R = 12 steps, base load over I/K = 18 steps, per 1.2 t
    expected = (0.0542 * 1.2 / 0.1 + 0.0029 * 1.2 * 15) / 1.2
    assert cycle_energy_per_ton(HIGH_EFFICIENCY_UNIT) == pytest.approx(expected, rel=1e-12)
    assert cycle_energy_per_ton(HIGH_EFFICIENCY_UNIT) == pytest.approx(0.5855, abs=1e-9)


def test_two_largest_full_loads():
    assert full_load_of_largest(heterogeneous_plant().units) == pytest.approx(0.0571 + 0.0502, abs=1e-12)


def test_validate_homogeneous_plant_ok():
    assert validate_plant(homogeneous_plant(3, 0.107)) == []


def test_validate_heterogeneous_plant_ok():
    assert validate_plant(heterogeneous_plant()) == []


def test_validate_yield_range():
    bad = PlantConfig((dataclasses.replace(U, yield_ratio=1.3),), 0.107)
    assert [v.code for v in validate_plant(bad)] == ["yield-range"]


def test_validate_cap_too_small():
    codes = [v.code for v in validate_plant(homogeneous_plant(3, 0.01))]
    assert codes == ["cap-too-small"]


def test_validate_reports_every_violation():
    bad = PlantConfig((dataclasses.replace(U, yield_ratio=0.0, proc_cost=-1.0, melt_energy=0.001),), 0.0)
    codes = sorted(v.code for v in validate_plant(bad))
    assert codes == ["cap-too-small", "melt-not-above-base", "nonpositive", "yield-range"]
    assert [v.code for v in validate_plant(PlantConfig((), 0.1))] == ["no-units"]


def test_plant_file_round_trip(tmp_path):
    plant = PlantConfig((HIGH_EFFICIENCY_UNIT, LEGACY_UNIT), 0.107, 2.0, Variant.AS_WRITTEN)
    path = save_plant(plant, tmp_path / "plant.ini")
    assert load_plant(path) == plant


def test_plant_file_accepts_fractions(tmp_path):
    text = "[plant]\npower_cap = 0.107\nvariant = physical\n\n[unit.1]\n" + "\n".join(
        f"{k} = {v}" for k, v in [("batch_size", "1"), ("max_tap_rate", "1/12"), ("max_melt_rate", "1/15"),
                                  ("sell_price", "400"), ("yield_ratio", "0.92"), ("proc_cost", "300"),
                                  ("startup_cost", "50"), ("melt_energy", "0.0367"), ("base_energy", "0.0033")])
    (tmp_path / "p.ini").write_text(text + "\n")
    plant = load_plant(tmp_path / "p.ini")
    assert plant.units == (U,)
    assert plant.feed_cap is None


def test_plant_file_missing_field(tmp_path):
    (tmp_path / "p.ini").write_text("[plant]\npower_cap = 0.1\n[unit.1]\nbatch_size = 1\n")
    with pytest.raises(ValueError, match="missing"):
        load_plant(tmp_path / "p.ini")


# properties

def _greedy_cycle(unit, T: int, start: int):
    """Charge at ``start``, then melt and tap as fast as the nameplate rates and stocks allow."""
    decisions = []
    state = FurnaceState()
    for t in range(T):
        if t < start:
            d = StepDecision()
        elif t == start:
            d = StepDecision(y=1, u=1, v=1, k=unit.max_melt_rate)
        else:
            m = state.m + state.k_prev - state.r_prev
            s = state.s - state.k_prev
            k = min(unit.max_melt_rate, max(s, 0.0))
            r = min(unit.max_tap_rate, max(m, 0.0))
            k = 0.0 if k < 1e-12 else k
            r = 0.0 if r < 1e-12 else r
            on = int(k > 0 or r > 0)
            d = StepDecision(u=on, v=int(k > 0), r=r, k=k)
        state, _ = step_furnace(state, d, unit)
        decisions.append(d)
    return decisions


@given(st.floats(-100, 300), st.integers(0, 5))
def test_isolated_cycle_profit_identity(price, start):
    T = start + 40
    plant = homogeneous_plant(1)
    states = (FurnaceState(),)
    total, energy, tapped = 0.0, 0.0, 0.0
    for d in _greedy_cycle(U, T, start):
        out = step_plant(states, [d], plant, price)
        states = out.states
        total += out.profit
        energy += out.energy
        tapped += out.flows[0].r
    assert tapped == pytest.approx(1.0, abs=1e-9)
    assert total == pytest.approx(368 - 300 - price * energy - 50, abs=1e-7)


decision_st = st.tuples(st.integers(0, 1), st.integers(0, 1), st.integers(0, 1),
                        st.floats(0, 1), st.floats(0, 1))


@given(st.lists(st.lists(decision_st, min_size=2, max_size=2), min_size=1, max_size=40),
       st.sampled_from(list(Variant)))
def test_accepted_steps_keep_invariants(raw, variant):
    plant = homogeneous_plant(2, 0.107, variant)
    states = (FurnaceState(), FurnaceState())
    charged = np.zeros(2)
    tapped = np.zeros(2)
    for row in raw:
        decs = []
        for (y, u, v, fr, fk), p, stt in zip(row, plant.units, states):
            u = max(u, v)
            decs.append(StepDecision(y, u, v, fr * p.max_tap_rate * u, fk * p.max_melt_rate * v))
        try:
            out = step_plant(states, decs, plant, 30.0)
        except InfeasibleDecisionError:
            continue
        for prev, fl, new, p in zip(states, out.flows, out.states, plant.units):
            assert fl.P == p.base_energy * fl.u + p.melt_energy * fl.v
            assert new.m >= 0 and new.s >= 0
            if fl.y:
                assert prev.u == 0 and prev.v == 0
            assert new.v <= new.u
        assert out.energy <= plant.power_cap + 1e-6
        charged += [f.i for f in out.flows]
        tapped += [f.r for f in out.flows]
        states = out.states
        if variant is Variant.PHYSICAL:
            assert np.all(tapped <= charged + 1e-9)
            for stt, c, tp in zip(states, charged, tapped):
                # stocks seen at a step still include the tons tapped in it
                assert stt.s + stt.m - stt.r_prev == pytest.approx(c - tp, abs=1e-9)
