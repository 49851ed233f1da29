import numpy as np
import pytest

from eafsched.milp.bnb import INFEASIBLE, OPTIMAL, make_lp, relative_gap, solve_mip
from eafsched.milp.model import (
    BuildOptions,
    ModelError,
    build_window,
    expected_counts,
    fix_binaries,
    minimal_covers,
    relax,
)
from eafsched.milp.mps import export_mps
from eafsched.milp.simplex import solve_lp
from eafsched.plant import FurnaceState, Variant, homogeneous_plant

from helpers import random_instance, scipy_milp

try:
    import highspy
except ImportError:  # pragma: no cover
    highspy = None


# build_window

def test_three_unit_window_dimensions(plant3):
    model = build_window(plant3, np.full(48, 40.0))
    n_covers = len(minimal_covers(plant3))
    assert n_covers == 1
    assert model.n_vars == 1296
    assert int(model.is_binary.sum()) == 432
    assert model.n_rows == 3 * (10 * 48 - 1) + 48 + 48
    assert (model.n_vars, int(model.is_binary.sum()), model.n_rows) == expected_counts(3, 48, n_covers=1)


def test_window_without_covers_or_coupling(plant3):
    model = build_window(plant3, np.zeros(10), options=BuildOptions(couple_vu=False, cap_covers=False))
    assert model.n_rows == expected_counts(3, 10, couple_vu=False)[2] == 3 * (9 * 10 - 1) + 10


def test_feed_cap_adds_rows():
    plant = homogeneous_plant(2, 0.107)
    plant = type(plant)(plant.units, plant.power_cap, 1.0, plant.variant)
    model = build_window(plant, np.zeros(6), options=BuildOptions(cap_covers=False))
    assert model.n_rows == expected_counts(2, 6, feed_cap=True)[2]


def test_running_boundary_blocks_first_startup(plant1):
    running = FurnaceState(m=0.2, s=0.5, u=1, v=1, k_prev=1 / 15)
    model = build_window(plant1, np.zeros(5), boundary=[running])
    assert model.ub[model.var("y", 0, 0)] == 0.0
    idle = build_window(plant1, np.zeros(5))
    assert idle.ub[idle.var("y", 0, 0)] == 1.0


def test_build_errors(plant1):
    with pytest.raises(ModelError):
        build_window(plant1, [])
    with pytest.raises(ModelError):
        build_window(plant1, np.zeros(4), horizon=5)
    with pytest.raises(ModelError):
        build_window(plant1, np.zeros(4), boundary=[FurnaceState(m=-1.0)])
    with pytest.raises(ModelError):
        build_window(plant1, np.zeros(4), boundary=[FurnaceState(u=0, v=1)])
    with pytest.raises(ModelError):
        build_window(plant1, np.zeros(4), boundary=[FurnaceState(), FurnaceState()])


# solve_lp

def test_lp_prohibitive_prices_keep_everything_off(plant1):
    sol = solve_lp(build_window(plant1, np.full(6, 1e6)))
    assert sol.ok
    assert sol.objective == pytest.approx(0.0, abs=1e-6)


def test_lp_relaxation_bounds_the_mip(plant1):
    model = build_window(plant1, np.zeros(12))
    lp = solve_lp(model)
    mip = solve_mip(model, rel_gap=0.0)
    assert lp.objective >= mip.objective - 1e-7


def test_lp_infeasible_bounds(plant1):
    model = build_window(plant1, np.zeros(3))
    lb = model.lb.copy()
    lb[0] = model.ub[0] + 1.0
    assert solve_lp(model, lb=lb).status == INFEASIBLE


def test_lp_matches_scipy_relaxation():
    rng = np.random.default_rng(3)
    for variant in Variant:
        plant, prices = random_instance(rng, 2, 8, variant)
        model = build_window(plant, prices)
        ref, _ = scipy_milp(model, relax=True)
        assert solve_lp(model).objective == pytest.approx(ref, abs=1e-6)


# solve_mip

def test_two_step_window_is_idle(plant1):
    sol = solve_mip(build_window(plant1, np.full(2, 40.0)), rel_gap=0.0)
    assert sol.status == OPTIMAL
    assert sol.objective == pytest.approx(0.0, abs=1e-9)


@pytest.fixture(scope="module")
def free_window():
    model = build_window(homogeneous_plant(1), np.zeros(40))
    return model, solve_mip(model, rel_gap=0.0)


def test_free_energy_single_cycle(plant1):
    # 30 steps hold exactly one charge, melt and tap cycle: 368 - 300 - 50
    model = build_window(plant1, np.zeros(30))
    assert solve_mip(model, rel_gap=0.0).objective == pytest.approx(18.0, abs=1e-6)


def test_free_energy_forty_steps_fits_two_batches(free_window):
    # a unit idle for one step may charge again on top of unmelted stock,
    # so 40 free-energy steps fit two batches
    model, sol = free_window
    ref, _ = scipy_milp(model)
    assert sol.objective == pytest.approx(36.0, abs=1e-6)
    assert sol.objective == pytest.approx(ref, abs=1e-6)
    assert model.max_violation(sol.x) < 1e-7


def test_random_windows_match_scipy():
    rng = np.random.default_rng(11)
    for k in range(30):
        variant = list(Variant)[k % 2]
        plant, prices = random_instance(rng, 1 + k % 2, 6, variant)
        model = build_window(plant, prices)
        ref, _ = scipy_milp(model)
        sol = solve_mip(model, rel_gap=0.0)
        assert sol.objective == pytest.approx(ref, abs=1e-6 * max(1.0, abs(ref)))


def test_lp_bound_dominates_on_random_instances():
    rng = np.random.default_rng(5)
    for k in range(100):
        plant, prices = random_instance(rng, 1, 5, list(Variant)[k % 2])
        model = build_window(plant, prices)
        mip = solve_mip(model, rel_gap=0.0)
        assert solve_lp(model).objective >= mip.objective - 1e-7
        assert mip.bound >= mip.objective - 1e-9


def test_solution_is_integral_and_feasible(plant3):
    model = build_window(plant3, np.linspace(80, -20, 30))
    sol = solve_mip(model, rel_gap=1e-4, node_limit=200)
    assert sol.has_solution
    b = sol.x[model.binary_index]
    assert np.allclose(b, np.round(b), atol=1e-6)
    assert model.max_violation(sol.x) < 1e-6
    assert sol.gap == pytest.approx(relative_gap(sol.bound, sol.objective))


def test_solver_is_deterministic(plant3):
    model = build_window(plant3, np.linspace(-10, 60, 24))
    a = solve_mip(model, rel_gap=1e-4, node_limit=100)
    b = solve_mip(model, rel_gap=1e-4, node_limit=100)
    assert a.objective == b.objective
    np.testing.assert_array_equal(a.x, b.x)


@pytest.mark.skipif(highspy is None, reason="highspy not installed")
def test_lp_engines_agree():
    rng = np.random.default_rng(8)
    plant, prices = random_instance(rng, 2, 5, Variant.PHYSICAL)
    model = build_window(plant, prices)
    a = solve_mip(model, rel_gap=0.0, lp_engine="simplex")
    b = solve_mip(model, rel_gap=0.0, lp_engine="highs")
    assert a.objective == pytest.approx(b.objective, abs=1e-6)
    lo, hi = model.lb, model.ub
    assert make_lp(model, "simplex")(lo, hi)[1] == pytest.approx(make_lp(model, "highs")(lo, hi)[1])


def test_unknown_lp_engine(plant1):
    with pytest.raises(ValueError):
        make_lp(build_window(plant1, np.zeros(2)), "cplex")


def test_fix_and_relax(plant1):
    model = build_window(plant1, np.zeros(4))
    assert not relax(model).is_binary.any()
    fixed = fix_binaries(model, np.zeros(len(model.binary_index)))
    assert solve_lp(fixed).objective == pytest.approx(0.0, abs=1e-9)


# MPS export

def test_mps_sections_in_order(tmp_path, plant1):
    path = export_mps(build_window(plant1, np.full(3, 40.0)), tmp_path / "w.mps")
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("*")]
    heads = [ln.split()[0] for ln in lines if ln and not ln.startswith(" ")]
    assert heads == ["NAME", "ROWS", "COLUMNS", "RHS", "BOUNDS", "ENDATA"]
    assert "'INTORG'" in path.read_text()


def test_mps_rejects_empty_model(tmp_path, plant1):
    model = build_window(plant1, np.zeros(1))
    empty = type(model)([], np.zeros(0, bool), np.zeros(0), np.zeros(0), np.zeros(0),
                        model.A[:0, :0], np.array([]), np.zeros(0), [])
    with pytest.raises(ValueError):
        export_mps(empty, tmp_path / "e.mps")


@pytest.mark.skipif(highspy is None, reason="highspy not installed")
def test_mps_round_trip_optimum(tmp_path, free_window):
    model, sol = free_window
    path = export_mps(model, tmp_path / "w.mps")
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.readModel(str(path))
    h.run()
    assert -h.getInfo().objective_function_value == pytest.approx(sol.objective, rel=1e-5)
