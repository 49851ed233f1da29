"""Random small instances shared by several test modules."""

import numpy as np

from eafsched.plant import FurnaceParams, PlantConfig, Variant


def random_unit(rng: np.random.Generator) -> FurnaceParams:
    """A unit whose rates are large enough for a full cycle to fit in a few steps."""
    I = rng.uniform(0.5, 1.5)
    base = rng.uniform(0.002, 0.01)
    return FurnaceParams(
        batch_size=I,
        max_tap_rate=I * rng.uniform(0.34, 1.0),
        max_melt_rate=I * rng.uniform(0.34, 1.0),
        sell_price=rng.uniform(300, 500),
        yield_ratio=rng.uniform(0.8, 1.0),
        proc_cost=rng.uniform(100, 300),
        startup_cost=rng.uniform(1, 40),
        melt_energy=base + rng.uniform(0.02, 0.06),
        base_energy=base,
    )


def random_instance(rng: np.random.Generator, n_units: int, horizon: int, variant: Variant):
    """Random small plant and price window (prices drawn around a synthetic level)."""
    units = tuple(random_unit(rng) for _ in range(n_units))
    loads = [u.full_load for u in units]
    cap = rng.uniform(max(loads) * 1.01, sum(loads) * 1.1)
    feed = None if rng.random() < 0.7 else rng.uniform(max(u.batch_size for u in units), 3.0)
    plant = PlantConfig(units, cap, feed, variant)
    prices = rng.normal(rng.uniform(-50, 150), 60.0, horizon)
    return plant, prices


def scipy_milp(model, relax: bool = False):
    """Independent solve of a window model with ``scipy.optimize.milp`` (HiGHS)."""
    from scipy.optimize import Bounds, LinearConstraint, milp

    lo = np.where(model.sense == "G", model.rhs, -np.inf)
    hi = np.where(model.sense == "L", model.rhs, np.inf)
    eq = model.sense == "E"
    lo[eq] = model.rhs[eq]
    hi[eq] = model.rhs[eq]
    integrality = np.zeros(model.n_vars) if relax else model.is_binary.astype(float)
    res = milp(-model.c, constraints=LinearConstraint(model.A, lo, hi), integrality=integrality,
               bounds=Bounds(model.lb, model.ub), options={"mip_rel_gap": 0.0})
    assert res.success, res.message
    return -res.fun + model.obj_offset, res.x
