"""Furnace and plant parameters, two-stage furnace stepping and profit accounting.

All power quantities are energies per 5-minute step (MWh/step), so an
electricity cost is simply ``price * energy``.
"""

from __future__ import annotations

import configparser
import enum
from dataclasses import dataclass, fields, replace
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

TOL = 1e-6


class Variant(str, enum.Enum):
    """Which stock/rate coupling the furnace follows.

    ``AS_WRITTEN`` lets tapping draw on the solid stock and melting on the
    molten stock. ``PHYSICAL`` melts solid into molten and taps the molten
    stock.
    """

    AS_WRITTEN = "as_written"
    PHYSICAL = "physical"


class InfeasibleDecisionError(ValueError):
    """A step decision breaks a rate cap, a stock limit or the stage logic."""


class StartupLogicError(InfeasibleDecisionError):
    """A startup was requested for a unit that was not idle."""


@dataclass(frozen=True)
class FurnaceParams:
    batch_size: float  # ton charged per startup
    max_tap_rate: float  # ton/step
    max_melt_rate: float  # ton/step
    sell_price: float  # $/ton
    yield_ratio: float
    proc_cost: float  # $/ton
    startup_cost: float  # $
    melt_energy: float  # MWh/step on top of base while melting
    base_energy: float  # MWh/step while on

    @property
    def full_load(self) -> float:
        return self.base_energy + self.melt_energy

    @property
    def unit_margin(self) -> float:
        """Revenue minus processing cost per ton tapped."""
        return self.sell_price * self.yield_ratio - self.proc_cost


@dataclass(frozen=True)
class PlantConfig:
    units: tuple[FurnaceParams, ...]
    power_cap: float
    feed_cap: float | None = None
    variant: Variant = Variant.PHYSICAL

    def __post_init__(self):
        object.__setattr__(self, "units", tuple(self.units))
        object.__setattr__(self, "variant", Variant(self.variant))

    @property
    def n_units(self) -> int:
        return len(self.units)


@dataclass(frozen=True)
class FurnaceState:
    """Stocks at the current step plus the stage flags and rates chosen in it."""

    m: float = 0.0
    s: float = 0.0
    u: int = 0
    v: int = 0
    r_prev: float = 0.0
    k_prev: float = 0.0

    @property
    def idle(self) -> bool:
        return self.u == 0 and self.v == 0


@dataclass(frozen=True)
class StepDecision:
    y: int = 0
    u: int = 0
    v: int = 0
    r: float = 0.0
    k: float = 0.0


@dataclass(frozen=True)
class UnitFlows:
    """What one unit did during one step."""

    u: int
    v: int
    y: int
    r: float
    k: float
    i: float
    P: float


@dataclass(frozen=True)
class StepOutcome:
    flows: tuple[UnitFlows, ...]
    states: tuple[FurnaceState, ...]
    energy: float
    profit: float


# Reference units: the standard unit of the homogeneous plant and the three units of the mixed plant.
STANDARD_UNIT = FurnaceParams(1.0, 1 / 12, 1 / 15, 400.0, 0.92, 300.0, 50.0, 0.0367, 0.0033)
HIGH_EFFICIENCY_UNIT = FurnaceParams(1.2, 1 / 10, 1 / 15, 420.0, 0.88, 280.0, 80.0, 0.0542, 0.0029)
LEGACY_UNIT = FurnaceParams(0.8, 1 / 15, 1 / 20, 380.0, 0.92, 300.0, 20.0, 0.0460, 0.0042)


def homogeneous_plant(n_units=3, power_cap=0.107, variant=Variant.PHYSICAL, feed_cap=None):
    return PlantConfig((STANDARD_UNIT,) * n_units, power_cap, feed_cap, variant)


def heterogeneous_plant(power_cap=0.107, variant=Variant.PHYSICAL, feed_cap=None):
    return PlantConfig((HIGH_EFFICIENCY_UNIT, STANDARD_UNIT, LEGACY_UNIT), power_cap, feed_cap, variant)


def power_draw(u: int, v: int, params: FurnaceParams) -> float:
    """Energy drawn in one step: base load when on, plus melt load when melting."""
    if v and not u:
        raise InfeasibleDecisionError("melting requires the furnace to be on (v=1, u=0)")
    return params.base_energy * u + params.melt_energy * v


def step_furnace(
    state: FurnaceState,
    decision: StepDecision,
    params: FurnaceParams,
    variant: Variant = Variant.PHYSICAL,
    check_rates: bool = True,
    tol: float = TOL,
) -> tuple[FurnaceState, UnitFlows]:
    """Advance one unit by one step.

    Stocks move with a one-step lag: the rates stored in ``state`` are the
    ones applied in the previous step and are consumed now, while the rates
    in ``decision`` are bounded by the stocks of the new step.

    ``check_rates=False`` skips the nameplate rate caps; template policies
    use it because their melt/tap pattern runs faster than ``R``/``K``.
    """
    y, u, v, r, k = decision.y, decision.u, decision.v, decision.r, decision.k
    if v and not u:
        raise InfeasibleDecisionError("melting requires the furnace to be on (v=1, u=0)")
    if y and not state.idle:
        raise StartupLogicError("startup requested while the unit was not idle")
    if r < -tol or k < -tol:
        raise InfeasibleDecisionError(f"negative rate r={r}, k={k}")

    charged = params.batch_size * y
    if Variant(variant) is Variant.PHYSICAL:
        m = state.m + state.k_prev - state.r_prev
        s = state.s + charged - state.k_prev
        melt_src, tap_src = s, m
    else:
        m = state.m + charged - state.k_prev
        s = state.s + charged - state.r_prev
        melt_src, tap_src = m, s
    if m < -tol or s < -tol:
        raise InfeasibleDecisionError(f"negative stock m={m}, s={s}")
    m, s = max(m, 0.0), max(s, 0.0)

    if check_rates:
        if r > params.max_tap_rate * u + tol:
            raise InfeasibleDecisionError(f"tap rate {r} exceeds cap {params.max_tap_rate * u}")
        if k > params.max_melt_rate * v + tol:
            raise InfeasibleDecisionError(f"melt rate {k} exceeds cap {params.max_melt_rate * v}")
    elif (r > tol and not u) or (k > tol and not v):
        raise InfeasibleDecisionError("rates must be zero outside their operating stage")
    if k > melt_src + tol or r > tap_src + tol:
        raise InfeasibleDecisionError(
            f"rates (r={r}, k={k}) exceed available stock (m={m}, s={s})"
        )

    flows = UnitFlows(u, v, y, r, k, charged, power_draw(u, v, params))
    return FurnaceState(m, s, u, v, r, k), flows


def unit_profit(flow: UnitFlows, price: float, params: FurnaceParams, cost_basis: str = "input") -> float:
    processed = flow.i if cost_basis == "input" else flow.r
    return (
        params.sell_price * params.yield_ratio * flow.r
        - params.proc_cost * processed
        - price * flow.P
        - params.startup_cost * flow.y
    )


def step_profit(
    flows: Sequence[UnitFlows],
    price: float,
    units: Sequence[FurnaceParams],
    cost_basis: str = "input",
) -> float:
    """Plant profit for one step.

    ``cost_basis="input"`` charges processing on charged tons (the MILP
    objective); ``"output"`` charges it on tapped tons, as in the rolling
    procedure and fixed-cycle formulas. Both agree over a completed cycle.
    """
    if cost_basis not in ("input", "output"):
        raise ValueError(f"unknown cost basis {cost_basis!r}")
    return sum(unit_profit(f, price, p, cost_basis) for f, p in zip(flows, units))


def step_plant(
    states: Sequence[FurnaceState],
    decisions: Sequence[StepDecision],
    plant: PlantConfig,
    price: float,
    check_rates: bool = True,
    cost_basis: str = "input",
    tol: float = TOL,
) -> StepOutcome:
    new_states, flows = [], []
    for state, decision, params in zip(states, decisions, plant.units):
        st, fl = step_furnace(state, decision, params, plant.variant, check_rates, tol)
        new_states.append(st)
        flows.append(fl)
    energy = sum(f.P for f in flows)
    if energy > plant.power_cap + tol:
        raise InfeasibleDecisionError(f"plant energy {energy} exceeds cap {plant.power_cap}")
    if plant.feed_cap is not None and sum(f.i for f in flows) > plant.feed_cap + tol:
        raise InfeasibleDecisionError("charged tons exceed the feed cap")
    profit = step_profit(flows, price, plant.units, cost_basis)
    return StepOutcome(tuple(flows), tuple(new_states), energy, profit)


def cycle_energy_per_ton(params: FurnaceParams) -> float:
    """Calibration energy per ton: melt load over ``I/R`` steps plus base load
    over ``I/K`` steps, divided by the batch size."""
    I = params.batch_size
    return (params.melt_energy * I / params.max_tap_rate + params.base_energy * I / params.max_melt_rate) / I


def full_load_of_largest(units: Iterable[FurnaceParams], count: int = 2) -> float:
    """Summed full-load energy of the ``count`` largest units."""
    loads = sorted((u.full_load for u in units), reverse=True)
    return sum(loads[:count])


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    unit: int | None = None


def validate_plant(config: PlantConfig) -> list[Violation]:
    """Return every invariant violation of ``config``; an empty list means valid."""
    out: list[Violation] = []
    if not config.units:
        out.append(Violation("no-units", "plant needs at least one unit"))
    for idx, p in enumerate(config.units):
        for f in fields(p):
            val = getattr(p, f.name)
            if f.name == "yield_ratio":
                if not 0.0 < val <= 1.0:
                    out.append(Violation("yield-range", f"yield {val} outside (0, 1]", idx))
            elif not val > 0:
                out.append(Violation("nonpositive", f"{f.name}={val} must be > 0", idx))
        if not p.melt_energy > p.base_energy:
            out.append(Violation("melt-not-above-base", "melt energy must exceed base energy", idx))
    if config.units and not config.power_cap > max(p.full_load for p in config.units):
        out.append(
            Violation(
                "cap-too-small",
                f"power cap {config.power_cap} does not admit one unit at full load",
            )
        )
    if config.feed_cap is not None and not config.feed_cap > 0:
        out.append(Violation("feed-cap", "feed cap must be positive when set"))
    return out


# ---------------------------------------------------------------- config file

_PARAM_NAMES = [f.name for f in fields(FurnaceParams)]


def _parse_number(text: str) -> float:
    return float(Fraction(text.strip()))


def load_plant(path) -> PlantConfig:
    """Read a plant file: a ``[plant]`` section and one ``[unit.*]`` section per unit.

    Numbers may be written as fractions (``1/12``).
    """
    cp = configparser.ConfigParser()
    with open(path) as fh:
        cp.read_file(fh)
    if "plant" not in cp:
        raise ValueError(f"{path}: missing [plant] section")
    plant = cp["plant"]
    units = []
    for name in cp.sections():
        if not name.startswith("unit"):
            continue
        sec = cp[name]
        missing = [k for k in _PARAM_NAMES if k not in sec]
        if missing:
            raise ValueError(f"{path}: [{name}] missing {', '.join(missing)}")
        units.append(FurnaceParams(**{k: _parse_number(sec[k]) for k in _PARAM_NAMES}))
    feed = plant.get("feed_cap", "").strip()
    return PlantConfig(
        tuple(units),
        power_cap=_parse_number(plant["power_cap"]),
        feed_cap=_parse_number(feed) if feed and feed.lower() != "none" else None,
        variant=Variant(plant.get("variant", Variant.PHYSICAL.value).strip().lower()),
    )


def save_plant(config: PlantConfig, path) -> Path:
    cp = configparser.ConfigParser()
    cp["plant"] = {
        "power_cap": repr(config.power_cap),
        "feed_cap": "none" if config.feed_cap is None else repr(config.feed_cap),
        "variant": config.variant.value,
    }
    for idx, p in enumerate(config.units, start=1):
        cp[f"unit.{idx}"] = {k: repr(getattr(p, k)) for k in _PARAM_NAMES}
    path = Path(path)
    with open(path, "w") as fh:
        cp.write(fh)
    return path


def with_units(config: PlantConfig, units: Sequence[FurnaceParams]) -> PlantConfig:
    return replace(config, units=tuple(units))
