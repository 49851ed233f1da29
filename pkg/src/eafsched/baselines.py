"""Price-blind fixed-cycle operation.

Every furnace repeats melt, tap and stop phases on a fixed clock. A start
that would push the projected plant load over the cap is skipped, with
lower-index units claiming capacity first; the unit then waits for its
next slot. Processing cost is charged on tapped tons.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dispatch import DispatchLog
from .plant import FurnaceState, PlantConfig, StepDecision, step_plant
from .qlearning import CycleTemplate


@dataclass(frozen=True)
class UnitCycle:
    melt: int = 12
    tap: int = 4
    stop: int = 0
    offset: int = 0

    @property
    def period(self) -> int:
        """Steps between starts; a furnace must be idle for one step before it is charged."""
        return self.melt + self.tap + max(self.stop, 1)

    def validate(self):
        if self.melt < 1 or self.tap < 1 or self.stop < 0:
            raise ValueError(f"invalid cycle lengths {self}")
        if not 0 <= self.offset < self.melt + self.tap + self.stop:
            raise ValueError(f"offset {self.offset} outside the cycle")


@dataclass(frozen=True)
class FixedCycleSpec:
    units: tuple[UnitCycle, ...]

    @classmethod
    def default(cls, n_units: int) -> "FixedCycleSpec":
        offsets = [0, 8] + [0] * max(0, n_units - 2)
        return cls(tuple(UnitCycle(offset=o) for o in offsets[:n_units]))

    def validate(self, plant: PlantConfig):
        if len(self.units) != plant.n_units:
            raise ValueError(f"{len(self.units)} cycles given for {plant.n_units} units")
        for u in self.units:
            u.validate()


def run_fixed(plant: PlantConfig, rtp, spec: FixedCycleSpec | None = None) -> DispatchLog:
    lam = np.asarray(getattr(rtp, "values", rtp), dtype=float)
    spec = spec or FixedCycleSpec.default(plant.n_units)
    spec.validate(plant)
    T, N = len(lam), plant.n_units
    templates = [CycleTemplate(c.melt, c.tap) for c in spec.units]
    energy = [tpl.energy(p)[: tpl.length] for tpl, p in zip(templates, plant.units)]
    load = np.zeros(T + max(t.length for t in templates))
    fed = np.zeros(T)
    phase = np.full((T, N), -1, dtype=int)  # template index per step, -1 idle
    for i, (c, tpl) in enumerate(zip(spec.units, templates)):
        for t0 in range(c.offset, T, c.period):
            span = slice(t0, t0 + tpl.length)
            if np.any(load[span] + energy[i] > plant.power_cap + 1e-9):
                continue
            if plant.feed_cap is not None and fed[t0] + plant.units[i].batch_size > plant.feed_cap + 1e-9:
                continue
            load[span] += energy[i]
            fed[t0] += plant.units[i].batch_size
            end = min(T, t0 + tpl.length)
            phase[t0:end, i] = np.arange(end - t0)
    log = DispatchLog.empty("baseline", lam, N, cost_basis="output", check_rates=False)
    states = tuple(FurnaceState() for _ in plant.units)
    for t in range(T):
        decs = [StepDecision() if phase[t, i] < 0 else templates[i].decision(int(phase[t, i]), p)
                for i, p in enumerate(plant.units)]
        out = step_plant(states, decs, plant, float(lam[t]), check_rates=False, cost_basis="output")
        log.record(t, out, float(lam[t]))
        states = out.states
    log.info["skipped_starts"] = int(sum(len(range(c.offset, T, c.period)) for c in spec.units) - log.startups)
    return log
