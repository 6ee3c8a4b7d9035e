"""Domain model shared by the scheduling modules, scenario I/O, and an
independent schedule checker.

Units: power in MW, energy in MWh, money in $, hours numbered from 1 in
files and from 0 in in-memory vectors.
"""

from __future__ import annotations

import csv
import math
import os
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib
import tomli_w

from .errors import ScenarioError, ScheduleStructureError

INF = math.inf
HORIZON = 24
CHECK_TOL = 1e-6
# smallest positive deviation that counts as "positive" in the deviation indicator logic
DEVIATION_EPS = 1e-3


def _tuple(xs, n=None, fill=0.0):
    if xs is None:
        return tuple([fill] * n) if n is not None else ()
    return tuple(float(x) for x in xs)


@dataclass(frozen=True)
class DispatchableUnit:
    id: str
    p_min: float
    p_max: float
    marginal_cost: float
    no_load_cost: float = 0.0
    startup_cost: float = 0.0
    shutdown_cost: float = 0.0
    ramp_up: float = INF
    ramp_down: float = INF
    min_up: int = 1
    min_down: int = 1
    initial_on: bool = False
    initial_power: float = 0.0

    def __post_init__(self):
        if not 0 <= self.p_min <= self.p_max:
            raise ScenarioError(f"unit {self.id}: requires 0 <= p_min <= p_max")
        if self.ramp_up < 0 or self.ramp_down < 0:
            raise ScenarioError(f"unit {self.id}: ramp rates must be nonnegative")
        if self.min_up < 1 or self.min_down < 1:
            raise ScenarioError(f"unit {self.id}: min_up and min_down must be >= 1")
        if self.initial_power != 0 and not self.p_min <= self.initial_power <= self.p_max:
            raise ScenarioError(f"unit {self.id}: initial_power must be 0 or within [p_min, p_max]")
        if not self.initial_on and self.initial_power != 0:
            raise ScenarioError(f"unit {self.id}: an offline unit must have initial_power 0")


@dataclass(frozen=True, kw_only=True)
class GenUnit(DispatchableUnit):
    """A transmission-level unit, located at ``bus``."""

    bus: str


@dataclass(frozen=True)
class StorageUnit:
    id: str
    charge_max: float
    discharge_max: float
    energy_capacity: float
    soc_min: float
    soc_max: float
    charge_eff: float = 1.0
    discharge_eff: float = 1.0
    initial_soc: float = 0.0

    def __post_init__(self):
        if not 0 <= self.soc_min <= self.initial_soc <= self.soc_max <= self.energy_capacity:
            raise ScenarioError(
                f"storage {self.id}: requires 0 <= soc_min <= initial_soc <= soc_max <= energy_capacity")
        if not (0 < self.charge_eff <= 1 and 0 < self.discharge_eff <= 1):
            raise ScenarioError(f"storage {self.id}: efficiencies must lie in (0, 1]")
        if self.charge_max < 0 or self.discharge_max < 0:
            raise ScenarioError(f"storage {self.id}: power limits must be nonnegative")


@dataclass(frozen=True)
class AdjustableLoad:
    """Load that must draw ``required_energy`` inside the window [start, end] (1-based, inclusive)."""

    id: str
    d_min: float
    d_max: float
    required_energy: float
    start: int
    end: int
    min_operating_time: int = 1
    pickup_rate: float = INF
    drop_rate: float = INF

    def __post_init__(self):
        if not 0 <= self.d_min <= self.d_max:
            raise ScenarioError(f"adjustable load {self.id}: requires 0 <= d_min <= d_max")
        if not 1 <= self.start <= self.end:
            raise ScenarioError(f"adjustable load {self.id}: window must satisfy 1 <= start <= end")
        hours = self.end - self.start + 1
        if self.required_energy > self.d_max * hours + 1e-9:
            raise ScenarioError(f"adjustable load {self.id}: required energy exceeds d_max * window length")
        if self.min_operating_time < 1 or self.required_energy < self.d_min * self.min_operating_time - 1e-9:
            raise ScenarioError(f"adjustable load {self.id}: required energy below d_min * min_operating_time")

    def nominal_profile(self, horizon):
        """Required energy spread evenly over the window."""
        share = self.required_energy / (self.end - self.start + 1)
        return tuple(share if self.start - 1 <= t <= self.end - 1 else 0.0 for t in range(horizon))


@dataclass(frozen=True)
class MicrogridSpec:
    id: str
    fixed_load: tuple
    units: tuple = ()
    storage: tuple = ()
    adjustable_loads: tuple = ()
    nondispatchable_gen: tuple | None = None
    voll: float = 1000.0
    tie_limit: float = INF
    islanding: tuple | None = None
    deviation_penalty: tuple | None = None

    def __post_init__(self):
        T = len(self.fixed_load)
        set_ = object.__setattr__
        set_(self, "fixed_load", _tuple(self.fixed_load))
        set_(self, "nondispatchable_gen", _tuple(self.nondispatchable_gen, T))
        set_(self, "islanding", tuple(int(u) for u in (self.islanding or [1] * T)))
        set_(self, "deviation_penalty", _tuple(self.deviation_penalty, T))
        set_(self, "units", tuple(self.units))
        set_(self, "storage", tuple(self.storage))
        set_(self, "adjustable_loads", tuple(self.adjustable_loads))
        for name in ("nondispatchable_gen", "islanding", "deviation_penalty"):
            if len(getattr(self, name)) != T:
                raise ScenarioError(f"microgrid {self.id}: {name} must have {T} entries")
        if any(d < 0 for d in self.fixed_load):
            raise ScenarioError(f"microgrid {self.id}: fixed load must be nonnegative")
        if any(g < 0 or g > d + 1e-9 for g, d in zip(self.nondispatchable_gen, self.fixed_load)):
            raise ScenarioError(
                f"microgrid {self.id}: nondispatchable generation must lie in [0, fixed load]")
        if not self.tie_limit > 0:
            raise ScenarioError(f"microgrid {self.id}: tie_limit must be positive")
        if any(u not in (0, 1) for u in self.islanding):
            raise ScenarioError(f"microgrid {self.id}: islanding indicator must be 0 or 1")
        if any(self.voll <= u.marginal_cost for u in self.units):
            raise ScenarioError(f"microgrid {self.id}: voll must exceed every unit marginal cost")
        if any(p < 0 for p in self.deviation_penalty):
            raise ScenarioError(f"microgrid {self.id}: deviation penalty must be nonnegative")
        for a in self.adjustable_loads:
            if a.end > T:
                raise ScenarioError(f"microgrid {self.id}: adjustable load {a.id} window exceeds horizon")
        ids = [x.id for x in (*self.units, *self.storage, *self.adjustable_loads)]
        if len(set(ids)) != len(ids):
            raise ScenarioError(f"microgrid {self.id}: asset ids must be unique")

    @property
    def horizon(self):
        return len(self.fixed_load)

    @property
    def net_fixed_load(self):
        return tuple(d - g for d, g in zip(self.fixed_load, self.nondispatchable_gen))

    def forecast_load(self):
        """Net demand a utility would forecast: fixed + nominal adjustable - nondispatchable."""
        out = list(self.net_fixed_load)
        for a in self.adjustable_loads:
            for t, x in enumerate(a.nominal_profile(self.horizon)):
                out[t] += x
        return tuple(out)


@dataclass(frozen=True)
class Segment:
    price: float
    width: float


@dataclass(frozen=True)
class DemandBid:
    """Hourly staircase bid: a price-insensitive block plus segments in nonincreasing price order."""

    microgrid: str
    fixed: tuple
    segments: tuple  # per hour: tuple of Segment

    def __post_init__(self):
        object.__setattr__(self, "fixed", _tuple(self.fixed))
        object.__setattr__(self, "segments", tuple(tuple(s) for s in self.segments))
        if len(self.segments) != len(self.fixed):
            raise ScenarioError(f"bid {self.microgrid}: segments must cover every hour")
        for t, segs in enumerate(self.segments):
            for a, b in zip(segs, segs[1:]):
                if b.price > a.price:
                    raise ScenarioError(f"bid {self.microgrid}: hour {t + 1} segment prices must be nonincreasing")
            if any(s.width <= 0 for s in segs):
                raise ScenarioError(f"bid {self.microgrid}: hour {t + 1} segment widths must be positive")

    @property
    def horizon(self):
        return len(self.fixed)


@dataclass(frozen=True)
class Line:
    id: str
    from_bus: str
    to_bus: str
    reactance: float
    limit: float

    def __post_init__(self):
        if not self.reactance > 0:
            raise ScenarioError(f"line {self.id}: reactance must be positive")
        if not self.limit > 0:
            raise ScenarioError(f"line {self.id}: flow limit must be positive")


@dataclass(frozen=True)
class TransmissionNetwork:
    buses: tuple
    lines: tuple
    reference_bus: str
    base_power: float = 100.0
    loads: dict = field(default_factory=dict)  # bus -> hourly base demand (MW)

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "lines", tuple(self.lines))
        object.__setattr__(self, "loads", {b: _tuple(v) for b, v in self.loads.items()})
        if len(set(self.buses)) != len(self.buses):
            raise ScenarioError("bus ids must be unique")
        if self.reference_bus not in self.buses:
            raise ScenarioError(f"reference bus {self.reference_bus} does not exist")
        known = set(self.buses)
        adj = {b: [] for b in self.buses}
        for ln in self.lines:
            if ln.from_bus not in known or ln.to_bus not in known:
                raise ScenarioError(f"line {ln.id}: endpoint bus does not exist")
            adj[ln.from_bus].append(ln.to_bus)
            adj[ln.to_bus].append(ln.from_bus)
        seen, queue = {self.reference_bus}, deque([self.reference_bus])
        while queue:
            for nb in adj[queue.popleft()]:
                if nb not in seen:
                    seen.add(nb)
                    queue.append(nb)
        if seen != known:
            raise ScenarioError(f"network is not connected: unreachable buses {sorted(known - seen)}")
        for b in self.loads:
            if b not in known:
                raise ScenarioError(f"load profile for unknown bus {b}")

    def load(self, bus, horizon):
        return self.loads.get(bus, (0.0,) * horizon)


@dataclass(frozen=True)
class ScenarioConfig:
    dmo_bus: str
    horizon: int = HORIZON
    mode: str = "both"
    penalty_multipliers: tuple = (1.0, 2.0, 5.0)
    penalty_mode: str = "positive_only"
    islanding: tuple = ()  # (microgrid, hour)
    load_spike: tuple = ()  # (hour, multiplier)
    output_dir: str = "out"
    seed: int = 0
    voll: float = 1000.0
    reserve_margin: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "penalty_multipliers", tuple(float(m) for m in self.penalty_multipliers))
        object.__setattr__(self, "islanding", tuple((str(m), int(h)) for m, h in self.islanding))
        object.__setattr__(self, "load_spike", tuple((int(h), float(k)) for h, k in self.load_spike))
        if self.mode not in ("market", "price", "both"):
            raise ScenarioError(f"mode must be market, price or both, got {self.mode!r}")
        if self.penalty_mode not in ("positive_only", "absolute"):
            raise ScenarioError(f"penalty_mode must be positive_only or absolute, got {self.penalty_mode!r}")
        if any(m < 0 for m in self.penalty_multipliers):
            raise ScenarioError("penalty multipliers must be nonnegative")
        if any(k <= 0 for _, k in self.load_spike):
            raise ScenarioError("load spike multipliers must be positive")
        hours = [h for _, h in self.islanding] + [h for h, _ in self.load_spike]
        if any(not 1 <= h <= self.horizon for h in hours):
            raise ScenarioError(f"override hours must lie in 1..{self.horizon}")


class Scenario(NamedTuple):
    network: TransmissionNetwork
    units: list
    microgrids: list
    config: ScenarioConfig


@dataclass
class MicrogridSchedule:
    """Hourly solution of one microgrid's scheduling problem (vectors indexed from hour 0)."""

    microgrid: str
    mode: str  # "market" or "price"
    grid: tuple  # scheduled main-grid import P^M (negative = export)
    assigned: tuple  # DMO-assigned import; zeros in price mode
    deviation: tuple
    deviation_pos: tuple
    deviation_flag: tuple
    curtailment: tuple
    unit_power: dict
    unit_on: dict
    storage_charge: dict = field(default_factory=dict)
    storage_discharge: dict = field(default_factory=dict)
    soc: dict = field(default_factory=dict)
    adjustable_power: dict = field(default_factory=dict)
    adjustable_on: dict = field(default_factory=dict)
    penalty: tuple = ()
    prices: tuple = ()
    penalty_mode: str = "positive_only"
    cost_operation: float = 0.0
    cost_curtailment: float = 0.0
    cost_deviation: float = 0.0
    cost_energy: float = 0.0

    @property
    def objective(self):
        return self.cost_operation + self.cost_curtailment + self.cost_deviation + self.cost_energy

    @property
    def horizon(self):
        return len(self.grid)


# ---------------------------------------------------------------------------
# schedule checking


@dataclass(frozen=True)
class Violation:
    constraint: str
    hour: int | None  # 1-based
    magnitude: float
    asset: str | None = None


def schedule_costs(spec, sched):
    """Recompute the (operation, curtailment, deviation, energy) cost totals of ``sched``."""
    rows = hourly_costs(spec, sched)
    return tuple(sum(r[k] for r in rows) for k in range(4))


def hourly_costs(spec, sched):
    """Per-hour (operation, curtailment, deviation, energy) costs; they sum to :func:`schedule_costs`."""
    T = sched.horizon
    op = [0.0] * T
    for u in spec.units:
        prev = 1 if u.initial_on else 0
        for t, (p, i) in enumerate(zip(sched.unit_power[u.id], sched.unit_on[u.id])):
            i = round(i)
            op[t] += u.marginal_cost * p + u.no_load_cost * i
            op[t] += u.startup_cost * max(0, i - prev) + u.shutdown_cost * max(0, prev - i)
            prev = i
    rows = []
    for t in range(T):
        curt = spec.voll * sched.curtailment[t]
        dev = energy = 0.0
        if sched.mode == "market":
            neg = max(0.0, -sched.deviation[t]) if sched.penalty_mode == "absolute" else 0.0
            dev = sched.penalty[t] * (sched.deviation_pos[t] + neg)
        else:
            energy = sched.prices[t] * sched.grid[t]
        rows.append((op[t], curt, dev, energy))
    return rows


def _check_binary(out, name, values, asset, tol):
    for t, v in enumerate(values):
        if min(abs(v), abs(v - 1)) > tol:
            out.append(Violation(name, t + 1, min(abs(v), abs(v - 1)), asset))


def _check_min_times(out, on, initial, min_up, min_down, asset, tol, label="unit"):
    T = len(on)
    state = [round(v) for v in on]
    prev = 1 if initial else 0
    for t in range(T):
        if state[t] == 1 and prev == 0:
            for k in range(t, min(T, t + min_up)):
                if state[k] != 1:
                    out.append(Violation(f"{label}_min_up", k + 1, 1.0, asset))
                    break
        if state[t] == 0 and prev == 1:
            for k in range(t, min(T, t + min_down)):
                if state[k] != 0:
                    out.append(Violation(f"{label}_min_down", k + 1, 1.0, asset))
                    break
        prev = state[t]


def validate_schedule(spec: MicrogridSpec, sched: MicrogridSchedule, tol=CHECK_TOL):
    """Re-check every scheduling constraint on ``sched`` without using the model builder.

    Returns a list of :class:`Violation`; empty means the schedule is feasible
    within ``tol``.  Raises ScheduleStructureError when the schedule does not
    cover the microgrid's horizon or assets.
    """
    T = spec.horizon
    vectors = ("grid", "assigned", "deviation", "deviation_pos", "deviation_flag", "curtailment")
    for name in vectors:
        if len(getattr(sched, name)) != T:
            raise ScheduleStructureError(f"{name} has {len(getattr(sched, name))} entries, expected {T}")
    groups = [
        ({u.id for u in spec.units}, ("unit_power", "unit_on")),
        ({s.id for s in spec.storage}, ("storage_charge", "storage_discharge", "soc")),
        ({a.id for a in spec.adjustable_loads}, ("adjustable_power", "adjustable_on")),
    ]
    for ids, names in groups:
        for name in names:
            got = getattr(sched, name)
            if set(got) != ids:
                raise ScheduleStructureError(f"{name} covers {sorted(got)}, expected {sorted(ids)}")
            if any(len(v) != T for v in got.values()):
                raise ScheduleStructureError(f"{name} vectors must have {T} entries")
    if sched.mode not in ("market", "price"):
        raise ScheduleStructureError(f"unknown schedule mode {sched.mode!r}")

    out: list[Violation] = []
    scale = lambda x: tol * max(1.0, abs(x))  # noqa: E731

    # power balance
    for t in range(T):
        supply = sched.grid[t] + sched.curtailment[t] + spec.nondispatchable_gen[t]
        supply += sum(sched.unit_power[u.id][t] for u in spec.units)
        supply += sum(sched.storage_discharge[s.id][t] for s in spec.storage)
        demand = spec.fixed_load[t] + sum(sched.adjustable_power[a.id][t] for a in spec.adjustable_loads)
        demand += sum(sched.storage_charge[s.id][t] for s in spec.storage)
        if abs(supply - demand) > scale(demand):
            out.append(Violation("power_balance", t + 1, abs(supply - demand)))
        ls = sched.curtailment[t]
        cap = spec.net_fixed_load[t] + sum(sched.adjustable_power[a.id][t] for a in spec.adjustable_loads)
        if ls < -tol or ls > cap + scale(cap):
            out.append(Violation("curtailment_limit", t + 1, max(-ls, ls - cap)))

    # grid transfer limit and islanding
    for t in range(T):
        pm = sched.grid[t]
        if spec.islanding[t] == 0:
            if abs(pm) > tol:
                out.append(Violation("islanding", t + 1, abs(pm)))
        elif abs(pm) > spec.tie_limit + scale(spec.tie_limit):
            out.append(Violation("grid_transfer_limit", t + 1, abs(pm) - spec.tie_limit))

    # dispatchable units
    for u in spec.units:
        p, on = sched.unit_power[u.id], sched.unit_on[u.id]
        _check_binary(out, "unit_commitment_binary", on, u.id, tol)
        for t in range(T):
            i = round(on[t])
            if p[t] < u.p_min * i - tol or p[t] > u.p_max * i + tol:
                out.append(Violation("unit_output_limit", t + 1, max(u.p_min * i - p[t], p[t] - u.p_max * i), u.id))
        prev_p, prev_i = u.initial_power, 1 if u.initial_on else 0
        for t in range(T):
            i = round(on[t])
            if prev_i == 1 and p[t] - prev_p > u.ramp_up + tol:
                out.append(Violation("unit_ramp_up", t + 1, p[t] - prev_p - u.ramp_up, u.id))
            if i == 1 and prev_p - p[t] > u.ramp_down + tol:
                out.append(Violation("unit_ramp_down", t + 1, prev_p - p[t] - u.ramp_down, u.id))
            prev_p, prev_i = p[t], i
        _check_min_times(out, on, u.initial_on, u.min_up, u.min_down, u.id, tol)

    # storage
    for s in spec.storage:
        ch, dis, soc = sched.storage_charge[s.id], sched.storage_discharge[s.id], sched.soc[s.id]
        prev = s.initial_soc
        for t in range(T):
            if ch[t] < -tol or ch[t] > s.charge_max + tol:
                out.append(Violation("storage_charge_limit", t + 1, max(-ch[t], ch[t] - s.charge_max), s.id))
            if dis[t] < -tol or dis[t] > s.discharge_max + tol:
                out.append(Violation("storage_discharge_limit", t + 1, max(-dis[t], dis[t] - s.discharge_max), s.id))
            if ch[t] > tol and dis[t] > tol:
                out.append(Violation("storage_mode", t + 1, min(ch[t], dis[t]), s.id))
            expect = prev + s.charge_eff * ch[t] - dis[t] / s.discharge_eff
            if abs(soc[t] - expect) > scale(expect):
                out.append(Violation("storage_soc_balance", t + 1, abs(soc[t] - expect), s.id))
            if soc[t] < s.soc_min - tol or soc[t] > s.soc_max + tol:
                out.append(Violation("storage_soc_limit", t + 1, max(s.soc_min - soc[t], soc[t] - s.soc_max), s.id))
            prev = soc[t]
        if T and soc[T - 1] < s.initial_soc - tol:
            out.append(Violation("storage_terminal_soc", T, s.initial_soc - soc[T - 1], s.id))

    # adjustable loads
    for a in spec.adjustable_loads:
        d, z = sched.adjustable_power[a.id], sched.adjustable_on[a.id]
        _check_binary(out, "adjustable_on_binary", z, a.id, tol)
        lo, hi = a.start - 1, a.end - 1
        for t in range(T):
            zi = round(z[t])
            if t < lo or t > hi:
                if abs(d[t]) > tol or zi:
                    out.append(Violation("adjustable_window", t + 1, abs(d[t]), a.id))
                continue
            if d[t] < a.d_min * zi - tol or d[t] > a.d_max * zi + tol:
                out.append(Violation("adjustable_limit", t + 1, max(a.d_min * zi - d[t], d[t] - a.d_max * zi), a.id))
            if t > lo:
                if round(z[t - 1]) and d[t] - d[t - 1] > a.pickup_rate + tol:
                    out.append(Violation("adjustable_pickup", t + 1, d[t] - d[t - 1] - a.pickup_rate, a.id))
                if zi and d[t - 1] - d[t] > a.drop_rate + tol:
                    out.append(Violation("adjustable_drop", t + 1, d[t - 1] - d[t] - a.drop_rate, a.id))
        energy = sum(d)
        if abs(energy - a.required_energy) > scale(a.required_energy):
            out.append(Violation("adjustable_energy", None, abs(energy - a.required_energy), a.id))
        # minimum operating time, truncated at the window end
        for t in range(lo, hi + 1):
            started = round(z[t]) == 1 and (t == lo or round(z[t - 1]) == 0)
            if started:
                for k in range(t, min(hi + 1, t + a.min_operating_time)):
                    if round(z[k]) != 1:
                        out.append(Violation("adjustable_min_on", k + 1, 1.0, a.id))
                        break

    # deviation bookkeeping
    if sched.mode == "market":
        _check_binary(out, "deviation_indicator_binary", sched.deviation_flag, None, tol)
        for t in range(T):
            dp, pos, flag = sched.deviation[t], sched.deviation_pos[t], round(sched.deviation_flag[t])
            expect = sched.grid[t] - sched.assigned[t]
            if abs(dp - expect) > scale(expect):
                out.append(Violation("deviation_definition", t + 1, abs(dp - expect)))
            if flag == 1:
                if dp < DEVIATION_EPS - tol:
                    out.append(Violation("deviation_indicator", t + 1, DEVIATION_EPS - dp))
                if abs(pos - dp) > tol:
                    out.append(Violation("positive_deviation", t + 1, abs(pos - dp)))
            else:
                if dp > tol:
                    out.append(Violation("deviation_indicator", t + 1, dp))
                if abs(pos) > tol:
                    out.append(Violation("positive_deviation", t + 1, abs(pos)))
    else:
        for name in ("assigned", "deviation", "deviation_pos", "deviation_flag"):
            bad = [t for t, v in enumerate(getattr(sched, name)) if abs(v) > tol]
            for t in bad:
                out.append(Violation(f"price_mode_{name}", t + 1, abs(getattr(sched, name)[t])))

    # reported costs
    op, curt, dev, energy = schedule_costs(spec, sched)
    for name, got, want in (("cost_operation", sched.cost_operation, op),
                            ("cost_curtailment", sched.cost_curtailment, curt),
                            ("cost_deviation", sched.cost_deviation, dev),
                            ("cost_energy", sched.cost_energy, energy)):
        if abs(got - want) > 1e-6 * max(1.0, abs(want)):
            out.append(Violation(name, None, abs(got - want)))
    return out


# ---------------------------------------------------------------------------
# scenario files

UNIT_COLS = ["id", "pmin", "pmax", "cost", "noload", "startup", "shutdown", "ur", "dr", "minup", "mindown",
             "init_on", "init_p"]
FILES = {
    "buses.csv": ["id"],
    "lines.csv": ["id", "from", "to", "x", "limit"],
    "units.csv": ["id", "bus"] + UNIT_COLS[1:],
    "microgrids.csv": ["id", "voll", "tie_limit"],
    "mg_units.csv": ["microgrid"] + UNIT_COLS,
    "mg_storage.csv": ["microgrid", "id", "charge_max", "discharge_max", "capacity", "soc_min", "soc_max",
                       "charge_eff", "discharge_eff", "init_soc"],
    "mg_adjustable.csv": ["microgrid", "id", "dmin", "dmax", "energy", "start", "end", "min_on", "pickup", "drop"],
    "profiles.csv": ["entity", "hour", "value"],
}


def _read_csv(root, name):
    path = os.path.join(root, name)
    if not os.path.exists(path):
        raise ScenarioError(f"{name}: file is missing")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in FILES[name] if c not in header]
        if missing:
            raise ScenarioError(f"{name}: missing mandatory columns {missing}")
        return [(i + 2, {k: (v or "").strip() for k, v in row.items()}) for i, row in enumerate(reader)]


def _num(x):
    return float(x)


def _bool(x):
    low = x.lower()
    if low in ("1", "true", "yes"):
        return True
    if low in ("0", "false", "no"):
        return False
    raise ValueError(f"not a boolean: {x!r}")


def _row(name, lineno, fn):
    try:
        return fn()
    except ScenarioError as exc:
        raise ScenarioError(f"{name}, row {lineno}: {exc}") from exc
    except (ValueError, KeyError, TypeError) as exc:
        raise ScenarioError(f"{name}, row {lineno}: malformed value ({exc})") from exc


def _unit_kwargs(r):
    return dict(id=r["id"], p_min=_num(r["pmin"]), p_max=_num(r["pmax"]), marginal_cost=_num(r["cost"]),
                no_load_cost=_num(r["noload"]), startup_cost=_num(r["startup"]),
                shutdown_cost=_num(r["shutdown"]), ramp_up=_num(r["ur"]), ramp_down=_num(r["dr"]),
                min_up=int(r["minup"]), min_down=int(r["mindown"]), initial_on=_bool(r["init_on"]),
                initial_power=_num(r["init_p"]))


def load_scenario(path) -> Scenario:
    """Load and validate a scenario directory (``scenario.toml`` plus CSV tables)."""
    toml_path = os.path.join(path, "scenario.toml")
    if not os.path.exists(toml_path):
        raise ScenarioError("scenario.toml: file is missing")
    try:
        with open(toml_path, "rb") as fh:
            meta = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"scenario.toml: {exc}") from exc
    for key in ("horizon", "dmo_bus", "reference_bus"):
        if key not in meta:
            raise ScenarioError(f"scenario.toml: missing key {key!r}")
    T = int(meta["horizon"])
    if T < 1:
        raise ScenarioError("scenario.toml: horizon must be positive")
    try:
        config = ScenarioConfig(
            dmo_bus=str(meta["dmo_bus"]),
            horizon=T,
            mode=meta.get("mode", "both"),
            penalty_multipliers=meta.get("penalty_multipliers", (1.0, 2.0, 5.0)),
            penalty_mode=meta.get("penalty_mode", "positive_only"),
            islanding=[(d["microgrid"], d["hour"]) for d in meta.get("islanding", [])],
            load_spike=[(d["hour"], d["multiplier"]) for d in meta.get("load_spike", [])],
            output_dir=meta.get("output_dir", "out"),
            seed=int(meta.get("seed", 0)),
            voll=float(meta.get("voll", 1000.0)),
            reserve_margin=float(meta.get("reserve_margin", 0.0)),
        )
    except ScenarioError as exc:
        raise ScenarioError(f"scenario.toml: {exc}") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"scenario.toml: malformed entry ({exc})") from exc

    buses = [r["id"] for _, r in _read_csv(path, "buses.csv")]
    lines = [_row("lines.csv", n, lambda r=r: Line(r["id"], r["from"], r["to"], _num(r["x"]), _num(r["limit"])))
             for n, r in _read_csv(path, "lines.csv")]
    units = [_row("units.csv", n, lambda r=r: GenUnit(bus=r["bus"], **_unit_kwargs(r)))
             for n, r in _read_csv(path, "units.csv")]

    profiles: dict[str, list] = {}
    for n, r in _read_csv(path, "profiles.csv"):
        def put(r=r):
            h = int(r["hour"])
            if not 1 <= h <= T:
                raise ScenarioError(f"hour must lie in 1..{T}")
            vec = profiles.setdefault(r["entity"], [None] * T)
            if vec[h - 1] is not None:
                raise ScenarioError(f"duplicate entry for {r['entity']} hour {h}")
            vec[h - 1] = _num(r["value"])
        _row("profiles.csv", n, put)
    for entity, vec in profiles.items():
        if None in vec:
            raise ScenarioError(f"profiles.csv: {entity} is missing hour {vec.index(None) + 1}")

    def profile(kind, key, default=None):
        vec = profiles.pop(f"{kind}:{key}", None)
        if vec is None:
            if default is None:
                raise ScenarioError(f"profiles.csv: missing profile {kind}:{key}")
            return [default] * T
        return vec

    loads = {}
    for b in buses:
        if f"load:{b}" in profiles:
            loads[b] = profile("load", b)
    try:
        network = TransmissionNetwork(buses, lines, str(meta["reference_bus"]),
                                      float(meta.get("base_power", 100.0)), loads)
    except ScenarioError as exc:
        raise ScenarioError(f"network: {exc}") from exc
    for u in units:
        if u.bus not in buses:
            raise ScenarioError(f"units.csv: unit {u.id} sits at unknown bus {u.bus}")
    if config.dmo_bus not in buses:
        raise ScenarioError(f"scenario.toml: dmo_bus {config.dmo_bus} does not exist")

    mg_rows = _read_csv(path, "microgrids.csv")
    assets = {r["id"]: {"units": [], "storage": [], "adjustable": []} for _, r in mg_rows}

    def owner(name, r):
        if r["microgrid"] not in assets:
            raise ScenarioError(f"unknown microgrid {r['microgrid']}")
        return assets[r["microgrid"]]

    for n, r in _read_csv(path, "mg_units.csv"):
        _row("mg_units.csv", n, lambda r=r: owner("mg_units.csv", r)["units"].append(
            DispatchableUnit(**_unit_kwargs(r))))
    for n, r in _read_csv(path, "mg_storage.csv"):
        _row("mg_storage.csv", n, lambda r=r: owner("mg_storage.csv", r)["storage"].append(StorageUnit(
            r["id"], _num(r["charge_max"]), _num(r["discharge_max"]), _num(r["capacity"]), _num(r["soc_min"]),
            _num(r["soc_max"]), _num(r["charge_eff"]), _num(r["discharge_eff"]), _num(r["init_soc"]))))
    for n, r in _read_csv(path, "mg_adjustable.csv"):
        _row("mg_adjustable.csv", n, lambda r=r: owner("mg_adjustable.csv", r)["adjustable"].append(AdjustableLoad(
            r["id"], _num(r["dmin"]), _num(r["dmax"]), _num(r["energy"]), int(r["start"]), int(r["end"]),
            int(r["min_on"]), _num(r["pickup"]), _num(r["drop"]))))

    microgrids = []
    for n, r in mg_rows:
        a = assets[r["id"]]

        def build(r=r, a=a):
            return MicrogridSpec(
                id=r["id"], fixed_load=profile("fixed", r["id"]), units=a["units"], storage=a["storage"],
                adjustable_loads=a["adjustable"], nondispatchable_gen=profile("renewable", r["id"], 0.0),
                voll=_num(r["voll"]), tie_limit=_num(r["tie_limit"]),
                islanding=[int(u) for u in profile("island", r["id"], 1.0)])
        microgrids.append(_row("microgrids.csv", n, build))
    known = {m.id for m in microgrids}
    for m, _ in config.islanding:
        if m not in known:
            raise ScenarioError(f"scenario.toml: islanding override names unknown microgrid {m}")
    if profiles:
        raise ScenarioError(f"profiles.csv: unknown entities {sorted(profiles)}")
    return Scenario(network, units, microgrids, config)


def _fmt(x):
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(x)
    return str(x)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _unit_row(u):
    return [u.id, u.p_min, u.p_max, u.marginal_cost, u.no_load_cost, u.startup_cost, u.shutdown_cost,
            u.ramp_up, u.ramp_down, u.min_up, u.min_down, u.initial_on, u.initial_power]


def save_scenario(scenario: Scenario, path):
    """Write ``scenario`` in the directory format read by :func:`load_scenario`."""
    net, units, mgs, cfg = scenario
    os.makedirs(path, exist_ok=True)
    meta = {
        "horizon": cfg.horizon, "dmo_bus": cfg.dmo_bus, "reference_bus": net.reference_bus,
        "base_power": net.base_power, "voll": cfg.voll, "mode": cfg.mode,
        "penalty_multipliers": list(cfg.penalty_multipliers), "penalty_mode": cfg.penalty_mode,
        "reserve_margin": cfg.reserve_margin, "seed": cfg.seed, "output_dir": cfg.output_dir,
        "load_spike": [{"hour": h, "multiplier": k} for h, k in cfg.load_spike],
        "islanding": [{"microgrid": m, "hour": h} for m, h in cfg.islanding],
    }
    with open(os.path.join(path, "scenario.toml"), "wb") as fh:
        tomli_w.dump(meta, fh)
    _write_csv(os.path.join(path, "buses.csv"), FILES["buses.csv"], [[b] for b in net.buses])
    _write_csv(os.path.join(path, "lines.csv"), FILES["lines.csv"],
               [[ln.id, ln.from_bus, ln.to_bus, ln.reactance, ln.limit] for ln in net.lines])
    _write_csv(os.path.join(path, "units.csv"), FILES["units.csv"],
               [[u.id, u.bus] + _unit_row(u)[1:] for u in units])
    _write_csv(os.path.join(path, "microgrids.csv"), FILES["microgrids.csv"],
               [[m.id, m.voll, m.tie_limit] for m in mgs])
    _write_csv(os.path.join(path, "mg_units.csv"), FILES["mg_units.csv"],
               [[m.id] + _unit_row(u) for m in mgs for u in m.units])
    _write_csv(os.path.join(path, "mg_storage.csv"), FILES["mg_storage.csv"],
               [[m.id, s.id, s.charge_max, s.discharge_max, s.energy_capacity, s.soc_min, s.soc_max,
                 s.charge_eff, s.discharge_eff, s.initial_soc] for m in mgs for s in m.storage])
    _write_csv(os.path.join(path, "mg_adjustable.csv"), FILES["mg_adjustable.csv"],
               [[m.id, a.id, a.d_min, a.d_max, a.required_energy, a.start, a.end, a.min_operating_time,
                 a.pickup_rate, a.drop_rate] for m in mgs for a in m.adjustable_loads])
    rows = []
    for b, vec in net.loads.items():
        rows += [[f"load:{b}", h + 1, v] for h, v in enumerate(vec)]
    for m in mgs:
        rows += [[f"fixed:{m.id}", h + 1, v] for h, v in enumerate(m.fixed_load)]
        if any(m.nondispatchable_gen):
            rows += [[f"renewable:{m.id}", h + 1, v] for h, v in enumerate(m.nondispatchable_gen)]
        if not all(m.islanding):
            rows += [[f"island:{m.id}", h + 1, v] for h, v in enumerate(m.islanding)]
    _write_csv(os.path.join(path, "profiles.csv"), FILES["profiles.csv"], rows)
