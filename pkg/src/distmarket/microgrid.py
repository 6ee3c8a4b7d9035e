"""Day-ahead scheduling of a single microgrid, and its demand bid.

Two schedulers share one model skeleton:

* market-based: the DMO assigns an hourly import ``assigned``; importing more
  than that is penalized hour by hour (only the positive part, or the
  absolute deviation in ``"absolute"`` mode), and the import itself carries
  no price in the objective;
* price-based: the import is bought at hourly prices and may be negative
  (export, credited at the same price).
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InfeasibleError
from .formulation import add_adjustable_block, add_storage_block, add_unit_block
from .market_core import DEVIATION_EPS, DemandBid, MicrogridSchedule, Segment
from .opt_kernel import LinearProgram, solve_mip

PENALTY_MODES = ("positive_only", "absolute")


@dataclass
class _Skeleton:
    lp: LinearProgram
    grid: list
    curtailment: list
    units: dict
    storage: dict
    adjustable: dict
    deviation: list = None
    deviation_pos: list = None
    deviation_flag: list = None


def _grid_bounds(spec):
    """Physically reachable import/export per hour, clipped to the tie-line limit."""
    imp, exp = [], []
    for t in range(spec.horizon):
        load = max(0.0, spec.net_fixed_load[t]) + sum(a.d_max for a in spec.adjustable_loads)
        load += sum(s.charge_max for s in spec.storage)
        gen = sum(u.p_max for u in spec.units) + sum(s.discharge_max for s in spec.storage)
        u = spec.islanding[t]
        imp.append(min(spec.tie_limit, load) * u)
        exp.append(min(spec.tie_limit, gen) * u)
    return imp, exp


def _skeleton(spec, name):
    T = spec.horizon
    lp = LinearProgram("minimize", name)
    units = {u.id: add_unit_block(lp, u, T, f"{spec.id}_") for u in spec.units}
    storage = {s.id: add_storage_block(lp, s, T, f"{spec.id}_") for s in spec.storage}
    adjustable = {a.id: add_adjustable_block(lp, a, T, f"{spec.id}_") for a in spec.adjustable_loads}
    imp, exp = _grid_bounds(spec)
    grid = [lp.add_var(-exp[t], imp[t], name=f"PM_{spec.id}_{t + 1}") for t in range(T)]
    ls = [lp.add_var(0.0, name=f"LS_{spec.id}_{t + 1}", obj=spec.voll) for t in range(T)]
    for t in range(T):
        terms = [(grid[t], 1.0), (ls[t], 1.0)]
        terms += [(v.power[t], 1.0) for v in units.values()]
        terms += [(v.discharge[t], 1.0) for v in storage.values()]
        terms += [(v.charge[t], -1.0) for v in storage.values()]
        terms += [(v.power[t], -1.0) for v in adjustable.values()]
        lp.add_constraint(terms, "eq", spec.net_fixed_load[t], f"balance_{spec.id}_{t + 1}")
        # curtailment can only shed load that exists
        lp.add_constraint([(ls[t], 1.0)] + [(v.power[t], -1.0) for v in adjustable.values()], "le",
                          max(0.0, spec.net_fixed_load[t]), f"lscap_{spec.id}_{t + 1}")
    return _Skeleton(lp, grid, ls, units, storage, adjustable)


def _solve(sk, spec):
    sol = solve_mip(sk.lp)
    if sol.status == "infeasible":
        raise InfeasibleError(f"microgrid {spec.id}: scheduling problem is infeasible")
    return sol


def _vec(values, ids):
    return tuple(values[i] for i in ids)


def _bin(values, ids):
    return tuple(float(round(values[i])) for i in ids)


def _fill(sched_kwargs, sk, spec, x):
    T = spec.horizon
    grid = [0.0 if spec.islanding[t] == 0 else x[sk.grid[t]] for t in range(T)]
    sched_kwargs.update(
        microgrid=spec.id,
        grid=tuple(grid),
        curtailment=_vec(x, sk.curtailment),
        unit_power={k: _vec(x, v.power) for k, v in sk.units.items()},
        unit_on={k: _bin(x, v.on) for k, v in sk.units.items()},
        storage_charge={k: _vec(x, v.charge) for k, v in sk.storage.items()},
        storage_discharge={k: _vec(x, v.discharge) for k, v in sk.storage.items()},
        soc={k: _vec(x, v.soc) for k, v in sk.storage.items()},
        adjustable_power={k: _vec(x, v.power) for k, v in sk.adjustable.items()},
        adjustable_on={k: _bin(x, v.on) for k, v in sk.adjustable.items()},
    )
    op = 0.0
    for u in spec.units:
        v = sk.units[u.id]
        op += sum(u.marginal_cost * x[p] + u.no_load_cost * round(x[i]) + u.startup_cost * x[s]
                  + u.shutdown_cost * x[d] for p, i, s, d in zip(v.power, v.on, v.startup, v.shutdown))
    sched_kwargs["cost_operation"] = op
    sched_kwargs["cost_curtailment"] = spec.voll * sum(sched_kwargs["curtailment"])
    return sched_kwargs


def market_model(spec, assigned, penalty_mode="positive_only", eps=DEVIATION_EPS):
    """Market-mode MILP (unsolved).  The hourly penalty price is ``spec.deviation_penalty``."""
    if penalty_mode not in PENALTY_MODES:
        raise ValueError(f"penalty_mode must be one of {PENALTY_MODES}")
    T = spec.horizon
    assigned = tuple(float(a) for a in assigned)
    if len(assigned) != T:
        raise ValueError(f"assigned power needs {T} entries, got {len(assigned)}")
    sk = _skeleton(spec, f"market_{spec.id}")
    lp = sk.lp
    imp, exp = _grid_bounds(spec)
    dev, pos, flag, neg = [], [], [], []
    for t in range(T):
        pen = spec.deviation_penalty[t]
        # the indicator big-M must cover exports down to -export - assigned
        big = max(imp[t], exp[t]) + abs(assigned[t]) + 1.0
        d = lp.add_var(-float("inf"), float("inf"), name=f"dP_{spec.id}_{t + 1}")
        p = lp.add_var(0.0, obj=pen, name=f"dPpos_{spec.id}_{t + 1}")
        f = lp.add_var(kind="binary", name=f"delta_{spec.id}_{t + 1}", priority=-1)
        lp.add_constraint([(d, 1.0), (sk.grid[t], -1.0)], "eq", -assigned[t], f"dev_{spec.id}_{t + 1}")
        lp.add_constraint([(p, 1.0), (f, -big)], "le", 0.0, f"devpos_ub_{spec.id}_{t + 1}")
        lp.add_constraint([(d, 1.0), (p, -1.0), (f, big)], "le", big, f"devlink_ub_{spec.id}_{t + 1}")
        lp.add_constraint([(d, 1.0), (p, -1.0), (f, -big)], "ge", -big, f"devlink_lb_{spec.id}_{t + 1}")
        lp.add_constraint([(d, 1.0), (f, -big)], "ge", eps - big, f"devflag_lb_{spec.id}_{t + 1}")
        lp.add_constraint([(d, 1.0), (f, -big)], "le", 0.0, f"devflag_ub_{spec.id}_{t + 1}")
        # valid for every integer solution; keeps the relaxation close to max(0, dP)
        lp.add_constraint([(p, 1.0), (d, -1.0)], "ge", 0.0, f"devpos_tight_{spec.id}_{t + 1}")
        if penalty_mode == "absolute":
            n = lp.add_var(0.0, obj=pen, name=f"dPneg_{spec.id}_{t + 1}")
            lp.add_constraint([(d, 1.0), (p, -1.0), (n, 1.0)], "eq", 0.0, f"devneg_{spec.id}_{t + 1}")
            neg.append(n)
        dev.append(d), pos.append(p), flag.append(f)
    sk.deviation, sk.deviation_pos, sk.deviation_flag = dev, pos, flag
    return sk


def build_market_schedule(spec, assigned, penalty_mode="positive_only", eps=DEVIATION_EPS):
    """Least-cost schedule that follows the DMO-assigned import ``assigned``.

    The hourly penalty price is ``spec.deviation_penalty``.  An indicator
    binary per hour separates positive deviations (at least ``eps`` MW,
    penalized) from non-positive ones.
    """
    sk = market_model(spec, assigned, penalty_mode, eps)
    T = spec.horizon
    assigned = tuple(float(a) for a in assigned)
    pos, flag = sk.deviation_pos, sk.deviation_flag
    x = _solve(sk, spec).values
    kw = _fill({}, sk, spec, x)
    grid = kw["grid"]
    deviation = tuple(grid[t] - assigned[t] for t in range(T))
    flags = _bin(x, flag)
    positive = tuple(x[pos[t]] if flags[t] else 0.0 for t in range(T))
    pen = spec.deviation_penalty
    cost_dev = sum(pen[t] * positive[t] for t in range(T))
    if penalty_mode == "absolute":
        cost_dev += sum(pen[t] * max(0.0, -deviation[t]) for t in range(T))
    return MicrogridSchedule(
        mode="market", assigned=assigned, deviation=deviation, deviation_pos=positive,
        deviation_flag=flags, penalty=tuple(pen), penalty_mode=penalty_mode, cost_deviation=cost_dev, **kw)


def price_model(spec, prices):
    """Price-mode MILP (unsolved): grid energy is bought, or sold, at ``prices``."""
    T = spec.horizon
    prices = tuple(float(p) for p in prices)
    if len(prices) != T:
        raise ValueError(f"prices need {T} entries, got {len(prices)}")
    sk = _skeleton(spec, f"price_{spec.id}")
    lp = sk.lp
    imp, exp = _grid_bounds(spec)
    for t in range(T):
        lp.add_objective(sk.grid[t], prices[t])
        if prices[t] >= spec.voll and spec.islanding[t]:
            # at prices above VOLL, shedding load to export would pay; only allow curtailment while importing
            w = lp.add_var(kind="binary", name=f"import_{spec.id}_{t + 1}")
            cap = max(0.0, spec.net_fixed_load[t]) + sum(a.d_max for a in spec.adjustable_loads)
            lp.add_constraint([(sk.grid[t], 1.0), (w, -exp[t])], "ge", -exp[t], f"export_{spec.id}_{t + 1}")
            lp.add_constraint([(sk.curtailment[t], 1.0), (w, -cap)], "le", 0.0, f"lsimport_{spec.id}_{t + 1}")
    return sk


def build_price_schedule(spec, prices):
    """Least-cost schedule when grid energy is bought (or sold) at ``prices``."""
    T = spec.horizon
    prices = tuple(float(p) for p in prices)
    sk = price_model(spec, prices)
    x = _solve(sk, spec).values
    kw = _fill({}, sk, spec, x)
    zeros = (0.0,) * T
    return MicrogridSchedule(
        mode="price", assigned=zeros, deviation=zeros, deviation_pos=zeros, deviation_flag=zeros,
        prices=prices, cost_energy=sum(p * g for p, g in zip(prices, kw["grid"])), **kw)


def build_demand_bid(spec, cap_to_load=True):
    """Staircase bid built from the capacity and marginal cost of the dispatchable units.

    Every unit contributes one segment priced at its marginal cost, listed in
    nonincreasing price order; adjacent equal-price segments are merged.

    With ``cap_to_load`` (default) each hour's bid never exceeds the
    microgrid's forecast net load: units are stacked in merit order against
    the load and a unit only bids the part of the load it would otherwise
    serve; the remainder is the price-insensitive block.  When the load is at
    least the total unit capacity every unit bids its full ``p_max``.  With
    ``cap_to_load=False`` widths are always ``p_max`` and the fixed block is
    the whole forecast net load.  Islanded hours bid nothing.
    """
    T = spec.horizon
    load = [max(0.0, x) * u for x, u in zip(spec.forecast_load(), spec.islanding)]
    order = sorted(range(len(spec.units)), key=lambda k: (spec.units[k].marginal_cost, k))
    fixed, segments = [], []
    for t in range(T):
        widths = {}
        covered = 0.0
        for k in order:
            u = spec.units[k]
            if not spec.islanding[t]:
                w = 0.0
            elif cap_to_load:
                w = min(u.p_max, max(0.0, load[t] - covered))
            else:
                w = u.p_max
            covered += w
            widths[k] = w
        flex = sum(widths.values()) if cap_to_load else 0.0
        fixed.append(load[t] - flex)
        ranked = sorted((k for k in widths if widths[k] > 0),
                        key=lambda k: (-spec.units[k].marginal_cost, k))
        merged = []
        for k in ranked:
            price = spec.units[k].marginal_cost
            if merged and merged[-1][0] == price:
                merged[-1][1] += widths[k]
            else:
                merged.append([price, widths[k]])
        segments.append(tuple(Segment(p, w) for p, w in merged))
    return DemandBid(spec.id, tuple(fixed), tuple(segments))
