"""Constraint blocks for dispatchable units, storage and adjustable loads.

Each ``add_*`` function creates the hourly variables of one asset in an
existing LinearProgram, adds its operating constraints and objective terms,
and returns the variable ids so callers can tie them into balance rows.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass
class UnitVars:
    power: list
    on: list
    startup: list
    shutdown: list


@dataclass
class StorageVars:
    charge: list
    discharge: list
    soc: list
    mode: list


@dataclass
class AdjustableVars:
    power: list
    on: list
    start: list


def add_unit_block(lp, unit, horizon, prefix=""):
    """Commitment and dispatch of one unit with cost c*P + no_load*I + startup/shutdown costs.

    Startup/shutdown indicators are continuous; with binary commitment the
    transition equation and the min up/down rows pin them to 0/1.
    """
    tag = f"{prefix}{unit.id}"
    T = horizon
    P = [lp.add_var(0.0, unit.p_max, obj=unit.marginal_cost, name=f"P_{tag}_{t + 1}") for t in range(T)]
    I = [lp.add_var(kind="binary", obj=unit.no_load_cost, name=f"I_{tag}_{t + 1}") for t in range(T)]
    su = [lp.add_var(0.0, 1.0, obj=unit.startup_cost, name=f"su_{tag}_{t + 1}") for t in range(T)]
    sd = [lp.add_var(0.0, 1.0, obj=unit.shutdown_cost, name=f"sd_{tag}_{t + 1}") for t in range(T)]
    i0 = 1.0 if unit.initial_on else 0.0
    for t in range(T):
        lp.add_constraint([(P[t], 1.0), (I[t], -unit.p_max)], "le", 0.0, f"pmax_{tag}_{t + 1}")
        lp.add_constraint([(P[t], 1.0), (I[t], -unit.p_min)], "ge", 0.0, f"pmin_{tag}_{t + 1}")
        if t == 0:
            lp.add_constraint([(su[0], 1.0), (sd[0], -1.0), (I[0], -1.0)], "eq", -i0, f"trans_{tag}_1")
        else:
            lp.add_constraint([(su[t], 1.0), (sd[t], -1.0), (I[t], -1.0), (I[t - 1], 1.0)], "eq", 0.0,
                              f"trans_{tag}_{t + 1}")
        window = range(max(0, t - unit.min_up + 1), t + 1)
        lp.add_constraint([(su[k], 1.0) for k in window] + [(I[t], -1.0)], "le", 0.0, f"minup_{tag}_{t + 1}")
        window = range(max(0, t - unit.min_down + 1), t + 1)
        lp.add_constraint([(sd[k], 1.0) for k in window] + [(I[t], 1.0)], "le", 1.0, f"mindn_{tag}_{t + 1}")
        if unit.ramp_up < unit.p_max:
            if t == 0:
                if unit.initial_on:
                    lp.add_constraint([(P[0], 1.0)], "le", unit.initial_power + unit.ramp_up, f"rup_{tag}_1")
            else:
                lp.add_constraint([(P[t], 1.0), (P[t - 1], -1.0), (I[t - 1], unit.p_max - unit.ramp_up)],
                                  "le", unit.p_max, f"rup_{tag}_{t + 1}")
        if unit.ramp_down < unit.p_max:
            if t == 0:
                lp.add_constraint([(P[0], -1.0), (I[0], unit.p_max - unit.ramp_down)], "le",
                                  unit.p_max - unit.initial_power, f"rdn_{tag}_1")
            else:
                lp.add_constraint([(P[t - 1], 1.0), (P[t], -1.0), (I[t], unit.p_max - unit.ramp_down)],
                                  "le", unit.p_max, f"rdn_{tag}_{t + 1}")
    return UnitVars(P, I, su, sd)


def add_storage_block(lp, store, horizon, prefix=""):
    """Charge/discharge with a binary mode selector and the SOC recursion.

    The end-of-horizon SOC may not fall below the initial SOC.
    """
    tag = f"{prefix}{store.id}"
    T = horizon
    ch = [lp.add_var(0.0, store.charge_max, name=f"ch_{tag}_{t + 1}") for t in range(T)]
    dis = [lp.add_var(0.0, store.discharge_max, name=f"dis_{tag}_{t + 1}") for t in range(T)]
    soc = [lp.add_var(store.soc_min, store.soc_max, name=f"soc_{tag}_{t + 1}") for t in range(T)]
    mode = [lp.add_var(kind="binary", name=f"chmode_{tag}_{t + 1}", priority=-1) for t in range(T)]
    for t in range(T):
        lp.add_constraint([(ch[t], 1.0), (mode[t], -store.charge_max)], "le", 0.0, f"chlim_{tag}_{t + 1}")
        lp.add_constraint([(dis[t], 1.0), (mode[t], store.discharge_max)], "le", store.discharge_max,
                          f"dislim_{tag}_{t + 1}")
        terms = [(soc[t], 1.0), (ch[t], -store.charge_eff), (dis[t], 1.0 / store.discharge_eff)]
        if t == 0:
            lp.add_constraint(terms, "eq", store.initial_soc, f"soc_{tag}_1")
        else:
            lp.add_constraint(terms + [(soc[t - 1], -1.0)], "eq", 0.0, f"soc_{tag}_{t + 1}")
    if T:
        lp.add_constraint([(soc[-1], 1.0)], "ge", store.initial_soc, f"socend_{tag}")
    return StorageVars(ch, dis, soc, mode)


def add_adjustable_block(lp, load, horizon, prefix=""):
    """Energy-constrained load inside its window, with min operating time and pickup/drop rates."""
    tag = f"{prefix}{load.id}"
    T = horizon
    lo, hi = load.start - 1, load.end - 1
    inside = [lo <= t <= hi for t in range(T)]
    d = [lp.add_var(0.0, load.d_max if inside[t] else 0.0, name=f"d_{tag}_{t + 1}") for t in range(T)]
    z = [lp.add_var(0.0, 1.0 if inside[t] else 0.0, kind="binary", name=f"z_{tag}_{t + 1}") for t in range(T)]
    y = [lp.add_var(0.0, 1.0 if inside[t] else 0.0, name=f"y_{tag}_{t + 1}") for t in range(T)]
    lp.add_constraint([(d[t], 1.0) for t in range(lo, hi + 1)], "eq", load.required_energy, f"energy_{tag}")
    for t in range(lo, hi + 1):
        lp.add_constraint([(d[t], 1.0), (z[t], -load.d_max)], "le", 0.0, f"dmax_{tag}_{t + 1}")
        lp.add_constraint([(d[t], 1.0), (z[t], -load.d_min)], "ge", 0.0, f"dmin_{tag}_{t + 1}")
        if t == lo:
            lp.add_constraint([(y[t], 1.0), (z[t], -1.0)], "ge", 0.0, f"start_{tag}_{t + 1}")
        else:
            lp.add_constraint([(y[t], 1.0), (z[t], -1.0), (z[t - 1], 1.0)], "ge", 0.0, f"start_{tag}_{t + 1}")
        window = range(max(lo, t - load.min_operating_time + 1), t + 1)
        lp.add_constraint([(y[k], 1.0) for k in window] + [(z[t], -1.0)], "le", 0.0, f"minon_{tag}_{t + 1}")
        if t > lo:
            big = load.d_max
            if load.pickup_rate < big:
                lp.add_constraint([(d[t], 1.0), (d[t - 1], -1.0), (z[t - 1], big - load.pickup_rate)], "le",
                                  big, f"pickup_{tag}_{t + 1}")
            if load.drop_rate < big:
                lp.add_constraint([(d[t - 1], 1.0), (d[t], -1.0), (z[t], big - load.drop_rate)], "le", big,
                                  f"drop_{tag}_{t + 1}")
    return AdjustableVars(d, z, y)
