"""Independent reference solutions and random instance generators for the tests."""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import linprog

from distmarket.market_core import (AdjustableLoad, DemandBid, DispatchableUnit, MicrogridSpec, Segment,
                                    StorageUnit)

INF = math.inf


# ---------------------------------------------------------------------------
# LP / MIP oracles


def _dense(model, fixed=None):
    n = len(model.variables)
    c = np.array([v.obj for v in model.variables], dtype=float)
    if model.sense == "maximize":
        c = -c
    lb = np.array([v.lower for v in model.variables], dtype=float)
    ub = np.array([v.upper for v in model.variables], dtype=float)
    for vid, val in (fixed or {}).items():
        lb[vid] = ub[vid] = val
    a_ub, b_ub, a_eq, b_eq = [], [], [], []
    for con in model.constraints:
        row = np.zeros(n)
        for vid, a in con.terms:
            row[vid] = a
        if con.sense == "eq":
            a_eq.append(row), b_eq.append(con.rhs)
        elif con.sense == "le":
            a_ub.append(row), b_ub.append(con.rhs)
        else:
            a_ub.append(-row), b_ub.append(-con.rhs)
    return c, lb, ub, a_ub, b_ub, a_eq, b_eq


def _leaf(c, lb, ub, a_ub, b_ub, a_eq, b_eq, sense):
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=np.column_stack((lb, ub)),
                  method="highs")
    if res.status != 0:
        return None
    return -res.fun if sense == "maximize" else res.fun


def _arrays(model, fixed=None):
    c, lb, ub, a_ub, b_ub, a_eq, b_eq = _dense(model, fixed)
    return (c, lb, ub, np.array(a_ub) if a_ub else None, np.array(b_ub) if b_ub else None,
            np.array(a_eq) if a_eq else None, np.array(b_eq) if b_eq else None)


def leaf_lp(model, fixed):
    """Solve the LP with the given binaries fixed, straight through scipy; None if infeasible."""
    return _leaf(*_arrays(model, fixed), model.sense)


def enumerate_mip(model):
    """Best objective over every binary assignment (None if all leaves are infeasible)."""
    c, lb, ub, a_ub, b_ub, a_eq, b_eq = _arrays(model)
    bins = model.binaries
    best = None
    better = (lambda a, b: a > b) if model.sense == "maximize" else (lambda a, b: a < b)
    for combo in itertools.product((0.0, 1.0), repeat=len(bins)):
        lo, hi = lb.copy(), ub.copy()
        lo[bins] = hi[bins] = combo
        obj = _leaf(c, lo, hi, a_ub, b_ub, a_eq, b_eq, model.sense)
        if obj is not None and (best is None or better(obj, best)):
            best = obj
    return best


def vertex_enumeration(c, a_ub, b_ub, bounds, maximize=False):
    """Optimal value of a small LP by trying every basic solution.

    ``bounds`` is a list of (lo, hi) with finite values; all constraints are
    ``a_ub @ x <= b_ub``.
    """
    n = len(c)
    rows = [np.asarray(r, float) for r in a_ub]
    rhs = list(b_ub)
    for j, (lo, hi) in enumerate(bounds):
        e = np.zeros(n)
        e[j] = 1.0
        rows += [e, -e]
        rhs += [hi, -lo]
    A, b = np.array(rows), np.array(rhs)
    best, arg = None, None
    for idx in itertools.combinations(range(len(rows)), n):
        sub = A[list(idx)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        x = np.linalg.solve(sub, b[list(idx)])
        if np.all(A @ x <= b + 1e-9):
            val = float(np.dot(c, x))
            if best is None or (val > best if maximize else val < best):
                best, arg = val, x
    return best, arg


# ---------------------------------------------------------------------------
# DMO oracle


def greedy_fill(award, bids):
    """Fill segments in descending price order; returns total responsive value."""
    T = len(award)
    value = 0.0
    for t in range(T):
        left = award[t] - sum(b.fixed[t] for b in bids)
        for s in sorted((s for b in bids for s in b.segments[t]), key=lambda s: -s.price):
            take = min(s.width, max(0.0, left))
            value += take * s.price
            left -= take
    return value


def random_bids(rng, n_bids, T, price_pool=None):
    bids = []
    for m in range(n_bids):
        fixed = tuple(round(rng.uniform(0, 10), 3) for _ in range(T))
        segs = []
        for _ in range(T):
            k = rng.randint(0, 4)
            if price_pool:
                prices = sorted((rng.choice(price_pool) for _ in range(k)), reverse=True)
            else:
                prices = sorted((round(rng.uniform(10, 90), 2) for _ in range(k)), reverse=True)
            segs.append(tuple(Segment(p, round(rng.uniform(0.5, 6), 3)) for p in prices))
        bids.append(DemandBid(f"MG{m + 1}", fixed, tuple(segs)))
    return bids


# ---------------------------------------------------------------------------
# random microgrids


def random_unit(rng, k):
    p_min = round(rng.uniform(0, 3), 2)
    p_max = round(p_min + rng.uniform(1, 8), 2)
    on = rng.random() < 0.4
    return DispatchableUnit(
        id=f"U{k}", p_min=p_min, p_max=p_max, marginal_cost=round(rng.uniform(15, 90), 2),
        no_load_cost=round(rng.uniform(0, 20), 2), startup_cost=round(rng.uniform(0, 60), 2),
        shutdown_cost=round(rng.uniform(0, 10), 2),
        ramp_up=rng.choice([INF, round(rng.uniform(1, 6), 2)]),
        ramp_down=rng.choice([INF, round(rng.uniform(1, 6), 2)]),
        min_up=rng.randint(1, 3), min_down=rng.randint(1, 3),
        initial_on=on, initial_power=round(rng.uniform(p_min, p_max), 2) if on and p_min > 0 else 0.0)


def random_storage(rng, k):
    cap = round(rng.uniform(2, 10), 2)
    lo = round(rng.uniform(0, 0.2) * cap, 2)
    hi = round(rng.uniform(0.8, 1.0) * cap, 2)
    return StorageUnit(f"S{k}", charge_max=round(rng.uniform(0.5, 3), 2), discharge_max=round(rng.uniform(0.5, 3), 2),
                       energy_capacity=cap, soc_min=lo, soc_max=hi, charge_eff=round(rng.uniform(0.85, 1), 3),
                       discharge_eff=round(rng.uniform(0.85, 1), 3), initial_soc=round(rng.uniform(lo, hi), 2))


def random_adjustable(rng, k, T):
    start = rng.randint(1, T)
    end = rng.randint(start, T)
    hours = end - start + 1
    d_max = round(rng.uniform(1, 4), 2)
    d_min = round(rng.uniform(0, 0.5) * d_max, 2)
    mot = rng.randint(1, hours)
    lo = d_min * mot
    energy = round(rng.uniform(lo, d_max * hours), 2)
    energy = min(max(energy, lo), d_max * hours)
    return AdjustableLoad(f"A{k}", d_min=d_min, d_max=d_max, required_energy=energy, start=start, end=end,
                          min_operating_time=mot, pickup_rate=INF, drop_rate=INF)


def random_spec(rng, T, n_units=1, n_storage=0, n_adjustable=0, island_prob=0.15, penalty=None):
    load = [round(rng.uniform(1, 12), 2) for _ in range(T)]
    renew = [round(rng.uniform(0, 0.5) * d, 2) if rng.random() < 0.5 else 0.0 for d in load]
    isl = [0 if rng.random() < island_prob else 1 for _ in range(T)]
    pen = penalty if penalty is not None else [round(rng.uniform(5, 120), 2) for _ in range(T)]
    return MicrogridSpec(
        id="MG", fixed_load=tuple(load), nondispatchable_gen=tuple(renew),
        units=tuple(random_unit(rng, k + 1) for k in range(n_units)),
        storage=tuple(random_storage(rng, k + 1) for k in range(n_storage)),
        adjustable_loads=tuple(random_adjustable(rng, k + 1, T) for k in range(n_adjustable)),
        voll=rng.choice([200.0, 500.0, 1000.0]), tie_limit=rng.choice([INF, round(rng.uniform(4, 15), 2)]),
        islanding=tuple(isl), deviation_penalty=tuple(pen))


def random_assigned(rng, spec):
    return tuple(round(rng.uniform(0, 1.3) * d, 2) if u else 0.0 for d, u in zip(spec.fixed_load, spec.islanding))
