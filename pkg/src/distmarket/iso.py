"""Independent system operator: welfare-maximizing unit commitment over a
DC network, locational marginal prices, and fixed-commitment redispatch.

Prices are the duals of the nodal balance rows of the fixed-commitment LP,
so ``lmps[b][t]`` is the change in system cost per extra MW of load at bus
``b`` in hour ``t``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

from .errors import InfeasibleError
from .formulation import add_unit_block
from .opt_kernel import LinearProgram, fix_binaries_and_price, solve_mip

BINDING_TOL = 1e-6


@dataclass
class IsoResult:
    commitment: dict
    dispatch: dict
    flows: dict
    angles: dict
    awarded: dict  # bus -> hourly demand served (fixed load + awarded bid segments - shed)
    segment_awards: dict  # bus -> per hour tuple of awarded segment MW
    shed: dict
    surplus: dict
    lmps: dict
    objective: float  # social welfare: bid value - generation cost - slack penalties
    generation_cost: float
    node_count: int = 0
    gap: float = 0.0
    binding: dict = field(default_factory=dict)

    @property
    def shed_any(self):
        return any(x > BINDING_TOL for v in self.shed.values() for x in v)

    @property
    def surplus_any(self):
        return any(x > BINDING_TOL for v in self.surplus.values() for x in v)


@dataclass
class _Model:
    lp: LinearProgram
    units: dict
    theta: dict
    flow: dict
    dx: dict
    shed: dict
    surplus: dict
    balance: dict
    horizon: int


def _horizon(loads):
    lengths = {len(v) for v in loads.values()}
    if len(lengths) != 1:
        raise ValueError("every bus load profile must have the same length")
    return lengths.pop()


def _build(net, units, loads, bids=None, voll=1000.0, allow_surplus=False, reserve_margin=0.0):
    bids = bids or {}
    loads = {b: tuple(loads.get(b, ())) or None for b in net.buses}
    T = _horizon({b: v for b, v in loads.items() if v is not None})
    loads = {b: v or (0.0,) * T for b, v in loads.items()}
    lp = LinearProgram("minimize", "iso")
    uv = {u.id: add_unit_block(lp, u, T, "iso_") for u in units}
    theta, flow, dx, shed, surplus, balance = {}, {}, {}, {}, {}, {}
    for b in net.buses:
        fixed = b == net.reference_bus
        theta[b] = [lp.add_var(0.0 if fixed else -float("inf"), 0.0 if fixed else float("inf"),
                               name=f"theta_{b}_{t + 1}") for t in range(T)]
        shed[b] = [lp.add_var(0.0, max(0.0, loads[b][t]), obj=voll, name=f"shed_{b}_{t + 1}") for t in range(T)]
        surplus[b] = [lp.add_var(0.0, float("inf") if allow_surplus else 0.0, obj=voll, name=f"spill_{b}_{t + 1}")
                      for t in range(T)]
        bid = bids.get(b)
        dx[b] = [[lp.add_var(0.0, s.width, obj=-s.price, name=f"DX_{b}_{k + 1}_{t + 1}")
                  for k, s in enumerate(bid.segments[t])] if bid else [] for t in range(T)]
    for ln in net.lines:
        flow[ln.id] = [lp.add_var(-ln.limit, ln.limit, name=f"PL_{ln.id}_{t + 1}") for t in range(T)]
        susceptance = net.base_power / ln.reactance
        for t in range(T):
            lp.add_constraint([(flow[ln.id][t], 1.0), (theta[ln.from_bus][t], -susceptance),
                               (theta[ln.to_bus][t], susceptance)], "eq", 0.0, f"dcflow_{ln.id}_{t + 1}")
    at_bus = {b: [u for u in units if u.bus == b] for b in net.buses}
    for b in net.buses:
        balance[b] = []
        for t in range(T):
            terms = [(uv[u.id].power[t], 1.0) for u in at_bus[b]]
            terms += [(flow[ln.id][t], -1.0) for ln in net.lines if ln.from_bus == b]
            terms += [(flow[ln.id][t], 1.0) for ln in net.lines if ln.to_bus == b]
            terms += [(shed[b][t], 1.0), (surplus[b][t], -1.0)]
            terms += [(v, -1.0) for v in dx[b][t]]
            balance[b].append(lp.add_constraint(terms, "eq", loads[b][t], f"balance_{b}_{t + 1}"))
    if reserve_margin > 0:
        for t in range(T):
            need = (1.0 + reserve_margin) * sum(max(0.0, loads[b][t]) for b in net.buses)
            lp.add_constraint([(uv[u.id].on[t], u.p_max) for u in units], "ge", need, f"reserve_{t + 1}")
    return _Model(lp, uv, theta, flow, dx, shed, surplus, balance, T)


def _diagnose(net, units, loads, bids, voll, reserve_margin):
    """Locate the hours/buses that force over-generation when the SCUC is infeasible."""
    m = _build(net, units, loads, bids, voll, allow_surplus=True, reserve_margin=reserve_margin)
    sol = solve_mip(m.lp)
    if sol.status != "optimal":
        return "no commitment satisfies the unit constraints"
    spots = [f"hour {t + 1} bus {b} ({sol.values[v]:.3f} MW surplus)"
             for b, vs in m.surplus.items() for t, v in enumerate(vs) if sol.values[v] > BINDING_TOL]
    return "over-generation at " + ", ".join(spots[:10]) if spots else "unknown cause"


def _result(net, units, m, lp_sol, mip=None):
    x = lp_sol.values
    T = m.horizon
    commitment = {u: tuple(float(round(x[i])) for i in v.on) for u, v in m.units.items()}
    dispatch = {u: tuple(x[p] for p in v.power) for u, v in m.units.items()}
    flows = {ln: tuple(x[v] for v in vs) for ln, vs in m.flow.items()}
    angles = {b: tuple(x[v] for v in vs) for b, vs in m.theta.items()}
    shed = {b: tuple(x[v] for v in vs) for b, vs in m.shed.items()}
    surplus = {b: tuple(x[v] for v in vs) for b, vs in m.surplus.items()}
    seg = {b: tuple(tuple(x[v] for v in hour) for hour in vs) for b, vs in m.dx.items()}
    lmps = {b: tuple(lp_sol.duals[k] for k in rows) for b, rows in m.balance.items()}
    awarded = {}
    for b in net.buses:
        rhs = [m.lp.constraints[k].rhs for k in m.balance[b]]
        awarded[b] = tuple(rhs[t] + sum(seg[b][t]) - shed[b][t] for t in range(T))
    cost = 0.0
    for u in units:
        v = m.units[u.id]
        cost += sum(u.marginal_cost * x[p] + u.no_load_cost * round(x[i]) + u.startup_cost * x[s]
                    + u.shutdown_cost * x[d] for p, i, s, d in zip(v.power, v.on, v.startup, v.shutdown))
    limits = {ln.id: ln.limit for ln in net.lines}
    binding = {ln: tuple(abs(f) >= limits[ln] - BINDING_TOL for f in fl) for ln, fl in flows.items()}
    return IsoResult(commitment, dispatch, flows, angles, awarded, seg, shed, surplus, lmps,
                     objective=-lp_sol.objective, generation_cost=cost,
                     node_count=mip.node_count if mip else 0, gap=mip.gap if mip else 0.0, binding=binding)


def _assignment(m, commitment):
    out = {}
    for u, v in m.units.items():
        if u not in commitment:
            raise ValueError(f"commitment misses unit {u}")
        if len(commitment[u]) != m.horizon:
            raise ValueError(f"commitment of unit {u} must have {m.horizon} entries")
        for var, val in zip(v.on, commitment[u]):
            out[var] = int(round(val))
    return out


def solve_welfare_scuc(net, units, fixed_load, bids=None, voll=1000.0, reserve_margin=0.0):
    """Unit commitment maximizing bid value minus generation cost.

    ``fixed_load`` maps bus -> hourly MW that must be served (bid fixed blocks
    included by the caller); ``bids`` maps bus -> AggregatedBid whose
    segments are valued at their prices.  Unserved fixed load is shed at
    ``voll``.
    """
    m = _build(net, units, fixed_load, bids, voll, reserve_margin=reserve_margin)
    mip = solve_mip(m.lp)
    if mip.status == "infeasible":
        raise InfeasibleError("SCUC infeasible: " + _diagnose(net, units, fixed_load, bids, voll, reserve_margin))
    assignment = {k: int(round(mip.values[k])) for k in m.lp.binaries}
    priced = fix_binaries_and_price(m.lp, assignment)
    if priced.status != "optimal":
        raise InfeasibleError("SCUC pricing run failed for the optimal commitment")
    return _result(net, units, m, priced, mip)


def _fixed_commitment(net, units, loads, commitment, voll, allow_surplus):
    m = _build(net, units, loads, None, voll, allow_surplus=allow_surplus)
    sol = fix_binaries_and_price(m.lp, _assignment(m, commitment))
    if sol.status != "optimal":
        hint = _diagnose(net, units, loads, None, voll, 0.0) if not allow_surplus else "unit limits"
        raise InfeasibleError(f"fixed-commitment dispatch infeasible: {hint}")
    return _result(net, units, m, sol)


def compute_lmps(net, units, loads, commitment, voll=1000.0):
    """Nodal prices of the economic dispatch under a fixed commitment."""
    return _fixed_commitment(net, units, loads, commitment, voll, allow_surplus=False).lmps


def redispatch(net, units, commitment, actual_loads, voll=1000.0):
    """Re-run the economic dispatch of committed units against realized loads.

    Load shedding and over-generation slacks, both priced at ``voll``, keep
    the problem feasible; check ``shed_any`` / ``surplus_any`` on the result.
    """
    return _fixed_commitment(net, units, actual_loads, commitment, voll, allow_surplus=True)


def flows_from_angles(net, result):
    """Recompute line flows from bus angles using the DC flow relation."""
    out = {}
    for ln in net.lines:
        f, to = result.angles[ln.from_bus], result.angles[ln.to_bus]
        out[ln.id] = tuple(net.base_power * (a - b) / ln.reactance for a, b in zip(f, to))
    return out


def write_iso_csvs(net, result, prefix):
    """Write ``<prefix>scuc.csv``, ``<prefix>flows.csv`` and ``<prefix>lmp.csv``."""
    T = len(next(iter(result.lmps.values())))
    with open(f"{prefix}scuc.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hour", "unit", "on", "power"])
        for t in range(T):
            for u in result.dispatch:
                w.writerow([t + 1, u, int(result.commitment[u][t]), f"{result.dispatch[u][t]:.6f}"])
    with open(f"{prefix}flows.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hour", "line", "flow", "limit", "binding"])
        for t in range(T):
            for ln in net.lines:
                w.writerow([t + 1, ln.id, f"{result.flows[ln.id][t]:.6f}", f"{ln.limit:.6f}",
                            int(result.binding[ln.id][t])])
    with open(f"{prefix}lmp.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hour", "bus", "lmp"])
        for t in range(T):
            for b in net.buses:
                w.writerow([t + 1, b, f"{result.lmps[b][t]:.6f}"])
