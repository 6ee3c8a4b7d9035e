"""End-to-end runs of the market-based and price-based schemes, the penalty
sweep, and report/CSV output."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

from .dmo import aggregate_bids, disaggregate_award, write_aggregated_bid_csv, write_disaggregation_csv
from .errors import DistMarketError, StageError
from .iso import compute_lmps, redispatch, solve_welfare_scuc, write_iso_csvs
from .market_core import hourly_costs, validate_schedule
from .microgrid import build_demand_bid, build_market_schedule, build_price_schedule

log = logging.getLogger(__name__)


@dataclass
class CaseReport:
    scheme: str  # "market" or "price"
    scenario_hash: str
    microgrids: dict  # id -> dict of cost/deviation figures
    schedules: dict  # id -> MicrogridSchedule
    specs: dict  # id -> MicrogridSpec actually scheduled
    iso: object
    lmp_dmo: tuple
    iso_after: object = None
    lmp_after: tuple | None = None
    bids: list = field(default_factory=list)
    aggregated: object = None
    disaggregation: object = None
    multiplier: float | None = None
    penalty_mode: str | None = None
    solver: dict = field(default_factory=dict)
    voll: float = 1000.0

    def totals(self):
        keys = ("objective", "settlement_inclusive", "cost_operation", "cost_curtailment", "cost_deviation",
                "cost_energy", "settlement", "deviation_mwh", "curtailment_mwh")
        return {k: sum(m[k] for m in self.microgrids.values()) for k in keys}

    def summary(self):
        out = {
            "scheme": self.scheme,
            "scenario_hash": self.scenario_hash,
            "microgrids": self.microgrids,
            "totals": self.totals(),
            "iso": {
                "welfare": self.iso.objective,
                "generation_cost": self.iso.generation_cost,
                "load_shed": self.iso.shed_any,
                "congested_lines": sorted(ln for ln, flags in self.iso.binding.items() if any(flags)),
            },
            "lmp_dmo": list(self.lmp_dmo),
            "solver": self.solver,
        }
        if self.scheme == "market":
            out["penalty_multiplier"] = self.multiplier
            out["penalty_mode"] = self.penalty_mode
        if self.iso_after is not None:
            out["redispatch"] = {
                "generation_cost": self.iso_after.generation_cost,
                "cost_delta": self.iso_after.generation_cost - self.iso.generation_cost,
                "load_shed": self.iso_after.shed_any,
                "shed_mwh": sum(sum(v) for v in self.iso_after.shed.values()),
                "over_generation": self.iso_after.surplus_any,
                "over_generation_mwh": sum(sum(v) for v in self.iso_after.surplus.values()),
                "slack_cost": self.voll * sum(sum(v) for d in (self.iso_after.shed, self.iso_after.surplus)
                                              for v in d.values()),
                "lmp_dmo_after": list(self.lmp_after),
                "lmp_drift": [a - b for a, b in zip(self.lmp_after, self.lmp_dmo)],
                "max_abs_lmp_drift": max((abs(a - b) for a, b in zip(self.lmp_after, self.lmp_dmo)), default=0.0),
            }
        return out


def scenario_hash(scenario):
    return hashlib.sha256(repr(tuple(scenario)).encode()).hexdigest()[:16]


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except DistMarketError as exc:
        raise StageError(name, exc) from exc


def forecast_specs(scenario):
    """Microgrids as known day-ahead: islanding overrides applied, no load spikes."""
    cfg = scenario.config
    out = []
    for m in scenario.microgrids:
        isl = list(m.islanding)
        for mid, h in cfg.islanding:
            if mid == m.id:
                isl[h - 1] = 0
        out.append(replace(m, islanding=tuple(isl)))
    return out


def realized_specs(scenario):
    """Microgrids as they are scheduled: forecast specs with the load spikes applied."""
    spikes = dict(scenario.config.load_spike)
    out = []
    for m in forecast_specs(scenario):
        load = tuple(d * spikes.get(t + 1, 1.0) for t, d in enumerate(m.fixed_load))
        out.append(replace(m, fixed_load=load))
    return out


def _bus_loads(net, horizon, extra=None):
    loads = {b: list(net.load(b, horizon)) for b in net.buses}
    for b, vec in (extra or {}).items():
        loads[b] = [x + y for x, y in zip(loads[b], vec)]
    return {b: tuple(v) for b, v in loads.items()}


def _parallel(fn, items, workers):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _figures(spec, sched, lmp):
    rows = hourly_costs(spec, sched)
    op, curt, dev, energy = (sum(r[k] for r in rows) for k in range(4))
    if sched.mode == "market":
        settlement = sum(p * a for p, a in zip(lmp, sched.assigned))
    else:
        settlement = energy
    objective = op + curt + dev + energy
    violations = validate_schedule(spec, sched)
    return {
        "objective": objective,
        "settlement": settlement,
        "settlement_inclusive": objective + settlement if sched.mode == "market" else objective,
        "cost_operation": op,
        "cost_curtailment": curt,
        "cost_deviation": dev,
        "cost_energy": energy,
        "deviation_mwh": sum(sched.deviation_pos),
        "curtailment_mwh": sum(sched.curtailment),
        "violations": len(violations),
    }


@dataclass
class MarketClearing:
    bids: list
    aggregated: object
    iso: object
    award: tuple
    disaggregation: object
    lmp_dmo: tuple


def clear_market(scenario):
    """Bids, aggregation, welfare SCUC and award disaggregation (everything before microgrid scheduling)."""
    net, units, _, cfg = scenario
    T = cfg.horizon
    specs = forecast_specs(scenario)
    bids = [_stage("bid", build_demand_bid, s) for s in specs]
    agg = _stage("aggregate", aggregate_bids, bids) if bids else None
    extra = {cfg.dmo_bus: agg.fixed} if agg else {}
    loads = _bus_loads(net, T, extra)
    iso = _stage("iso", solve_welfare_scuc, net, units, loads, {cfg.dmo_bus: agg} if agg else None,
                 cfg.voll, cfg.reserve_margin)
    if agg:
        shed = iso.shed[cfg.dmo_bus]
        award = tuple(agg.fixed[t] + sum(iso.segment_awards[cfg.dmo_bus][t]) - shed[t] for t in range(T))
        dis = _stage("disaggregate", disaggregate_award, award, bids)
    else:
        award, dis = (0.0,) * T, None
    return MarketClearing(bids, agg, iso, award, dis, iso.lmps[cfg.dmo_bus])


def schedule_market(scenario, clearing, multiplier, penalty_mode, workers=4):
    """Microgrid stage of the market scheme: schedule every microgrid against its assignment."""
    lmp = clearing.lmp_dmo
    specs = [replace(s, deviation_penalty=tuple(max(0.0, multiplier * p) for p in lmp))
             for s in realized_specs(scenario)]

    def one(spec):
        return _stage(f"microgrid:{spec.id}", build_market_schedule, spec,
                      clearing.disaggregation.assigned[spec.id], penalty_mode)

    return specs, _parallel(one, specs, workers)


def run_market_case(scenario, multiplier=None, penalty_mode=None, workers=4, clearing=None):
    """Market-based scheme: bid, aggregate, clear, disaggregate, then schedule each microgrid."""
    cfg = scenario.config
    multiplier = cfg.penalty_multipliers[0] if multiplier is None else multiplier
    penalty_mode = penalty_mode or cfg.penalty_mode
    clearing = clearing or clear_market(scenario)
    specs, schedules = schedule_market(scenario, clearing, multiplier, penalty_mode, workers)
    figures = {s.id: _figures(s, sch, clearing.lmp_dmo) for s, sch in zip(specs, schedules)}
    return CaseReport(
        scheme="market", scenario_hash=scenario_hash(scenario), microgrids=figures,
        schedules={s.id: sch for s, sch in zip(specs, schedules)}, specs={s.id: s for s in specs},
        iso=clearing.iso, lmp_dmo=clearing.lmp_dmo, bids=clearing.bids, aggregated=clearing.aggregated,
        disaggregation=clearing.disaggregation, multiplier=multiplier, penalty_mode=penalty_mode,
        solver={"iso_nodes": clearing.iso.node_count, "iso_gap": clearing.iso.gap})


def run_price_case(scenario, workers=4):
    """Price-based scheme: clear on forecast loads, self-schedule at LMPs, then redispatch."""
    net, units, _, cfg = scenario
    T = cfg.horizon
    forecast = forecast_specs(scenario)
    mg_load = [sum(s.forecast_load()[t] * s.islanding[t] for s in forecast) for t in range(T)]
    loads = _bus_loads(net, T, {cfg.dmo_bus: mg_load})
    iso = _stage("iso", solve_welfare_scuc, net, units, loads, None, cfg.voll, cfg.reserve_margin)
    lmps = _stage("lmp", compute_lmps, net, units, loads, iso.commitment, cfg.voll)
    lmp = lmps[cfg.dmo_bus]
    specs = realized_specs(scenario)
    schedules = _parallel(lambda s: _stage(f"microgrid:{s.id}", build_price_schedule, s, lmp), specs, workers)
    actual = [sum(sch.grid[t] for sch in schedules) for t in range(T)]
    after = _stage("redispatch", redispatch, net, units, iso.commitment,
                   _bus_loads(net, T, {cfg.dmo_bus: actual}), cfg.voll)
    figures = {s.id: _figures(s, sch, lmp) for s, sch in zip(specs, schedules)}
    return CaseReport(
        scheme="price", scenario_hash=scenario_hash(scenario), microgrids=figures,
        schedules={s.id: sch for s, sch in zip(specs, schedules)}, specs={s.id: s for s in specs},
        iso=iso, lmp_dmo=lmp, iso_after=after, lmp_after=after.lmps[cfg.dmo_bus],
        solver={"iso_nodes": iso.node_count, "iso_gap": iso.gap}, voll=cfg.voll)


def run_penalty_sweep(scenario, multipliers=None, penalty_mode=None, workers=4):
    """Re-solve only the microgrid stage for each penalty multiplier, with the ISO award held fixed.

    Deviation cost need not move monotonically with the multiplier even
    though the deviated energy does not grow.
    """
    cfg = scenario.config
    multipliers = tuple(cfg.penalty_multipliers if multipliers is None else multipliers)
    penalty_mode = penalty_mode or cfg.penalty_mode
    clearing = clear_market(scenario)
    rows = []
    for k in multipliers:
        specs, schedules = schedule_market(scenario, clearing, k, penalty_mode, workers)
        for s, sch in zip(specs, schedules):
            f = _figures(s, sch, clearing.lmp_dmo)
            rows.append({"multiplier": k, "microgrid": s.id, "deviation_mwh": f["deviation_mwh"],
                         "deviation_cost": f["cost_deviation"], "curtailment_mwh": f["curtailment_mwh"],
                         "objective": f["objective"], "violations": f["violations"]})
    return rows


# ---------------------------------------------------------------------------
# output


def _f(x):
    s = f"{x:.6f}"
    return "0.000000" if s == "-0.000000" else s


def write_schedule_csv(spec, sched, lmp, path):
    rows = hourly_costs(spec, sched)
    header = ["hour", "grid", "assigned", "deviation", "deviation_pos", "delta", "curtailment"]
    for u in spec.units:
        header += [f"P_{u.id}", f"I_{u.id}"]
    for s in spec.storage:
        header += [f"charge_{s.id}", f"discharge_{s.id}", f"soc_{s.id}"]
    for a in spec.adjustable_loads:
        header += [f"d_{a.id}", f"on_{a.id}"]
    header += ["price", "cost_operation", "cost_curtailment", "cost_deviation", "cost_energy", "settlement"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t in range(sched.horizon):
            row = [t + 1] + [_f(getattr(sched, k)[t]) for k in
                             ("grid", "assigned", "deviation", "deviation_pos")]
            row += [int(sched.deviation_flag[t]), _f(sched.curtailment[t])]
            for u in spec.units:
                row += [_f(sched.unit_power[u.id][t]), int(sched.unit_on[u.id][t])]
            for s in spec.storage:
                row += [_f(sched.storage_charge[s.id][t]), _f(sched.storage_discharge[s.id][t]),
                        _f(sched.soc[s.id][t])]
            for a in spec.adjustable_loads:
                row += [_f(sched.adjustable_power[a.id][t]), int(sched.adjustable_on[a.id][t])]
            settle = lmp[t] * (sched.assigned[t] if sched.mode == "market" else sched.grid[t])
            row += [_f(lmp[t])] + [_f(x) for x in rows[t]] + [_f(settle)]
            w.writerow(row)


def write_case(report, net, out_dir):
    """Write every CSV of a case plus ``<scheme>_summary.json``; returns the summary dict."""
    os.makedirs(out_dir, exist_ok=True)
    p = report.scheme
    for mid, sched in report.schedules.items():
        write_schedule_csv(report.specs[mid], sched, report.lmp_dmo, os.path.join(out_dir, f"{p}_schedule_{mid}.csv"))
    write_iso_csvs(net, report.iso, os.path.join(out_dir, f"{p}_"))
    if report.iso_after is not None:
        write_iso_csvs(net, report.iso_after, os.path.join(out_dir, f"{p}_redispatch_"))
    if report.aggregated is not None:
        write_aggregated_bid_csv(report.aggregated, os.path.join(out_dir, f"{p}_aggregated_bid.csv"))
        write_disaggregation_csv(report.disaggregation, report.bids, os.path.join(out_dir, f"{p}_disaggregation.csv"))
    summary = report.summary()
    with open(os.path.join(out_dir, f"{p}_summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return summary


def write_sweep(rows, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    keys = ["multiplier", "microgrid", "deviation_mwh", "deviation_cost", "curtailment_mwh", "objective",
            "violations"]
    with open(os.path.join(out_dir, "sweep.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for r in rows:
            w.writerow([r["multiplier"], r["microgrid"]] + [_f(r[k]) for k in keys[2:-1]] + [r["violations"]])


def run(scenario, out_dir, mode=None, multipliers=None, penalty_mode=None, workers=4):
    """Run the requested scheme(s), write outputs, and write ``summary.json`` with the side-by-side table."""
    cfg = scenario.config
    mode = mode or cfg.mode
    multipliers = tuple(multipliers or cfg.penalty_multipliers)
    summary = {"scenario_hash": scenario_hash(scenario), "schemes": {}}
    reports = {}
    if mode in ("market", "both"):
        clearing = clear_market(scenario)
        reports["market"] = run_market_case(scenario, multipliers[0], penalty_mode, workers, clearing)
        summary["schemes"]["market"] = write_case(reports["market"], scenario.network, out_dir)
        sweep = []
        for k in multipliers:
            rep = reports["market"] if k == multipliers[0] else run_market_case(
                scenario, k, penalty_mode, workers, clearing)
            for mid, f in rep.microgrids.items():
                sweep.append({"multiplier": k, "microgrid": mid, "deviation_mwh": f["deviation_mwh"],
                              "deviation_cost": f["cost_deviation"], "curtailment_mwh": f["curtailment_mwh"],
                              "objective": f["objective"], "violations": f["violations"]})
        write_sweep(sweep, out_dir)
        summary["penalty_sweep"] = sweep
    if mode in ("price", "both"):
        reports["price"] = run_price_case(scenario, workers)
        summary["schemes"]["price"] = write_case(reports["price"], scenario.network, out_dir)
    if len(reports) == 2:
        m, p = reports["market"].totals(), reports["price"].totals()
        summary["comparison"] = {
            "market_objective": m["objective"], "price_objective": p["objective"],
            "market_settlement_inclusive": m["settlement_inclusive"],
            "price_settlement_inclusive": p["settlement_inclusive"],
            "reduction_pct": 100.0 * (p["settlement_inclusive"] - m["settlement_inclusive"])
            / p["settlement_inclusive"] if p["settlement_inclusive"] else 0.0,
        }
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return reports, summary
