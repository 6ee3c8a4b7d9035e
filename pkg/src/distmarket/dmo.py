"""Distribution market operator: bid aggregation and award disaggregation."""

from __future__ import annotations

import csv
from dataclasses import dataclass

from .errors import AwardError, SolverError
from .market_core import DemandBid, Segment
from .opt_kernel import LinearProgram, solve_lp

AWARD_TOL = 1e-9


@dataclass(frozen=True)
class AggSegment:
    price: float
    width: float
    microgrid: str
    index: int  # position of the segment in its microgrid's hourly bid


@dataclass(frozen=True)
class AggregatedBid:
    fixed: tuple
    segments: tuple  # per hour: tuple of AggSegment, nonincreasing price

    @property
    def horizon(self):
        return len(self.fixed)

    def as_demand_bid(self, name="DMO"):
        return DemandBid(name, self.fixed, tuple(tuple(Segment(s.price, s.width) for s in h)
                                                 for h in self.segments))


@dataclass
class DisaggregationResult:
    assigned: dict  # microgrid -> hourly PD
    responsive: dict  # microgrid -> hourly responsive part
    segment_awards: dict  # microgrid -> per hour tuple of DX (bid segment order)
    objective: float


def aggregate_bids(bids):
    """Add the fixed blocks and merge all segments into one nonincreasing staircase.

    Equal prices keep submission order (bid order, then segment order).
    """
    bids = list(bids)
    if not bids:
        raise ValueError("aggregate_bids needs at least one bid")
    T = bids[0].horizon
    if any(b.horizon != T for b in bids):
        raise AwardError("bids cover different horizons")
    fixed = tuple(sum(b.fixed[t] for b in bids) for t in range(T))
    segments = []
    for t in range(T):
        pool = [AggSegment(s.price, s.width, b.microgrid, j) for b in bids for j, s in enumerate(b.segments[t])]
        pool.sort(key=lambda s: -s.price)  # stable: ties keep submission order
        segments.append(tuple(pool))
    return AggregatedBid(fixed, tuple(segments))


def _hour_lp(t, bids, responsive):
    lp = LinearProgram("maximize", f"disaggregate_h{t + 1}")
    ids = []
    for b in bids:
        ids.append([lp.add_var(0.0, s.width, obj=s.price, name=f"DX_{b.microgrid}_{j + 1}_{t + 1}")
                    for j, s in enumerate(b.segments[t])])
    flat = [v for row in ids for v in row]
    if flat:
        lp.add_constraint([(v, 1.0) for v in flat], "eq", responsive, f"award_{t + 1}")
    else:
        lp.add_var(0.0, 0.0)
    return lp, ids


def disaggregate_award(award, bids):
    """Split the hourly ISO award among microgrids so the total bid value is maximal.

    Each hour is an independent LP.  Among segments with equal price the
    awarded quantity is split in proportion to segment width.
    """
    bids = list(bids)
    award = tuple(float(a) for a in award)
    T = len(award)
    if any(b.horizon != T for b in bids):
        raise AwardError("award and bids cover different horizons")
    dx = {b.microgrid: [] for b in bids}
    objective = 0.0
    for t in range(T):
        fixed = sum(b.fixed[t] for b in bids)
        cap = sum(s.width for b in bids for s in b.segments[t])
        responsive = award[t] - fixed
        if responsive < -AWARD_TOL * max(1.0, fixed):
            raise AwardError(f"hour {t + 1}: award {award[t]:.6f} MW is below total fixed load {fixed:.6f} MW")
        if responsive > cap + AWARD_TOL * max(1.0, cap):
            raise AwardError(f"hour {t + 1}: award {award[t]:.6f} MW exceeds total bid {fixed + cap:.6f} MW")
        responsive = min(max(responsive, 0.0), cap)
        lp, ids = _hour_lp(t, bids, responsive)
        sol = solve_lp(lp)
        if sol.status != "optimal":
            raise SolverError(f"hour {t + 1}: disaggregation LP is {sol.status}")

        # totals per price level from the LP, then split within the level by width
        levels = {}
        for b, row in zip(bids, ids):
            for s, v in zip(b.segments[t], row):
                lv = levels.setdefault(s.price, [0.0, 0.0])
                lv[0] += sol.values[v]
                lv[1] += s.width
        prices = sorted(levels, reverse=True)
        totals = {p: min(max(levels[p][0], 0.0), levels[p][1]) for p in prices}
        # push numerical residue onto the lowest-priced level with room for it
        residue = responsive - sum(totals.values())
        for p in reversed(prices):
            if residue == 0:
                break
            room = levels[p][1] - totals[p] if residue > 0 else -totals[p]
            step = min(residue, room) if residue > 0 else max(residue, room)
            totals[p] += step
            residue -= step
        for b in bids:
            dx[b.microgrid].append(tuple(totals[s.price] * s.width / levels[s.price][1] for s in b.segments[t]))
        objective += sum(p * totals[p] for p in prices)

    responsive = {m: tuple(sum(h) for h in rows) for m, rows in dx.items()}
    assigned = {b.microgrid: tuple(b.fixed[t] + responsive[b.microgrid][t] for t in range(T)) for b in bids}
    return DisaggregationResult(assigned, responsive, {m: tuple(r) for m, r in dx.items()}, objective)


def write_aggregated_bid_csv(agg, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hour", "block", "price", "width", "cumulative_mw", "microgrid", "segment"])
        for t in range(agg.horizon):
            cum = agg.fixed[t]
            w.writerow([t + 1, 0, "", f"{agg.fixed[t]:.6f}", f"{cum:.6f}", "fixed", ""])
            for k, s in enumerate(agg.segments[t], start=1):
                cum += s.width
                w.writerow([t + 1, k, f"{s.price:.6f}", f"{s.width:.6f}", f"{cum:.6f}", s.microgrid, s.index + 1])


def write_disaggregation_csv(result, bids, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hour", "microgrid", "fixed", "responsive", "assigned", "segment_dx"])
        T = len(next(iter(result.assigned.values()))) if result.assigned else 0
        for t in range(T):
            for b in bids:
                m = b.microgrid
                w.writerow([t + 1, m, f"{b.fixed[t]:.6f}", f"{result.responsive[m][t]:.6f}",
                            f"{result.assigned[m][t]:.6f}",
                            ";".join(f"{x:.6f}" for x in result.segment_awards[m][t])])
