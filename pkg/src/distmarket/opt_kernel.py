"""Linear and mixed-binary linear programming.

Models are built incrementally with :class:`LinearProgram` and solved with
:func:`solve_lp` (continuous relaxation, with duals) or :func:`solve_mip`
(deterministic best-bound branch-and-bound over the binary variables).
LP relaxations are handed to the HiGHS simplex shipped with scipy.

Dual convention: ``LpSolution.duals[k]`` is the derivative of the reported
objective with respect to the right-hand side of constraint ``k``.  Under
minimization a binding ``ge`` row therefore has a nonnegative dual and a
binding ``le`` row a nonpositive one; under maximization the signs flip.
``reduced_costs`` follow the same rule for the active variable bounds.
"""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .errors import ModelValidationError, SolverError, UnboundedError

log = logging.getLogger(__name__)

INF = math.inf

FEAS_TOL = 1e-7
INT_TOL = 1e-6
MIP_GAP = 1e-6

SENSES = ("le", "eq", "ge")
KINDS = ("continuous", "binary")


@dataclass(frozen=True)
class Variable:
    id: int
    lower: float = 0.0
    upper: float = INF
    kind: str = "continuous"
    obj: float = 0.0
    name: str | None = None
    priority: int = 0


@dataclass(frozen=True)
class Constraint:
    terms: tuple
    sense: str
    rhs: float
    name: str | None = None


class LinearProgram:
    """A linear model over continuous and binary variables.

    Variables are numbered consecutively from 0 in creation order.  Infinite
    bounds are ``math.inf`` / ``-math.inf``; never encode them as big numbers.
    """

    def __init__(self, sense="minimize", name="model"):
        if sense not in ("minimize", "maximize"):
            raise ModelValidationError(f"objective sense must be minimize or maximize, got {sense!r}")
        self.sense = sense
        self.name = name
        self.variables: list[Variable] = []
        self.constraints: list[Constraint] = []

    def add_var(self, lower=0.0, upper=INF, kind="continuous", obj=0.0, name=None, priority=0):
        if kind == "binary":
            lower, upper = max(0.0, lower), min(1.0, upper)
        var = Variable(len(self.variables), float(lower), float(upper), kind, float(obj), name, int(priority))
        self.variables.append(var)
        return var.id

    def add_objective(self, var_id, coeff):
        """Add ``coeff`` to the objective coefficient of an existing variable."""
        var = self.variables[var_id]
        self.variables[var_id] = replace(var, obj=var.obj + float(coeff))

    def add_constraint(self, terms, sense, rhs, name=None):
        if isinstance(terms, dict):
            terms = terms.items()
        row = tuple((int(v), float(a)) for v, a in terms)
        self.constraints.append(Constraint(row, sense, float(rhs), name))
        return len(self.constraints) - 1

    @property
    def binaries(self):
        return [v.id for v in self.variables if v.kind == "binary"]

    def validate(self):
        n = len(self.variables)
        if n == 0:
            raise ModelValidationError("model has no variables")
        for v in self.variables:
            if v.kind not in KINDS:
                raise ModelValidationError(f"variable {v.id}: unknown kind {v.kind!r}")
            if math.isnan(v.lower) or math.isnan(v.upper) or v.lower > v.upper:
                raise ModelValidationError(f"variable {v.id}: bad bounds [{v.lower}, {v.upper}]")
            if v.kind == "binary" and (v.lower < 0 or v.upper > 1):
                raise ModelValidationError(f"variable {v.id}: binary bounds outside [0, 1]")
        for k, con in enumerate(self.constraints):
            if con.sense not in SENSES:
                raise ModelValidationError(f"constraint {k}: unknown sense {con.sense!r}")
            seen = set()
            for vid, _ in con.terms:
                if not 0 <= vid < n:
                    raise ModelValidationError(f"constraint {k} ({con.name}): dangling var_id {vid}")
                if vid in seen:
                    raise ModelValidationError(f"constraint {k} ({con.name}): duplicate var_id {vid}")
                seen.add(vid)


@dataclass
class LpSolution:
    status: str
    values: dict = field(default_factory=dict)
    duals: dict = field(default_factory=dict)
    objective: float = math.nan
    reduced_costs: dict = field(default_factory=dict)


@dataclass
class MipSolution:
    status: str
    values: dict = field(default_factory=dict)
    objective: float = math.nan
    gap: float = math.nan
    node_count: int = 0


class _Compiled:
    """Matrix form of a LinearProgram, built once and re-solved under varying bounds."""

    def __init__(self, model):
        self.model = model
        n = len(model.variables)
        self.n = n
        self.flip = -1.0 if model.sense == "maximize" else 1.0
        self.c = self.flip * np.array([v.obj for v in model.variables])
        self.lb = np.array([v.lower for v in model.variables])
        self.ub = np.array([v.upper for v in model.variables])
        ub_rows, ub_cols, ub_vals, b_ub, ub_map = [], [], [], [], []
        eq_rows, eq_cols, eq_vals, b_eq, eq_map = [], [], [], [], []
        for k, con in enumerate(model.constraints):
            if con.sense == "eq":
                r = len(b_eq)
                for v, a in con.terms:
                    eq_rows.append(r), eq_cols.append(v), eq_vals.append(a)
                b_eq.append(con.rhs)
                eq_map.append(k)
            else:
                sign = 1.0 if con.sense == "le" else -1.0
                r = len(b_ub)
                for v, a in con.terms:
                    ub_rows.append(r), ub_cols.append(v), ub_vals.append(sign * a)
                b_ub.append(sign * con.rhs)
                ub_map.append((k, sign))
        self.A_ub = sparse.csr_matrix((ub_vals, (ub_rows, ub_cols)), shape=(len(b_ub), n)) if b_ub else None
        self.b_ub = np.array(b_ub) if b_ub else None
        self.A_eq = sparse.csr_matrix((eq_vals, (eq_rows, eq_cols)), shape=(len(b_eq), n)) if b_eq else None
        self.b_eq = np.array(b_eq) if b_eq else None
        self.ub_map = ub_map
        self.eq_map = eq_map

    def solve(self, lb=None, ub=None):
        """Return (status, x, objective, result); objective in the model's own sense."""
        lb = self.lb if lb is None else lb
        ub = self.ub if ub is None else ub
        if np.any(lb > ub + FEAS_TOL):
            return "infeasible", None, math.nan, None
        res = linprog(self.c, A_ub=self.A_ub, b_ub=self.b_ub, A_eq=self.A_eq, b_eq=self.b_eq,
                      bounds=np.column_stack((lb, ub)), method="highs")
        if res.status == 0:
            return "optimal", res.x, self.flip * res.fun, res
        if res.status == 2:
            return "infeasible", None, math.nan, res
        if res.status == 3:
            return "unbounded", None, math.nan, res
        raise SolverError(f"{self.model.name}: HiGHS status {res.status}: {res.message}")

    def to_solution(self, status, x, obj, res):
        if status != "optimal":
            return LpSolution(status)
        duals = {}
        if self.ub_map:
            for (k, sign), m in zip(self.ub_map, res.ineqlin.marginals):
                duals[k] = self.flip * sign * m
        if self.eq_map:
            for k, m in zip(self.eq_map, res.eqlin.marginals):
                duals[k] = self.flip * m
        rc = self.flip * (res.lower.marginals + res.upper.marginals)
        return LpSolution(
            "optimal",
            values={j: float(x[j]) for j in range(self.n)},
            duals={k: float(duals[k]) for k in sorted(duals)},
            objective=float(obj),
            reduced_costs={j: float(rc[j]) for j in range(self.n)},
        )


def solve_lp(model: LinearProgram) -> LpSolution:
    """Solve the continuous relaxation (binaries relaxed to [0, 1])."""
    model.validate()
    comp = _Compiled(model)
    status, x, obj, res = comp.solve()
    return comp.to_solution(status, x, obj, res)


def fix_binaries_and_price(model: LinearProgram, assignment) -> LpSolution:
    """Fix every binary at ``assignment[var_id]`` and solve the remaining LP.

    The returned duals are the prices of the fixed-commitment problem.
    """
    model.validate()
    missing = [b for b in model.binaries if b not in assignment]
    if missing:
        raise ModelValidationError(f"assignment misses binaries {missing[:5]}")
    comp = _Compiled(model)
    lb, ub = comp.lb.copy(), comp.ub.copy()
    for vid, val in assignment.items():
        if model.variables[vid].kind != "binary":
            continue
        if val not in (0, 1, 0.0, 1.0, True, False):
            raise ModelValidationError(f"binary {vid} assigned non-binary value {val}")
        lb[vid] = ub[vid] = float(val)
    status, x, obj, res = comp.solve(lb, ub)
    return comp.to_solution(status, x, obj, res)


def _rel_tol(obj):
    return MIP_GAP * max(1.0, abs(obj))


def _margins(res, binaries):
    # reduced costs of the binaries at their lower and upper bounds (minimization sense)
    return res.lower.marginals[binaries], -res.upper.marginals[binaries]


def _fix_by_reduced_cost(lb, ub, binaries, margins, slack):
    """Fix binaries whose move away from their bound would cost more than ``slack``."""
    at_lo, at_hi = margins
    cut = slack + 1e-9 * max(1.0, abs(slack))
    lo_fix = binaries[at_lo > cut]
    hi_fix = binaries[at_hi > cut]
    ub[lo_fix] = lb[lo_fix]
    lb[hi_fix] = ub[hi_fix]


def solve_mip(model: LinearProgram, node_limit=200_000, heuristic_every=25) -> MipSolution:
    """Best-bound branch-and-bound over the model's binaries.

    Branching picks the most fractional binary (ties: lowest id) among the
    fractional binaries of highest ``priority``; with default priorities this
    is plain most-fractional branching.  The open node with the best bound is
    processed next (ties: insertion order).  A rounding heuristic runs at nodes
    visited before any incumbent exists and every ``heuristic_every`` nodes
    afterwards.  The whole search is deterministic.
    """
    model.validate()
    comp = _Compiled(model)
    binaries = np.array(model.binaries, dtype=int)
    priority = np.array([model.variables[j].priority for j in binaries], dtype=float)

    # internally everything is a minimization of `sign * objective`
    sign = comp.flip
    root_status, x, obj, root_res = comp.solve()
    if root_status == "unbounded":
        raise UnboundedError(f"{model.name}: LP relaxation is unbounded")
    if root_status == "infeasible":
        return MipSolution("infeasible", node_count=1)
    if binaries.size == 0:
        return MipSolution("optimal", {j: float(x[j]) for j in range(comp.n)}, float(obj), 0.0, 1)

    best = {"obj": INF, "x": None}

    def try_assignment(lb, ub, vals):
        lb2, ub2 = lb.copy(), ub.copy()
        lb2[binaries] = ub2[binaries] = vals
        status, xa, oa, _ = comp.solve(lb2, ub2)
        if status != "optimal":
            return False
        z = sign * oa
        if z < best["obj"] - 1e-12:
            xa = xa.copy()
            xa[binaries] = vals
            best["obj"], best["x"] = z, xa
        return True

    def heuristic(lb, ub, xb):
        nearest = np.where(xb >= 0.5, 1.0, 0.0)
        try_assignment(lb, ub, nearest)
        up = np.where(xb > INT_TOL, 1.0, 0.0)
        if not np.array_equal(up, nearest):
            try_assignment(lb, ub, up)

    counter = 0
    heap = [(sign * obj, counter, comp.lb.copy(), comp.ub.copy(), x, _margins(root_res, binaries))]
    nodes = 0
    while heap:
        bound, _, lb, ub, xn, margins = heap[0]
        if best["x"] is not None and bound >= best["obj"] - _rel_tol(best["obj"]):
            break
        if nodes >= node_limit:
            log.warning("%s: node limit %d reached", model.name, node_limit)
            break
        heapq.heappop(heap)
        nodes += 1
        xb = xn[binaries]
        frac = np.minimum(xb - np.floor(xb), np.ceil(xb) - xb)
        if frac.max() <= INT_TOL:
            try_assignment(lb, ub, np.round(xb))
            continue
        if best["x"] is None or nodes % heuristic_every == 0:
            heuristic(lb, ub, xb)
        if best["x"] is not None:
            _fix_by_reduced_cost(lb, ub, binaries, margins, best["obj"] - bound)
        live = frac > INT_TOL
        top = priority[live].max()
        k = int(np.argmax(np.where(live & (priority == top), frac, -1.0)))  # first maximum: lowest id
        j = binaries[k]
        for val in (0.0, 1.0):
            clb, cub = lb.copy(), ub.copy()
            clb[j] = cub[j] = val
            status, xc, oc, rc = comp.solve(clb, cub)
            if status != "optimal":
                continue
            zc = sign * oc
            if best["x"] is not None and zc >= best["obj"] - _rel_tol(best["obj"]):
                continue
            counter += 1
            heapq.heappush(heap, (zc, counter, clb, cub, xc, _margins(rc, binaries)))

    if best["x"] is None:
        if heap:
            raise SolverError(f"{model.name}: node limit reached without an integer solution")
        return MipSolution("infeasible", node_count=nodes)
    lower = heap[0][0] if heap else best["obj"]
    gap = max(0.0, (best["obj"] - lower) / max(1.0, abs(best["obj"])))
    status = "optimal" if gap <= MIP_GAP else "node_limit"
    xs = best["x"]
    return MipSolution(status, {j: float(xs[j]) for j in range(comp.n)}, float(sign * best["obj"]), gap, nodes)


def write_lp(model: LinearProgram, path):
    """Dump ``model`` in a human-readable LP-style text format."""

    def name(j):
        return model.variables[j].name or f"x{j}"

    def expr(terms):
        parts = []
        for j, a in terms:
            if a == 0:
                continue
            s = "-" if a < 0 else "+"
            parts.append(f"{s} {abs(a):.12g} {name(j)}")
        text = " ".join(parts) or "0"
        return text[2:] if text.startswith("+ ") else text

    ops = {"le": "<=", "eq": "=", "ge": ">="}
    lines = [f"\\ {model.name}", model.sense.capitalize()]
    lines.append(" obj: " + expr([(v.id, v.obj) for v in model.variables]))
    lines.append("Subject To")
    for k, con in enumerate(model.constraints):
        lines.append(f" {con.name or f'c{k}'}: {expr(con.terms)} {ops[con.sense]} {con.rhs:.12g}")
    lines.append("Bounds")
    for v in model.variables:
        lo = "-inf" if v.lower == -INF else f"{v.lower:.12g}"
        hi = "+inf" if v.upper == INF else f"{v.upper:.12g}"
        lines.append(f" {lo} <= {name(v.id)} <= {hi}")
    bins = [name(v.id) for v in model.variables if v.kind == "binary"]
    if bins:
        lines.append("Binary")
        lines.extend(f" {b}" for b in bins)
    lines.append("End")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
