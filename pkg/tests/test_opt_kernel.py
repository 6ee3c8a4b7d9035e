import dataclasses
import math
import random

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from distmarket.errors import ModelValidationError, SolverError, UnboundedError
from distmarket.opt_kernel import LinearProgram, fix_binaries_and_price, solve_lp, solve_mip, write_lp
from oracles import enumerate_mip, vertex_enumeration

INF = math.inf


def kkt_residuals(model, sol):
    """Max primal violation, complementary slackness and duality gap for an optimal LP."""
    x = sol.values
    primal = 0.0
    slack = 0.0
    dual_obj = 0.0
    grad = np.array([v.obj for v in model.variables], dtype=float)
    for k, con in enumerate(model.constraints):
        lhs = sum(a * x[v] for v, a in con.terms)
        viol = {"le": lhs - con.rhs, "ge": con.rhs - lhs, "eq": abs(lhs - con.rhs)}[con.sense]
        primal = max(primal, viol)
        y = sol.duals[k]
        slack = max(slack, abs(y * (lhs - con.rhs)))
        dual_obj += y * con.rhs
        for v, a in con.terms:
            grad[v] -= y * a
    for v in model.variables:
        r = sol.reduced_costs[v.id]
        # stationarity: c - A^T y equals the reduced cost
        slack = max(slack, abs(grad[v.id] - r))
        primal = max(primal, v.lower - x[v.id], x[v.id] - v.upper)
        if abs(r) > 1e-9:
            at_lower = abs(x[v.id] - v.lower) <= abs(x[v.id] - v.upper)
            bound = v.lower if at_lower else v.upper
            slack = max(slack, abs(r * (x[v.id] - bound)))
            dual_obj += r * bound
    return primal, slack, abs(dual_obj - sol.objective)


# ---------------------------------------------------------------------------
# LP


def test_single_active_bound():
    lp = LinearProgram()
    x = lp.add_var(0, 10, obj=1.0)
    c = lp.add_constraint([(x, 1.0)], "ge", 3.0)
    sol = solve_lp(lp)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(3.0)
    assert sol.values[x] == pytest.approx(3.0)
    assert sol.duals[c] == pytest.approx(1.0)


def test_two_variable_maximization_matches_vertex_enumeration():
    best, arg = vertex_enumeration([2, 1], [[1, 1], [1, 0]], [4, 3], [(0, 100), (0, 100)], maximize=True)
    assert best == pytest.approx(7.0)
    assert tuple(arg) == pytest.approx((3.0, 1.0))

    lp = LinearProgram("maximize")
    x = lp.add_var(obj=2.0)
    y = lp.add_var(obj=1.0)
    lp.add_constraint({x: 1.0, y: 1.0}, "le", 4.0)
    lp.add_constraint({x: 1.0}, "le", 3.0)
    sol = solve_lp(lp)
    assert sol.objective == pytest.approx(best)
    assert (sol.values[x], sol.values[y]) == pytest.approx((3.0, 1.0))


def test_infeasible_lp_reports_status():
    lp = LinearProgram()
    x = lp.add_var(-INF, INF)
    lp.add_constraint([(x, 1.0)], "ge", 1.0)
    lp.add_constraint([(x, 1.0)], "le", 0.0)
    assert solve_lp(lp).status == "infeasible"


def test_unbounded_lp_reports_status():
    lp = LinearProgram("maximize")
    lp.add_var(obj=1.0)
    assert solve_lp(lp).status == "unbounded"


def test_dangling_variable_is_a_model_error_not_infeasibility():
    lp = LinearProgram()
    lp.add_var()
    lp.add_constraint([(5, 1.0)], "le", 1.0)
    with pytest.raises(ModelValidationError, match="dangling"):
        solve_lp(lp)


def test_duplicate_var_in_row_rejected():
    lp = LinearProgram()
    x = lp.add_var()
    lp.add_constraint([(x, 1.0), (x, 2.0)], "le", 1.0)
    with pytest.raises(ModelValidationError, match="duplicate"):
        solve_lp(lp)


def test_empty_model_rejected():
    with pytest.raises(ModelValidationError):
        solve_lp(LinearProgram())


def test_binary_bounds_are_implied():
    lp = LinearProgram()
    b = lp.add_var(-3, 7, kind="binary")
    assert (lp.variables[b].lower, lp.variables[b].upper) == (0.0, 1.0)


@st.composite
def small_lps(draw):
    n = draw(st.integers(2, 3))
    m = draw(st.integers(1, 4))
    coef = st.integers(-5, 5)
    lp = LinearProgram(draw(st.sampled_from(["minimize", "maximize"])))
    bounds = []
    for _ in range(n):
        lo = draw(st.integers(-5, 0))
        hi = draw(st.integers(1, 6))
        bounds.append((lo, hi))
        lp.add_var(lo, hi, obj=draw(coef))
    rows = []
    for _ in range(m):
        row = [draw(coef) for _ in range(n)]
        sense = draw(st.sampled_from(["le", "ge", "eq"]))
        rhs = draw(st.integers(-6, 6))
        rows.append((row, sense, rhs))
        lp.add_constraint([(j, a) for j, a in enumerate(row) if a], sense, rhs)
    return lp, bounds, rows


@settings(max_examples=150, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(small_lps())
def test_lp_matches_vertex_enumeration_and_kkt(case):
    lp, bounds, rows = case
    sol = solve_lp(lp)
    a_ub, b_ub = [], []
    for row, sense, rhs in rows:
        if sense in ("le", "eq"):
            a_ub.append(row), b_ub.append(rhs)
        if sense in ("ge", "eq"):
            a_ub.append([-a for a in row]), b_ub.append(-rhs)
    c = [v.obj for v in lp.variables]
    best, _ = vertex_enumeration(c, a_ub, b_ub, bounds, maximize=lp.sense == "maximize")
    if best is None:
        assert sol.status == "infeasible"
        return
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(best, rel=1e-7, abs=1e-7)
    primal, slack, gap = kkt_residuals(lp, sol)
    assert primal <= 1e-7
    assert slack <= 1e-6
    assert gap <= 1e-6 * (1 + abs(sol.objective))


def test_ge_duals_nonnegative_under_minimization():
    lp = LinearProgram()
    x = lp.add_var(obj=2.0)
    y = lp.add_var(obj=3.0)
    c1 = lp.add_constraint({x: 1.0, y: 1.0}, "ge", 4.0)
    c2 = lp.add_constraint({x: 1.0}, "le", 1.0)
    sol = solve_lp(lp)
    assert sol.duals[c1] == pytest.approx(3.0)
    assert sol.duals[c2] == pytest.approx(-1.0)


# ---------------------------------------------------------------------------
# MIP


def test_indicator_example():
    lp = LinearProgram()
    d = lp.add_var(kind="binary", obj=3.0)
    x = lp.add_var(0, INF, obj=2.0)
    lp.add_constraint({x: 1.0, d: 10.0}, "ge", 1.5)
    # oracle: both leaves cost 3.0 (delta=0: x=1.5; delta=1: x=0)
    leaves = [fix_binaries_and_price(lp, {d: val}).objective for val in (0, 1)]
    assert leaves == pytest.approx([3.0, 3.0])
    sol = solve_mip(lp)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(3.0)
    # the rounding heuristic finds delta=0 first and the tie keeps it
    assert sol.values[d] == 0.0
    assert sol.values[x] == pytest.approx(1.5)


def test_indicator_example_with_strict_preference():
    lp = LinearProgram()
    d = lp.add_var(kind="binary", obj=3.5)
    x = lp.add_var(0, INF, obj=2.0)
    lp.add_constraint({x: 1.0, d: 10.0}, "ge", 1.5)
    sol = solve_mip(lp)
    assert sol.values[d] == 0.0
    assert sol.values[x] == pytest.approx(1.5)
    assert sol.objective == pytest.approx(3.0)


def test_all_continuous_mip_equals_lp():
    lp = LinearProgram("maximize")
    x = lp.add_var(obj=2.0)
    y = lp.add_var(obj=1.0)
    lp.add_constraint({x: 1.0, y: 1.0}, "le", 4.0)
    lp.add_constraint({x: 1.0}, "le", 3.0)
    a, b = solve_lp(lp), solve_mip(lp)
    assert b.objective == a.objective
    assert b.values == a.values
    assert b.node_count == 1


def knapsack(rng, n=8):
    lp = LinearProgram("maximize", "knapsack")
    xs = [lp.add_var(kind="binary", obj=rng.randint(1, 30)) for _ in range(n)]
    lp.add_constraint([(x, rng.randint(1, 15)) for x in xs], "le", rng.randint(15, 50))
    lp.add_constraint([(x, rng.randint(0, 9)) for x in xs], "le", rng.randint(10, 30))
    return lp


def test_eight_binary_knapsack_matches_256_case_enumeration():
    rng = random.Random(3)
    for _ in range(10):
        lp = knapsack(rng)
        sol = solve_mip(lp)
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(enumerate_mip(lp), rel=1e-9)
        assert all(min(abs(sol.values[b]), abs(sol.values[b] - 1)) <= 1e-6 for b in lp.binaries)
        assert sol.gap <= 1e-6


@st.composite
def mixed_models(draw):
    """Fixed-charge style models: binaries gate continuous capacities."""
    nb = draw(st.integers(1, 7))
    lp = LinearProgram("minimize", "fixed_charge")
    ys = [lp.add_var(kind="binary", obj=draw(st.integers(0, 40))) for _ in range(nb)]
    xs = [lp.add_var(0, INF, obj=draw(st.integers(1, 20))) for _ in range(nb)]
    for y, x in zip(ys, xs):
        lp.add_constraint({x: 1.0, y: -float(draw(st.integers(1, 12)))}, "le", 0.0)
    lp.add_constraint([(x, 1.0) for x in xs], "ge", float(draw(st.integers(0, 25))))
    if draw(st.booleans()):
        lp.add_constraint([(y, 1.0) for y in ys], "le", float(draw(st.integers(0, nb))))
    return lp


@settings(max_examples=60, deadline=None)
@given(mixed_models())
def test_mip_matches_brute_force(lp):
    want = enumerate_mip(lp)
    sol = solve_mip(lp)
    if want is None:
        assert sol.status == "infeasible"
    else:
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(want, rel=1e-6, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(mixed_models(), st.lists(st.integers(-2, 2), min_size=7, max_size=7))
def test_branching_priorities_do_not_change_the_optimum(lp, prios):
    want = enumerate_mip(lp)
    for k, b in enumerate(lp.binaries):
        lp.variables[b] = dataclasses.replace(lp.variables[b], priority=prios[k])
    sol = solve_mip(lp)
    if want is None:
        assert sol.status == "infeasible"
    else:
        assert sol.objective == pytest.approx(want, rel=1e-6, abs=1e-9)


def test_low_priority_binaries_are_branched_last():
    # a zero-cost indicator that is fractional at the root must not be branched before the priced binary
    lp = LinearProgram("minimize", "prio")
    y = lp.add_var(kind="binary", obj=10.0)
    x = lp.add_var(0, 10, obj=1.0)
    f = lp.add_var(kind="binary", priority=-1)
    lp.add_constraint({x: 1.0, y: -10.0}, "le", 0.0)
    lp.add_constraint({x: 1.0}, "ge", 4.0)
    lp.add_constraint({x: 1.0, f: -10.0}, "le", 0.0)
    sol = solve_mip(lp)
    assert sol.objective == pytest.approx(14.0)
    assert sol.node_count <= 3


def test_infeasible_mip():
    lp = LinearProgram()
    a = lp.add_var(kind="binary")
    b = lp.add_var(kind="binary")
    lp.add_constraint({a: 1.0, b: 1.0}, "ge", 1.5)
    lp.add_constraint({a: 1.0, b: 1.0}, "le", 1.8)
    assert solve_mip(lp).status == "infeasible"


def test_unbounded_relaxation_raises():
    lp = LinearProgram("maximize")
    lp.add_var(kind="binary")
    lp.add_var(obj=1.0)
    with pytest.raises(UnboundedError):
        solve_mip(lp)


def test_objective_scaling():
    rng = random.Random(11)
    for _ in range(5):
        base = LinearProgram("maximize")
        weights = [rng.uniform(1, 30) for _ in range(8)]
        xs = [base.add_var(kind="binary", obj=w) for w in weights]
        base.add_constraint([(x, rng.uniform(1, 15)) for x in xs], "le", rng.uniform(20, 40))
        scaled = LinearProgram("maximize")
        for w in weights:
            scaled.add_var(kind="binary", obj=7.5 * w)
        for con in base.constraints:
            scaled.add_constraint(con.terms, con.sense, con.rhs)
        a, b = solve_mip(base), solve_mip(scaled)
        assert b.objective == pytest.approx(7.5 * a.objective, rel=1e-9)
        assert [round(b.values[x]) for x in xs] == [round(a.values[x]) for x in xs]


def test_deterministic_reruns():
    rng = random.Random(5)
    lp = knapsack(rng, 10)
    first, second = solve_mip(lp), solve_mip(lp)
    assert first.status == second.status
    assert first.values == second.values
    assert first.node_count == second.node_count


def test_node_limit_without_incumbent_raises():
    lp = knapsack(random.Random(1), 12)
    with pytest.raises(SolverError, match="node limit"):
        solve_mip(lp, node_limit=1)


def test_node_limit_with_incumbent_reports_gap():
    lp = LinearProgram()
    on = [lp.add_var(kind="binary", obj=c) for c in (3.0, 4.0, 5.0, 6.0)]
    x = [lp.add_var(0, INF, obj=c) for c in (9.0, 7.0, 5.0, 3.0)]
    for i, p, cap in zip(on, x, (4.0, 5.0, 6.0, 7.0)):
        lp.add_constraint({p: 1.0, i: -cap}, "le", 0.0)
    lp.add_constraint([(p, 1.0) for p in x], "ge", 12.5)
    sol = solve_mip(lp, node_limit=1)
    full = solve_mip(lp)
    assert full.status == "optimal"
    if sol.status == "node_limit":
        assert sol.gap > 1e-6
        assert sol.objective >= full.objective - 1e-9
    else:
        assert sol.objective == pytest.approx(full.objective)


# ---------------------------------------------------------------------------
# fixed-binary pricing


def test_fixing_the_mip_optimum_reproduces_its_objective():
    rng = random.Random(9)
    lp = knapsack(rng)
    mip = solve_mip(lp)
    fixed = fix_binaries_and_price(lp, {b: round(mip.values[b]) for b in lp.binaries})
    assert fixed.objective == pytest.approx(mip.objective)


def test_fixing_requires_every_binary():
    lp = LinearProgram()
    lp.add_var(kind="binary")
    lp.add_var(kind="binary")
    with pytest.raises(ModelValidationError):
        fix_binaries_and_price(lp, {0: 1})


def test_infeasible_assignment():
    lp = LinearProgram()
    b = lp.add_var(kind="binary")
    x = lp.add_var(0, 10, obj=1.0)
    lp.add_constraint({x: 1.0, b: -5.0}, "le", 0.0)
    lp.add_constraint({x: 1.0}, "ge", 3.0)
    assert fix_binaries_and_price(lp, {b: 0}).status == "infeasible"
    assert fix_binaries_and_price(lp, {b: 1}).status == "optimal"


def dispatch_model(units, demand):
    lp = LinearProgram()
    on = [lp.add_var(kind="binary") for _ in units]
    p = [lp.add_var(0, INF, obj=c) for c, _ in units]
    for (c, cap), i, x in zip(units, on, p):
        lp.add_constraint({x: 1.0, i: -cap}, "le", 0.0)
    bal = lp.add_constraint([(x, 1.0) for x in p], "eq", demand)
    return lp, on, bal


def test_single_unit_price():
    lp, on, bal = dispatch_model([(20.0, 100.0)], 50.0)
    sol = fix_binaries_and_price(lp, {on[0]: 1})
    assert sol.duals[bal] == pytest.approx(20.0)


def test_merit_order_price():
    lp, on, bal = dispatch_model([(10.0, 30.0), (50.0, 100.0)], 40.0)
    mip = solve_mip(lp)
    sol = fix_binaries_and_price(lp, {b: round(mip.values[b]) for b in on})
    # hand merit order: 30 MW at 10, the remaining 10 MW at 50
    assert sol.objective == pytest.approx(30 * 10 + 10 * 50)
    assert sol.duals[bal] == pytest.approx(50.0)


# ---------------------------------------------------------------------------
# debug dump


def test_write_lp(tmp_path):
    lp = LinearProgram("maximize", "demo")
    x = lp.add_var(0, 3, obj=2.0, name="x")
    y = lp.add_var(-INF, INF, obj=-1.0, name="y")
    b = lp.add_var(kind="binary", name="b")
    lp.add_constraint({x: 1.0, y: -1.0, b: 4.0}, "le", 4.0, name="cap")
    path = tmp_path / "demo.lp"
    write_lp(lp, path)
    text = path.read_text()
    assert "Maximize" in text
    assert " obj: 2 x - 1 y" in text
    assert " cap: 1 x - 1 y + 4 b <= 4" in text
    assert " -inf <= y <= +inf" in text
    assert "Binary\n b\n" in text
    assert text.rstrip().endswith("End")
