"""Built-in simplex / branch-and-bound against scipy's HiGHS and by hand."""

import numpy as np
import pytest
from scipy.optimize import Bounds, LinearConstraint, milp

from edgeplace.linear_model import EQ, GE, LE, LinearModel, ModelError
from edgeplace import solver


def scipy_reference(model, integrality=False):
    n = model.num_vars
    c = np.zeros(n)
    for j, v in model.objective.items():
        c[j] = v
    A, lo, hi = [], [], []
    for row in model.constraints:
        a = np.zeros(n)
        for j, v in row.coeffs.items():
            a[j] = v
        A.append(a)
        lo.append(row.rhs if row.sense in (GE, EQ) else -np.inf)
        hi.append(row.rhs if row.sense in (LE, EQ) else np.inf)
    lb = np.array([v.lb for v in model.variables])
    ub = np.array([v.ub for v in model.variables])
    integ = np.array([v.is_integer for v in model.variables], dtype=float)
    cons = LinearConstraint(np.array(A), np.array(lo), np.array(hi)) if A else []
    return milp(c, constraints=cons, bounds=Bounds(lb, ub),
                integrality=integ if integrality else np.zeros(n),
                options={"mip_rel_gap": 0.0})


def random_model(rng, n, m, integer_frac=0.0):
    mod = LinearModel()
    for j in range(n):
        kind = rng.integers(0, 4)
        if kind == 0:
            lb, ub = 0.0, float(rng.uniform(1, 10))
        elif kind == 1:
            lb, ub = float(rng.uniform(-5, 0)), float(rng.uniform(0, 5))
        else:
            lb, ub = -50.0, 50.0
        if rng.random() < integer_frac:
            lb, ub = 0.0, float(rng.integers(1, 4))
            mod.add_var(f"x{j}", lb, ub, integer=True)
        else:
            mod.add_var(f"x{j}", lb, ub)
    for _ in range(m):
        nnz = rng.integers(1, min(n, 5) + 1)
        cols = rng.choice(n, size=nnz, replace=False)
        coeffs = {int(j): float(rng.normal()) for j in cols}
        sense = [LE, GE, EQ][rng.integers(0, 3)]
        mod.add_constraint(coeffs, sense, float(rng.normal() * 3))
    mod.set_objective({j: float(rng.normal()) for j in range(n)},
                      float(rng.normal()))
    return mod


def test_min_with_lower_bound():
    m = LinearModel()
    x = m.add_var("x", -np.inf, np.inf)
    m.add_constraint({x: 1.0}, GE, 3.0)
    m.set_objective({x: 1.0})
    res = solver.solve_lp(m)
    assert res.status == solver.OPTIMAL
    assert res.objective == pytest.approx(3.0, abs=1e-9)


def test_infeasible_box():
    m = LinearModel()
    x = m.add_var("x", 0.0, 10.0)
    m.add_constraint({x: 1.0}, LE, 0.0)
    m.add_constraint({x: 1.0}, GE, 1.0)
    m.set_objective({x: 1.0})
    assert solver.solve_lp(m).status == solver.INFEASIBLE


def test_unbounded_direction():
    m = LinearModel()
    x = m.add_var("x", -np.inf, np.inf)
    y = m.add_var("y", 0.0)
    m.add_constraint({x: 1.0, y: 1.0}, GE, 1.0)
    m.set_objective({x: 1.0})
    assert solver.solve_lp(m).status == solver.UNBOUNDED


def test_integer_flags_rejected_unless_relaxed():
    m = LinearModel()
    m.add_var("x", 0.0, 1.0, integer=True)
    m.set_objective({0: 1.0})
    with pytest.raises(ModelError):
        solver.solve_lp(m)
    assert solver.solve_lp(m, relax=True).status == solver.OPTIMAL


def test_knapsack_enumeration():
    # max spend within budget 50 for costs (20, 25, 30)
    f = [20.0, 25.0, 30.0]
    m = LinearModel()
    for j in range(3):
        m.add_var(f"y{j}", 0.0, 1.0, integer=True)
    m.add_constraint({j: f[j] for j in range(3)}, LE, 50.0)
    m.set_objective({j: -f[j] for j in range(3)})
    res = solver.solve_milp(m)
    best = max(sum(np.array(bits) * f) for bits in
               [(a, b, c) for a in (0, 1) for b in (0, 1) for c in (0, 1)]
               if sum(np.array(bits) * f) <= 50)
    assert -res.objective == pytest.approx(best) == 50.0
    assert res.x[:3].round().tolist() == [1, 0, 1]


def test_lp_fuzz_small(rng):
    for t in range(120):
        mod = random_model(rng, int(rng.integers(1, 10)), int(rng.integers(0, 12)))
        mine = solver.solve_lp(mod)
        ref = scipy_reference(mod)
        ref_status = {0: "optimal", 2: "infeasible", 3: "unbounded"}[ref.status]
        assert mine.status == ref_status, f"trial {t}"
        if mine.status == solver.OPTIMAL:
            assert mine.objective == pytest.approx(
                ref.fun + mod.objective_const, abs=1e-7, rel=1e-7)
            assert not mod.check_solution(mine.x)


def test_milp_fuzz_small(rng):
    for t in range(60):
        mod = random_model(rng, int(rng.integers(2, 9)),
                           int(rng.integers(1, 9)), integer_frac=0.6)
        mine = solver.solve_milp(mod)
        ref = scipy_reference(mod, integrality=True)
        ref_status = {0: "optimal", 2: "infeasible", 3: "unbounded"}[ref.status]
        assert mine.status == ref_status, f"trial {t}"
        if mine.status == solver.OPTIMAL:
            assert mine.objective == pytest.approx(
                ref.fun + mod.objective_const, abs=2e-6, rel=1e-6)
            assert not mod.check_solution(mine.x)


def test_dual_certificate(rng):
    # primal objective equals dual objective built from row duals + bound duals
    for t in range(40):
        mod = random_model(rng, int(rng.integers(2, 8)), int(rng.integers(1, 10)))
        res = solver.solve_lp(mod)
        if res.status != solver.OPTIMAL:
            continue
        dual_obj = mod.objective_const
        for k, row in enumerate(mod.constraints):
            dual_obj += res.dual_values[k] * row.rhs
        for j, v in enumerate(mod.variables):
            rc = res.reduced_costs[j]
            if rc > 1e-7:
                dual_obj += rc * v.lb
            elif rc < -1e-7:
                dual_obj += rc * v.ub
        assert dual_obj == pytest.approx(res.objective, abs=1e-7, rel=1e-7)


def test_determinism(rng):
    mod = random_model(rng, 8, 10, integer_frac=0.5)
    a = solver.solve_milp(mod)
    b = solver.solve_milp(mod)
    assert a.status == b.status
    if a.status == solver.OPTIMAL:
        assert a.objective == b.objective
        assert np.array_equal(a.x, b.x)
        assert a.stats.iterations == b.stats.iterations
        assert a.stats.nodes == b.stats.nodes


def test_node_limit_reports_incumbent():
    rng = np.random.default_rng(5)
    mod = random_model(rng, 12, 14, integer_frac=0.8)
    res = solver.solve_milp(mod, solver.SolveOptions(node_limit=1))
    assert res.status in (solver.LIMIT, solver.OPTIMAL, solver.INFEASIBLE)
    if res.status == solver.LIMIT:
        assert res.bound is not None


def test_milp_matches_binary_enumeration(rng):
    # exhaustive check over <= 2^8 assignments with continuous tail solved by LP
    for _ in range(10):
        nb = int(rng.integers(2, 6))
        mod = random_model(rng, nb + 2, int(rng.integers(2, 8)))
        for j in range(nb):
            mod.variables[j].is_integer = True
            mod.variables[j].lb, mod.variables[j].ub = 0.0, 1.0
        res = solver.solve_milp(mod)
        best = np.inf
        import itertools
        for bits in itertools.product([0, 1], repeat=nb):
            sub = mod.relaxed()
            for j, b in enumerate(bits):
                sub.variables[j].lb = sub.variables[j].ub = float(b)
            r = solver.solve_lp(sub)
            if r.status == solver.OPTIMAL:
                best = min(best, r.objective)
        if res.status == solver.OPTIMAL:
            assert res.objective == pytest.approx(best, abs=2e-6, rel=1e-6)
        else:
            assert best == np.inf
