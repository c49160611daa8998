"""Scratch: fuzz built-in simplex/B&B against scipy HiGHS. Not shipped."""
import numpy as np
import time
from scipy.optimize import linprog, milp, LinearConstraint as SciLC, Bounds

from edgeplace.linear_model import LinearModel, LE, GE, EQ
from edgeplace import solver


def random_model(rng, n, m, integer_frac=0.0, ensure_bounded=True):
    mod = LinearModel()
    for j in range(n):
        kind = rng.integers(0, 4)
        if kind == 0:
            lb, ub = 0.0, float(rng.uniform(1, 10))
        elif kind == 1:
            lb, ub = float(rng.uniform(-5, 0)), float(rng.uniform(0, 5))
        elif kind == 2:
            lb, ub = 0.0, np.inf
        else:
            lb, ub = -np.inf, np.inf
        is_int = rng.random() < integer_frac
        if is_int:
            lb, ub = 0.0, float(rng.integers(1, 4))
        mod.add_var(f"x{j}", lb, ub, integer=is_int)
    for k in range(m):
        nnz = rng.integers(1, min(n, 5) + 1)
        cols = rng.choice(n, size=nnz, replace=False)
        coeffs = {int(j): float(rng.normal()) for j in cols}
        sense = [LE, GE, EQ][rng.integers(0, 3)]
        rhs = float(rng.normal() * 3)
        mod.add_constraint(coeffs, sense, rhs)
    obj = {j: float(rng.normal()) for j in range(n)}
    mod.set_objective(obj, float(rng.normal()))
    if ensure_bounded:
        # box all infinite bounds to keep scipy comparisons clean
        for v in mod.variables:
            if not np.isfinite(v.lb):
                v.lb = -50.0
            if not np.isfinite(v.ub):
                v.ub = 50.0
    return mod


def scipy_solve(mod, integrality=False):
    n = mod.num_vars
    c = np.zeros(n)
    for j, v in mod.objective.items():
        c[j] = v
    A, lo, hi = [], [], []
    for row in mod.constraints:
        a = np.zeros(n)
        for j, v in row.coeffs.items():
            a[j] = v
        A.append(a)
        if row.sense == LE:
            lo.append(-np.inf); hi.append(row.rhs)
        elif row.sense == GE:
            lo.append(row.rhs); hi.append(np.inf)
        else:
            lo.append(row.rhs); hi.append(row.rhs)
    lb = np.array([v.lb for v in mod.variables])
    ub = np.array([v.ub for v in mod.variables])
    integ = np.array([1 if v.is_integer else 0 for v in mod.variables])
    cons = SciLC(np.array(A), np.array(lo), np.array(hi)) if A else []
    res = milp(c, constraints=cons, bounds=Bounds(lb, ub),
               integrality=integ if integrality else np.zeros(n),
               options={"mip_rel_gap": 0.0})
    return res


def fuzz_lp(trials=300):
    rng = np.random.default_rng(0)
    bad = 0
    for t in range(trials):
        n = int(rng.integers(1, 12))
        m = int(rng.integers(0, 15))
        mod = random_model(rng, n, m)
        mine = solver.solve_lp(mod)
        ref = scipy_solve(mod)
        ref_status = {0: "optimal", 2: "infeasible", 3: "unbounded"}.get(ref.status, str(ref.status))
        if mine.status != ref_status:
            print(f"[{t}] STATUS mine={mine.status} scipy={ref_status}")
            bad += 1
            continue
        if mine.status == "optimal":
            ref_obj = ref.fun + mod.objective_const
            if abs(mine.objective - ref_obj) > 1e-6 * max(1, abs(ref_obj)):
                print(f"[{t}] OBJ mine={mine.objective} scipy={ref_obj}")
                bad += 1
            viol = mod.check_solution(mine.x)
            if viol:
                print(f"[{t}] VIOLATIONS {viol}")
                bad += 1
            # dual certificate check
            pi, red = mine.dual_values, mine.reduced_costs
            dualobj = 0.0
            for k, row in enumerate(mod.constraints):
                dualobj += pi[k] * row.rhs
            for j, v in enumerate(mod.variables):
                stat_val = mine.x[j]
                if red[j] > 1e-7 and np.isfinite(v.lb):
                    dualobj += red[j] * v.lb
                elif red[j] < -1e-7 and np.isfinite(v.ub):
                    dualobj += red[j] * v.ub
            dualobj += mod.objective_const
            if abs(dualobj - mine.objective) > 1e-6 * max(1, abs(mine.objective)):
                print(f"[{t}] DUAL mismatch mine={mine.objective} dual={dualobj}")
                bad += 1
    print(f"LP fuzz done, {bad} bad of {trials}")
    return bad


def fuzz_milp(trials=150):
    rng = np.random.default_rng(1)
    bad = 0
    for t in range(trials):
        n = int(rng.integers(2, 10))
        m = int(rng.integers(1, 10))
        mod = random_model(rng, n, m, integer_frac=0.6)
        mine = solver.solve_milp(mod)
        ref = scipy_solve(mod, integrality=True)
        ref_status = {0: "optimal", 2: "infeasible", 3: "unbounded"}.get(ref.status, str(ref.status))
        if mine.status != ref_status:
            print(f"[{t}] STATUS mine={mine.status} scipy={ref_status}")
            bad += 1
            continue
        if mine.status == "optimal":
            ref_obj = ref.fun + mod.objective_const
            if abs(mine.objective - ref_obj) > 1e-5 * max(1, abs(ref_obj)):
                print(f"[{t}] OBJ mine={mine.objective} scipy={ref_obj}")
                bad += 1
            viol = mod.check_solution(mine.x)
            if viol:
                print(f"[{t}] VIOLATIONS {viol}")
                bad += 1
    print(f"MILP fuzz done, {bad} bad of {trials}")
    return bad


def bench(m_rows=900, n_cols=220):
    rng = np.random.default_rng(7)
    mod = LinearModel()
    x0 = rng.uniform(1, 10, size=n_cols)
    for j in range(n_cols):
        mod.add_var(f"x{j}", 0.0, float(x0[j] + rng.uniform(5, 50)))
    for k in range(m_rows):
        nnz = rng.integers(2, 6)
        cols = rng.choice(n_cols, size=nnz, replace=False)
        coeffs = {int(j): float(rng.normal()) for j in cols}
        lhs0 = sum(c * x0[j] for j, c in coeffs.items())
        sense = LE if rng.random() < 0.7 else GE
        margin = float(rng.uniform(0.0, 5.0))
        rhs = lhs0 + margin if sense == LE else lhs0 - margin
        mod.add_constraint(coeffs, sense, rhs)
    mod.set_objective({j: float(rng.normal()) for j in range(n_cols)})
    t0 = time.perf_counter()
    res = solver.solve_lp(mod)
    t1 = time.perf_counter()
    print(f"bench {m_rows}x{n_cols}: status={res.status} iters={res.stats.iterations} "
          f"time={t1-t0:.2f}s")
    if res.status == "optimal":
        ref = scipy_solve(mod)
        print(f"  obj mine={res.objective:.8f} scipy={ref.fun:.8f}")


if __name__ == "__main__":
    fuzz_lp()
    fuzz_milp()
    bench()
