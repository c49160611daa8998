"""External MILP solver adapter.

Bridges a LinearModel to an external solver library with the same result
contract as the built-in engine. The solver is picked by name, defaulting
to the EDGEPLACE_EXTERNAL_SOLVER environment variable and then to "highs"
(scipy's bundled HiGHS). Unknown names raise AdapterUnavailableError so
callers can fall back to the built-in engine.
"""

from __future__ import annotations

import os
import time

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds
from scipy.optimize import LinearConstraint as _SciLinearConstraint
from scipy.optimize import linprog, milp

from .linear_model import EQ, GE, INF, LE, LinearModel
from .solver import (INFEASIBLE, LIMIT, OPTIMAL, UNBOUNDED, SolveOptions,
                     SolveResult, SolveStats)

ENV_VAR = "EDGEPLACE_EXTERNAL_SOLVER"


class AdapterUnavailableError(RuntimeError):
    """Requested external solver is not configured/installed."""


class SolverFailureError(RuntimeError):
    """External solver ran but failed; message carries its log."""


def _constraint_arrays(model: LinearModel):
    rows, cols, vals = [], [], []
    lo = np.empty(model.num_constraints)
    hi = np.empty(model.num_constraints)
    for k, c in enumerate(model.constraints):
        for j, v in c.coeffs.items():
            rows.append(k)
            cols.append(j)
            vals.append(v)
        if c.sense == LE:
            lo[k], hi[k] = -np.inf, c.rhs
        elif c.sense == GE:
            lo[k], hi[k] = c.rhs, np.inf
        else:
            lo[k], hi[k] = c.rhs, c.rhs
    A = sp.csr_matrix((vals, (rows, cols)),
                      shape=(model.num_constraints, model.num_vars))
    return A, lo, hi


def _cost_vector(model: LinearModel) -> np.ndarray:
    c = np.zeros(model.num_vars)
    for j, v in model.objective.items():
        c[j] = v
    return c


def external_adapter(model: LinearModel, options: SolveOptions | None = None,
                     solver_name: str | None = None) -> SolveResult:
    """Solve with the configured external solver (LP duals via linprog)."""
    name = solver_name or os.environ.get(ENV_VAR, "highs")
    if name != "highs":
        raise AdapterUnavailableError(
            f"external solver {name!r} is not available; set {ENV_VAR}=highs "
            "or pass solver_name='highs'")
    options = options or SolveOptions()
    if model.integer_indices:
        return _solve_milp_highs(model, options)
    return _solve_lp_highs(model, options)


def _bounds(model: LinearModel) -> Bounds:
    lb = np.array([v.lb for v in model.variables])
    ub = np.array([v.ub for v in model.variables])
    return Bounds(lb, ub)


def _solve_lp_highs(model: LinearModel, options: SolveOptions) -> SolveResult:
    t0 = time.perf_counter()
    A, lo, hi = _constraint_arrays(model)
    c = _cost_vector(model)
    b = _bounds(model)
    # split ranged rows into ub/eq form for linprog
    eq = np.isfinite(lo) & np.isfinite(hi) & (lo == hi)
    ub_rows = np.isfinite(hi) & ~eq
    lb_rows = np.isfinite(lo) & ~eq
    A_ub = sp.vstack([A[ub_rows], -A[lb_rows]]) if (ub_rows.any() or lb_rows.any()) else None
    b_ub = np.concatenate([hi[ub_rows], -lo[lb_rows]]) if A_ub is not None else None
    A_eq = A[eq] if eq.any() else None
    b_eq = lo[eq] if eq.any() else None
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=np.column_stack([b.lb, b.ub]), method="highs")
    stats = SolveStats(iterations=int(getattr(res, "nit", 0) or 0),
                       wall_time=time.perf_counter() - t0)
    if res.status == 2:
        return SolveResult(INFEASIBLE, None, None, stats=stats)
    if res.status == 3:
        return SolveResult(UNBOUNDED, None, None, stats=stats)
    if res.status != 0:
        raise SolverFailureError(f"highs linprog failed: {res.message}")
    # reassemble row duals in original order
    duals = np.zeros(model.num_constraints)
    if A_ub is not None:
        marg = res.ineqlin.marginals
        n_up = int(ub_rows.sum())
        duals[np.flatnonzero(ub_rows)] += marg[:n_up]
        duals[np.flatnonzero(lb_rows)] += -marg[n_up:]
    if A_eq is not None:
        duals[np.flatnonzero(eq)] = res.eqlin.marginals
    obj = float(res.fun) + model.objective_const
    return SolveResult(OPTIMAL, obj, res.x, dual_values=duals,
                       reduced_costs=res.lower.marginals + res.upper.marginals,
                       bound=obj, stats=stats)


def _solve_milp_highs(model: LinearModel, options: SolveOptions) -> SolveResult:
    t0 = time.perf_counter()
    A, lo, hi = _constraint_arrays(model)
    c = _cost_vector(model)
    integrality = np.zeros(model.num_vars)
    integrality[model.integer_indices] = 1
    opts = {"mip_rel_gap": options.gap_rel, "presolve": True,
            "mip_abs_gap": options.gap_abs,
            "primal_feasibility_tolerance": 1e-9,
            "dual_feasibility_tolerance": 1e-9}
    if options.time_limit is not None:
        opts["time_limit"] = options.time_limit
    if options.node_limit is not None:
        opts["node_limit"] = options.node_limit
    cons = _SciLinearConstraint(A, lo, hi) if model.num_constraints else []
    res = milp(c, constraints=cons, integrality=integrality,
               bounds=_bounds(model), options=opts)
    stats = SolveStats(nodes=int(getattr(res, "mip_node_count", 0) or 0),
                       wall_time=time.perf_counter() - t0)
    if res.status == 0:
        obj = float(res.fun) + model.objective_const
        bound = float(res.mip_dual_bound) + model.objective_const \
            if res.mip_dual_bound is not None else obj
        return SolveResult(OPTIMAL, obj, res.x, bound=bound, stats=stats)
    if res.status == 1:  # iteration / node / time limit
        obj = float(res.fun) + model.objective_const if res.x is not None else None
        bound = float(res.mip_dual_bound) + model.objective_const \
            if getattr(res, "mip_dual_bound", None) is not None else None
        return SolveResult(LIMIT, obj, res.x, bound=bound, stats=stats)
    if res.status == 2:
        return SolveResult(INFEASIBLE, None, None, stats=stats)
    if res.status == 3:
        return SolveResult(UNBOUNDED, None, None, stats=stats)
    raise SolverFailureError(f"highs milp failed: {res.message}")


def get_backend(name: str):
    """'builtin' or 'external' -> callable(model, options) -> SolveResult."""
    from . import solver as _builtin

    if name == "builtin":
        def run(model, options=None):
            if model.integer_indices:
                return _builtin.solve_milp(model, options)
            return _builtin.solve_lp(model, options)
        return run
    if name == "external":
        return external_adapter
    raise ValueError(f"unknown backend {name!r} (builtin|external)")
