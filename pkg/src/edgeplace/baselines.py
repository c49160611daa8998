"""Placement schemes: the robust solver and the comparison baselines.

Every scheme returns a PlacementSolution with the placement vector, its
first-stage spend, and the scheme's own in-model objective. BSPA and HEU
deliberately ignore the minimum-placement count (their formulations only
know the budget); the evaluation harness reports violations instead of
patching them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .external import get_backend
from .instance import NetworkInstance
from .linear_model import EQ, GE, LE, LinearModel
from .moments import DemandSpec, worst_case_distribution
from .recourse import theta_table
from .reformulation import ReformulationOptions, build_milp, extract_placement
from .solver import LIMIT, OPTIMAL, SolveOptions


class InfeasibleProblemError(RuntimeError):
    """No placement satisfies budget / minimum-count constraints."""


class SolverLimitError(RuntimeError):
    """Backend stopped on a node/time limit before proving optimality."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


@dataclass
class PlacementSolution:
    y: np.ndarray               # (J,) 0/1 ints
    scheme: str
    first_stage_cost: float
    objective: float | None     # scheme's own in-model objective
    meta: dict = field(default_factory=dict)

    @property
    def num_placed(self) -> int:
        return int(self.y.sum())


def _run(model: LinearModel, backend: str, options: SolveOptions | None):
    res = get_backend(backend)(model, options)
    if res.status == LIMIT:
        raise SolverLimitError(
            f"{model.name}: stopped at limit (incumbent={res.objective}, "
            f"bound={res.bound})", result=res)
    if res.status != OPTIMAL:
        raise InfeasibleProblemError(f"{model.name}: {res.status}")
    return res


def _recourse_rows(model: LinearModel, inst: NetworkInstance, y_idx,
                   demand: np.ndarray, tag: str) -> tuple[list, list]:
    """Allocation variables and rows for one demand vector; returns (x, u)."""
    I, J = inst.num_areas, inst.num_nodes
    x_idx = [[model.add_var(f"x{tag}[{i},{j}]", 0.0) for j in range(J)]
             for i in range(I)]
    u_idx = [model.add_var(f"u{tag}[{i}]", 0.0) for i in range(I)]
    for i in range(I):
        row = {x_idx[i][j]: 1.0 for j in range(J)}
        row[u_idx[i]] = 1.0
        model.add_constraint(row, EQ, float(demand[i]), f"serve{tag}[{i}]")
        for j in range(J):
            model.add_constraint(
                {x_idx[i][j]: 1.0, y_idx[j]: -float(inst.capacity[i, j])},
                LE, 0.0, f"cap{tag}[{i},{j}]")
        if demand[i] > 0:  # ratio-form delay row, multiplied through by demand
            model.add_constraint(
                {x_idx[i][j]: float(inst.delay[i, j]) for j in range(J)},
                LE, float(inst.delay_threshold[i] * demand[i]),
                f"delay{tag}[{i}]")
    return x_idx, u_idx


def _first_stage(model: LinearModel, inst: NetworkInstance) -> list:
    y_idx = [model.add_var(f"y[{j}]", 0.0, 1.0, integer=True)
             for j in range(inst.num_nodes)]
    model.add_constraint(
        {y_idx[j]: float(inst.placement_cost[j]) for j in range(inst.num_nodes)},
        LE, float(inst.budget), "budget")
    model.add_constraint(dict.fromkeys(y_idx, 1.0), GE, float(inst.min_nodes),
                         "reliability")
    return y_idx


def solve_det(inst: NetworkInstance, spec: DemandSpec, backend: str = "builtin",
              options: SolveOptions | None = None) -> PlacementSolution:
    """Deterministic placement at point demand equal to the forecast mean."""
    demand = spec.mu_bar
    model = LinearModel(name="det")
    y_idx = _first_stage(model, inst)
    x_idx, u_idx = _recourse_rows(model, inst, y_idx, demand, "")
    obj = {y_idx[j]: float(inst.placement_cost[j]) for j in range(inst.num_nodes)}
    for i in range(inst.num_areas):
        for j in range(inst.num_nodes):
            obj[x_idx[i][j]] = float(inst.delay_weight * inst.delay[i, j])
        obj[u_idx[i]] = float(inst.unmet_penalty[i])
    model.set_objective(obj)
    res = _run(model, backend, options)
    y = extract_placement(model, res.x, inst.num_nodes)
    return PlacementSolution(y, "det", float(inst.placement_cost @ y),
                             res.objective, {"stats": res.stats})


def solve_so(inst: NetworkInstance, spec: DemandSpec, backend: str = "builtin",
             options: SolveOptions | None = None) -> PlacementSolution:
    """Two-stage stochastic program on the uniform support distribution."""
    xi = spec.support
    N = len(xi)
    model = LinearModel(name="so")
    y_idx = _first_stage(model, inst)
    obj = {y_idx[j]: float(inst.placement_cost[j]) for j in range(inst.num_nodes)}
    p = 1.0 / N
    for n in range(N):
        demand = np.full(inst.num_areas, float(xi[n]))
        x_idx, u_idx = _recourse_rows(model, inst, y_idx, demand, f"_{n}")
        for i in range(inst.num_areas):
            for j in range(inst.num_nodes):
                obj[x_idx[i][j]] = float(p * inst.delay_weight * inst.delay[i, j])
            obj[u_idx[i]] = float(p * inst.unmet_penalty[i])
    model.set_objective(obj)
    res = _run(model, backend, options)
    y = extract_placement(model, res.x, inst.num_nodes)
    return PlacementSolution(y, "so", float(inst.placement_cost @ y),
                             res.objective, {"stats": res.stats})


def solve_bspa(inst: NetworkInstance, backend: str = "builtin",
               options: SolveOptions | None = None) -> PlacementSolution:
    """Budget-spending priority: maximize placement spend within budget."""
    model = LinearModel(name="bspa")
    y_idx = [model.add_var(f"y[{j}]", 0.0, 1.0, integer=True)
             for j in range(inst.num_nodes)]
    f = {y_idx[j]: float(inst.placement_cost[j]) for j in range(inst.num_nodes)}
    model.add_constraint(f, LE, float(inst.budget), "budget")
    model.set_objective({k: -v for k, v in f.items()})  # maximize spend
    res = _run(model, backend, options)
    y = extract_placement(model, res.x, inst.num_nodes)
    spend = float(inst.placement_cost @ y)
    return PlacementSolution(y, "bspa", spend, spend, {"stats": res.stats})


def solve_heu(inst: NetworkInstance, spec: DemandSpec) -> PlacementSolution:
    """Demand-priority heuristic: highest-demand areas claim their nearest
    unplaced node while the budget lasts."""
    order = sorted(range(inst.num_areas),
                   key=lambda i: (-spec.mu_bar[i], i))
    placed: list[int] = []
    spent = 0.0
    for i in order:
        open_nodes = [j for j in range(inst.num_nodes) if j not in placed]
        if not open_nodes:
            break
        j = min(open_nodes, key=lambda jj: (inst.delay[i, jj], jj))
        if spent + inst.placement_cost[j] > inst.budget:
            break  # budget exhausted
        placed.append(j)
        spent += float(inst.placement_cost[j])
    y = np.zeros(inst.num_nodes, dtype=int)
    y[placed] = 1
    return PlacementSolution(y, "heu", spent, spent,
                             {"order": [int(i) for i in order]})


def solve_ddu(inst: NetworkInstance, spec: DemandSpec,
              reform: ReformulationOptions | None = None,
              backend: str = "builtin",
              options: SolveOptions | None = None,
              lazy: bool | None = None) -> PlacementSolution:
    """The robust scheme with the decision-dependent ambiguity set.

    lazy=None enables delayed epigraph-row generation automatically once
    the full row count gets large; the optimum is identical either way
    (the delayed solver terminates only when every omitted row holds).
    """
    from .reformulation import solve_with_delayed_rows

    full_rows = inst.num_areas * spec.num_support * (2 * inst.num_nodes + 1)
    if lazy is None:
        lazy = full_rows >= 5000
    if lazy:
        res, model, rounds = solve_with_delayed_rows(
            inst, spec, reform, backend=backend, solve_options=options)
        meta_extra = {"delayed_rounds": rounds}
        if res.status == LIMIT:
            raise SolverLimitError(
                f"{model.name}: stopped at limit (incumbent={res.objective}, "
                f"bound={res.bound})", result=res)
        if res.status != OPTIMAL:
            raise InfeasibleProblemError(f"{model.name}: {res.status}")
    else:
        model = build_milp(inst, spec, reform)
        res = _run(model, backend, options)
        meta_extra = {}
    y = extract_placement(model, res.x, inst.num_nodes)
    return PlacementSolution(y, "ddu", float(inst.placement_cost @ y),
                             res.objective,
                             {"stats": res.stats,
                              "model_rows": model.num_constraints,
                              **meta_extra})


def solve_dro_diu(inst: NetworkInstance, spec: DemandSpec,
                  reform: ReformulationOptions | None = None,
                  backend: str = "builtin",
                  options: SolveOptions | None = None) -> PlacementSolution:
    """Exogenous-set variant: identical model on the zero-impact spec."""
    sol = solve_ddu(inst, spec.exogenous_copy(), reform, backend, options)
    sol.scheme = "diu"
    return sol


def in_model_objective(scheme: str, inst: NetworkInstance, spec: DemandSpec,
                       y) -> float:
    """Recompute a scheme's objective from its placement (consistency check)."""
    from .evaluation import allocate_actual

    y = np.asarray(y, dtype=float)
    fy = float(inst.placement_cost @ np.asarray(y))
    if scheme in ("bspa", "heu"):
        return fy
    if scheme == "det":
        _, _, cost = allocate_actual(inst, y, spec.mu_bar)
        return fy + cost
    if scheme == "so":
        total = 0.0
        for xin in spec.support:
            _, _, cost = allocate_actual(
                inst, y, np.full(inst.num_areas, float(xin)))
            total += cost
        return fy + total / len(spec.support)
    if scheme in ("ddu", "diu"):
        use = spec if scheme == "ddu" else spec.exogenous_copy()
        tab = theta_table(inst, use.support, y)
        _, wc = worst_case_distribution(use, y, tab)
        return fy + wc
    raise ValueError(f"unknown scheme {scheme!r}")


def solve_scheme(scheme: str, inst: NetworkInstance, spec: DemandSpec,
                 reform: ReformulationOptions | None = None,
                 backend: str = "builtin",
                 options: SolveOptions | None = None) -> PlacementSolution:
    if scheme == "ddu":
        return solve_ddu(inst, spec, reform, backend, options)
    if scheme == "diu":
        return solve_dro_diu(inst, spec, reform, backend, options)
    if scheme == "det":
        return solve_det(inst, spec, backend, options)
    if scheme == "so":
        return solve_so(inst, spec, backend, options)
    if scheme == "bspa":
        return solve_bspa(inst, backend, options)
    if scheme == "heu":
        return solve_heu(inst, spec)
    raise ValueError(f"unknown scheme {scheme!r}")


SCHEMES = ("ddu", "diu", "det", "so", "bspa", "heu")
