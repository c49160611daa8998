"""Out-of-sample Monte-Carlo evaluation of placement decisions.

Scenarios are drawn consistently with the decision-dependent moments of the
scheme under test (a placement raises the demand mean and shrinks the
variance where its impact factors say so), then the second stage is
re-solved per scenario and realized costs are aggregated. Sub-seeds are
derived from (seed, scenario, area), so schemes evaluated under a shared
base seed are paired scenario-by-scenario.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import truncnorm

from .instance import GeneratorConfig, NetworkInstance, generate_instance
from .moments import DemandSpec, WorstCaseDistribution, moment_values
from . import recourse


@dataclass
class CostBreakdown:
    placement: float
    delay: float
    unmet: float

    @property
    def total(self) -> float:
        return self.placement + self.delay + self.unmet


@dataclass
class SchemeStats:
    scheme: str
    y: np.ndarray
    average: float
    worst: float
    breakdown: CostBreakdown           # scenario averages + placement
    costs: np.ndarray                  # (S,) per-scenario totals
    budget_ok: bool
    kmin_ok: bool


@dataclass
class EvaluationReport:
    scenario_count: int
    seed: int
    mode: str
    stats: dict = field(default_factory=dict)  # scheme -> SchemeStats

    def rows(self) -> list[dict]:
        out = []
        for st in self.stats.values():
            out.append({
                "scheme": st.scheme,
                "stat": "average", "value": st.average,
            })
            out.append({"scheme": st.scheme, "stat": "worst", "value": st.worst})
            out.append({"scheme": st.scheme, "stat": "placement_cost",
                        "value": st.breakdown.placement})
            out.append({"scheme": st.scheme, "stat": "delay_cost",
                        "value": st.breakdown.delay})
            out.append({"scheme": st.scheme, "stat": "unmet_cost",
                        "value": st.breakdown.unmet})
        return out


def uniform_draws(count: int, num_areas: int, seed: int) -> np.ndarray:
    """(count, I) uniforms, one generator per (seed, scenario, area)."""
    u = np.empty((count, num_areas))
    for k in range(count):
        for i in range(num_areas):
            u[k, i] = np.random.default_rng((seed, k, i)).random()
    return u


def demand_from_uniforms(spec: DemandSpec, y, uniforms: np.ndarray,
                         mode: str = "truncnorm",
                         worst_case: WorstCaseDistribution | None = None
                         ) -> np.ndarray:
    """Inverse-CDF transform of shared uniforms into demand scenarios."""
    mv = moment_values(spec, y)
    lo, hi = float(spec.support[0]), float(spec.support[-1])
    out = np.empty_like(uniforms)
    if mode == "truncnorm":
        for i in range(spec.num_areas):
            mu = float(mv.mean[i])
            sd = float(np.sqrt(mv.variance[i]))
            if sd <= 0:
                out[:, i] = min(max(mu, lo), hi)
                continue
            a, b = (lo - mu) / sd, (hi - mu) / sd
            out[:, i] = truncnorm.ppf(uniforms[:, i], a, b, loc=mu, scale=sd)
        return out
    if mode == "worst_case":
        if worst_case is None:
            raise ValueError("worst_case mode needs a WorstCaseDistribution")
        for i in range(spec.num_areas):
            cum = np.cumsum(worst_case.probabilities[i])
            idx = np.searchsorted(cum, uniforms[:, i], side="right")
            idx = np.minimum(idx, len(spec.support) - 1)
            out[:, i] = spec.support[idx]
        return out
    raise ValueError(f"unknown sampling mode {mode!r}")


def sample_actual_demand(spec: DemandSpec, y, count: int, seed: int,
                         mode: str = "truncnorm",
                         worst_case: WorstCaseDistribution | None = None
                         ) -> np.ndarray:
    """(count, I) demand matrix consistent with the placement's moments."""
    if count < 1:
        raise ValueError("need at least one scenario")
    u = uniform_draws(count, spec.num_areas, seed)
    return demand_from_uniforms(spec, y, u, mode, worst_case)


def allocate_actual(inst: NetworkInstance, y, demand):
    """Re-optimized workload split for one realized demand vector.

    Nearest-open-first waterfilling under the per-area delay budget is the
    exact LP optimum here: serving at a closer node both costs less and
    spends less of the delay budget, and every served unit beats dropping.
    Returns (x, u, second-stage cost).
    """
    y = np.asarray(y)
    demand = np.asarray(demand, dtype=float)
    I, J = inst.num_areas, inst.num_nodes
    x = np.zeros((I, J))
    u = np.zeros(I)
    cost = 0.0
    open_nodes = np.flatnonzero(y > 0.5)
    for i in range(I):
        rem = float(demand[i])
        budget = float(inst.delay_threshold[i] * demand[i])
        order = open_nodes[np.lexsort((open_nodes, inst.delay[i, open_nodes]))]
        for j in order:
            if rem <= 0 or budget <= 0:
                break
            d = float(inst.delay[i, j])
            take = min(float(inst.capacity[i, j]), rem, budget / d)
            if take <= 0:
                continue
            x[i, j] = take
            rem -= take
            budget -= d * take
            cost += inst.delay_weight * d * take
        u[i] = max(rem, 0.0)
        cost += float(inst.unmet_penalty[i] * u[i])
    return x, u, cost


def allocate_actual_lp(inst: NetworkInstance, y, demand):
    """LP-oracle twin of allocate_actual (built-in simplex per area)."""
    total, x, u = recourse.inner_lp(inst, y, demand)
    return x, u, total


def _allocate_batch(inst: NetworkInstance, y, demands: np.ndarray):
    """(delay cost, unmet cost) per scenario, vectorized waterfilling."""
    S = demands.shape[0]
    delay_cost = np.zeros(S)
    unmet_cost = np.zeros(S)
    open_nodes = np.flatnonzero(np.asarray(y) > 0.5)
    for i in range(inst.num_areas):
        rem = demands[:, i].astype(float).copy()
        budget = inst.delay_threshold[i] * demands[:, i].astype(float)
        order = open_nodes[np.lexsort((open_nodes, inst.delay[i, open_nodes]))]
        for j in order:
            d = float(inst.delay[i, j])
            take = np.minimum(np.minimum(float(inst.capacity[i, j]), rem),
                              budget / d)
            np.maximum(take, 0.0, out=take)
            rem -= take
            budget -= d * take
            delay_cost += inst.delay_weight * d * take
        unmet_cost += inst.unmet_penalty[i] * np.maximum(rem, 0.0)
    return delay_cost, unmet_cost


def actual_cost(inst: NetworkInstance, y, x, u) -> CostBreakdown:
    """Total realized cost split into placement / delay / unmet parts."""
    y = np.asarray(y, dtype=float)
    placement = float(inst.placement_cost @ y)
    delay = float(inst.delay_weight * (inst.delay * x).sum())
    unmet = float(inst.unmet_penalty @ u)
    return CostBreakdown(placement, delay, unmet)


def compare_schemes(inst: NetworkInstance, spec: DemandSpec,
                    placements: dict, scenarios: int = 1000, seed: int = 0,
                    mode: str = "truncnorm",
                    worst_cases: dict | None = None) -> EvaluationReport:
    """Evaluate each scheme's placement on its own decision-dependent
    scenarios, paired across schemes through shared uniforms."""
    uniforms = uniform_draws(scenarios, spec.num_areas, seed)
    report = EvaluationReport(scenarios, seed, mode)
    for scheme, y in placements.items():
        y = np.asarray(y)
        wc = (worst_cases or {}).get(scheme)
        demands = demand_from_uniforms(spec, y, uniforms, mode, wc)
        delay_c, unmet_c = _allocate_batch(inst, y, demands)
        placement = float(inst.placement_cost @ y.astype(float))
        totals = placement + delay_c + unmet_c
        avg = math.fsum(totals) / scenarios
        breakdown = CostBreakdown(placement,
                                  math.fsum(delay_c) / scenarios,
                                  math.fsum(unmet_c) / scenarios)
        report.stats[scheme] = SchemeStats(
            scheme=scheme, y=y,
            average=avg, worst=float(totals.max()),
            breakdown=breakdown, costs=totals,
            budget_ok=bool(placement <= inst.budget + 1e-9),
            kmin_ok=bool(y.sum() >= inst.min_nodes),
        )
    return report


# ---------------------------------------------------------------------------
# impact-factor shapes and parameter sweeps
# ---------------------------------------------------------------------------

DDU_FORMS = ("decrease", "uni", "no", "max")


def with_impact_form(inst: NetworkInstance, spec: DemandSpec,
                     form: str) -> DemandSpec:
    """Swap the impact-factor shape; variance floor is re-derived."""
    I, J = spec.num_areas, spec.num_nodes
    if form == "decrease":
        return spec
    if form == "uni":
        psi = np.full((I, J), 1.0 / J)
    elif form == "no":
        psi = np.zeros((I, J))
    elif form == "max":
        psi = np.zeros((I, J))
        nearest = np.argmin(inst.delay, axis=0)  # closest area per node
        for j in range(J):
            psi[nearest[j], j] = 1.0
        row = psi.sum(axis=1)
        psi *= np.minimum(1.0, 1.0 / np.maximum(row, 1e-300))[:, None]
    else:
        raise ValueError(f"unknown impact form {form!r} (expected one of "
                         f"{DDU_FORMS})")
    floor = spec.sigma_bar * np.sqrt(np.maximum(0.0, 1.0 - psi.sum(axis=1)))
    return replace(spec, psi_mu=psi, psi_sigma=psi.copy(), sigma_floor=floor)


_PARAM_FIELDS = {
    "B": "budget",
    "h": "cost_scale",
    "rho": "delay_weight",
    "delta": "delay_threshold",
    "eps_mu": "eps_mu",
    "eps_sigma": "eps_sigma",
    "b": "decay_rate",
}


@dataclass
class SweepCell:
    param: str
    value: float
    scheme: str
    objective: float | None
    spend: float | None
    y: np.ndarray | None
    report: EvaluationReport | None
    error: str | None = None


def sensitivity_sweep(base: GeneratorConfig, param: str, values,
                      schemes=("ddu",), scenarios: int = 0, seed: int = 0,
                      backend: str = "builtin", include_cuts: bool = False,
                      ddu_form: str = "decrease") -> list[SweepCell]:
    """Regenerate/solve/evaluate over a one-parameter grid.

    Failures are recorded per cell and the sweep continues; param "ddu_form"
    sweeps the impact shape instead of a numeric field.
    """
    from .baselines import solve_scheme
    from .reformulation import ReformulationOptions

    cells: list[SweepCell] = []
    for value in values:
        if param == "ddu_form":
            cfg = base
            form = str(value)
        else:
            if param not in _PARAM_FIELDS:
                raise ValueError(f"unknown sweep parameter {param!r}")
            cfg = replace(base, **{_PARAM_FIELDS[param]: float(value)})
            form = ddu_form
        try:
            inst, spec = generate_instance(cfg)
            spec = with_impact_form(inst, spec, form)
        except Exception as exc:  # record and move on
            for scheme in schemes:
                cells.append(SweepCell(param, value, scheme, None, None, None,
                                       None, error=str(exc)))
            continue
        placements = {}
        for scheme in schemes:
            try:
                sol = solve_scheme(
                    scheme, inst, spec,
                    reform=ReformulationOptions(include_cuts=include_cuts),
                    backend=backend)
                placements[scheme] = sol
            except Exception as exc:
                cells.append(SweepCell(param, value, scheme, None, None, None,
                                       None, error=str(exc)))
        report = None
        if scenarios and placements:
            report = compare_schemes(
                inst, spec, {s: sol.y for s, sol in placements.items()},
                scenarios=scenarios, seed=seed)
        for scheme, sol in placements.items():
            cells.append(SweepCell(param, value, scheme, sol.objective,
                                   sol.first_stage_cost, sol.y, report))
    return cells
