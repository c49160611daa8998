"""Second-stage (recourse) values, exact two ways.

For a fixed placement y and realized demand, the per-area reallocation LP
has a small dual whose optimum sits at one of 2J+1 vertices. Enumerating
those vertices gives a closed-form value that is affine in y per candidate:

* capacity branch, candidate c in nodes + {drop}: the dual mean price is
  the candidate's unit delay cost (the virtual drop candidate prices at the
  unmet penalty), and every strictly closer open node discounts it;
* delay branch, pivot q: the unmet penalty is throttled by the average
  delay threshold through pivot q's delay, with the same discounting.

The reference oracle `inner_lp` solves the same LP with the built-in
simplex; `theta_table` can cross-check every entry against it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .instance import NetworkInstance
from .linear_model import EQ, LE, LinearModel
from . import solver

CAPACITY, DELAY = "capacity", "delay"

DROP = -1  # virtual candidate index: serve nothing beyond open capacity


class AssumptionError(ValueError):
    """The unmet penalty does not dominate every unit delay cost."""


class OracleDisagreementError(AssertionError):
    """Closed form and LP oracle disagree beyond tolerance."""


@dataclass
class CandidateTerm:
    """One dual vertex: value(y, demand) = rate * demand + weights . y"""
    branch: str
    node: int             # node index, or DROP for the virtual candidate
    rate: float
    weights: np.ndarray   # (J,) nonpositive capacity discounts

    def value(self, y: np.ndarray, demand: float) -> float:
        return self.rate * demand + float(self.weights @ y)


@dataclass
class ThetaTable:
    values: np.ndarray        # (I, N)
    winner_node: np.ndarray   # (I, N) int, DROP for virtual candidate
    winner_branch: np.ndarray  # (I, N) of {CAPACITY, DELAY}

    @property
    def shape(self):
        return self.values.shape


def _check_assumption(inst: NetworkInstance) -> None:
    s = inst.unmet_penalty[:, None]
    if np.any(s <= inst.delay_weight * inst.delay):
        i, j = np.argwhere(s <= inst.delay_weight * inst.delay)[0]
        raise AssumptionError(
            f"unmet penalty s[{i}] must exceed rho*d[{i},{j}]")


def candidate_terms(inst: NetworkInstance, i: int) -> list[CandidateTerm]:
    """All dual vertices for area i, in deterministic tie-break order.

    Order: capacity branch over real nodes (ascending index), capacity
    branch for the virtual drop, then delay branch over real nodes.
    """
    _check_assumption(inst)
    rho = inst.delay_weight
    d = inst.delay[i]
    cap = inst.capacity[i]
    s = float(inst.unmet_penalty[i])
    delta = float(inst.delay_threshold[i])
    J = inst.num_nodes
    terms = []
    for c in range(J):
        a = rho * d[c]
        w = np.where(d < d[c], cap * rho * (d - d[c]), 0.0)
        terms.append(CandidateTerm(CAPACITY, c, a, w))
    w = cap * (rho * d - s)  # every node is strictly cheaper than dropping
    terms.append(CandidateTerm(CAPACITY, DROP, s, w))
    for q in range(J):
        rate = s + (rho - s / d[q]) * delta
        w = np.where(d < d[q], cap * (s / d[q]) * (d - d[q]), 0.0)
        terms.append(CandidateTerm(DELAY, q, rate, w))
    return terms


def theta_closed_form(inst: NetworkInstance, y, i: int, demand: float
                      ) -> tuple[float, int, str]:
    """Recourse value for area i at the given demand, plus the winner.

    Returns (value, node, branch); node is DROP for the virtual candidate.
    Ties break toward the earliest candidate in `candidate_terms` order.
    """
    y = np.asarray(y, dtype=float)
    best = -np.inf
    winner = (DROP, CAPACITY)
    for term in candidate_terms(inst, i):
        v = term.value(y, demand)
        if v > best + 1e-15:
            best = v
            winner = (term.node, term.branch)
    return best, winner[0], winner[1]


def theta_table(inst: NetworkInstance, support, y, verify: bool = False,
                verify_tol: float = 1e-6) -> ThetaTable:
    """Closed-form recourse values for every (area, support point).

    verify=True additionally solves the per-entry LP and raises
    OracleDisagreementError on any mismatch beyond verify_tol.
    """
    support = np.asarray(support, dtype=float)
    y = np.asarray(y, dtype=float)
    I, N = inst.num_areas, len(support)
    values = np.zeros((I, N))
    w_node = np.zeros((I, N), dtype=int)
    w_branch = np.empty((I, N), dtype=object)
    for i in range(I):
        terms = candidate_terms(inst, i)
        rates = np.array([t.rate for t in terms])
        offsets = np.array([float(t.weights @ y) for t in terms])
        vals = rates[:, None] * support[None, :] + offsets[:, None]
        pick = np.argmax(vals, axis=0)  # first max wins: tie-break order
        values[i] = vals[pick, np.arange(N)]
        w_node[i] = [terms[k].node for k in pick]
        w_branch[i] = [terms[k].branch for k in pick]
    table = ThetaTable(values, w_node, w_branch)
    if verify:
        for i in range(I):
            for n in range(N):
                ref, _, _ = _area_lp_value(inst, y, i, float(support[n]))
                if abs(ref - values[i, n]) > verify_tol:
                    raise OracleDisagreementError(
                        f"closed form {values[i, n]!r} != LP {ref!r} at "
                        f"area={i} support_index={n} y={y.tolist()}")
    return table


def _area_lp_value(inst: NetworkInstance, y, i: int, demand: float):
    rho = inst.delay_weight
    J = inst.num_nodes
    model = LinearModel(name=f"recourse_{i}")
    for j in range(J):
        model.add_var(f"x{j}", 0.0, float(inst.capacity[i, j] * y[j]))
    u = model.add_var("u", 0.0)
    model.add_constraint({**{j: 1.0 for j in range(J)}, u: 1.0}, EQ, demand,
                         "serve_or_drop")
    model.add_constraint({j: float(inst.delay[i, j]) for j in range(J)}, LE,
                         float(inst.delay_threshold[i] * demand), "avg_delay")
    obj = {j: float(rho * inst.delay[i, j]) for j in range(J)}
    obj[u] = float(inst.unmet_penalty[i])
    model.set_objective(obj)
    res = solver.solve_lp(model)
    if res.status != solver.OPTIMAL:
        raise RuntimeError(f"recourse LP not optimal: {res.status}")
    return res.objective, res.x[:J], res.x[J]


def inner_lp(inst: NetworkInstance, y, demands):
    """Reference oracle: solve the recourse LP for every area.

    demands is a length-I vector of realized demand. Returns
    (total objective, allocation (I, J), unmet (I,)).
    """
    y = np.asarray(y, dtype=float)
    demands = np.asarray(demands, dtype=float)
    I, J = inst.num_areas, inst.num_nodes
    x = np.zeros((I, J))
    u = np.zeros(I)
    total = 0.0
    for i in range(I):
        val, xi, ui = _area_lp_value(inst, y, i, float(demands[i]))
        total += val
        x[i] = xi
        u[i] = ui
    return total, x, u
