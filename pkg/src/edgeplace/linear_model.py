"""Solver-neutral LP/MILP container.

A LinearModel is a plain data description of a linear program: variables with
bounds and integrality flags, sparse constraint rows, and a minimization
objective. Both the built-in engine and the external adapter consume it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LE = "<="
EQ = "=="
GE = ">="

INF = float("inf")


class ModelError(ValueError):
    """Raised for structurally invalid models (bad bounds, unknown vars)."""


@dataclass
class Variable:
    name: str
    lb: float = 0.0
    ub: float = INF
    is_integer: bool = False


@dataclass
class Constraint:
    name: str
    coeffs: dict[int, float]  # var index -> coefficient
    sense: str                # LE / EQ / GE
    rhs: float


@dataclass
class LinearModel:
    """Minimization LP/MILP with named variables and sparse rows."""

    name: str = "model"
    variables: list[Variable] = field(default_factory=list)
    constraints: list[Constraint] = field(default_factory=list)
    objective: dict[int, float] = field(default_factory=dict)
    objective_const: float = 0.0
    _index: dict[str, int] = field(default_factory=dict, repr=False)

    def add_var(self, name: str, lb: float = 0.0, ub: float = INF,
                integer: bool = False) -> int:
        if name in self._index:
            raise ModelError(f"duplicate variable {name!r}")
        if lb > ub:
            raise ModelError(f"variable {name!r} has lb {lb} > ub {ub}")
        self.variables.append(Variable(name, float(lb), float(ub), integer))
        idx = len(self.variables) - 1
        self._index[name] = idx
        return idx

    def var(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise ModelError(f"unknown variable {name!r}") from None

    def add_constraint(self, coeffs: dict[int, float], sense: str, rhs: float,
                       name: str = "") -> int:
        if sense not in (LE, EQ, GE):
            raise ModelError(f"bad sense {sense!r}")
        n = len(self.variables)
        for j in coeffs:
            if not 0 <= j < n:
                raise ModelError(f"constraint {name!r} references variable #{j}")
        row = {j: float(c) for j, c in coeffs.items() if c != 0.0}
        self.constraints.append(Constraint(name or f"c{len(self.constraints)}",
                                           row, sense, float(rhs)))
        return len(self.constraints) - 1

    def set_objective(self, coeffs: dict[int, float], const: float = 0.0) -> None:
        self.objective = {j: float(c) for j, c in coeffs.items() if c != 0.0}
        self.objective_const = float(const)

    def add_objective_term(self, j: int, coeff: float) -> None:
        if coeff:
            self.objective[j] = self.objective.get(j, 0.0) + float(coeff)

    @property
    def num_vars(self) -> int:
        return len(self.variables)

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)

    @property
    def integer_indices(self) -> list[int]:
        return [j for j, v in enumerate(self.variables) if v.is_integer]

    def relaxed(self) -> "LinearModel":
        """Copy with all integrality flags cleared (shares nothing mutable)."""
        m = LinearModel(name=self.name + "_relaxed")
        for v in self.variables:
            m.add_var(v.name, v.lb, v.ub, integer=False)
        for c in self.constraints:
            m.add_constraint(dict(c.coeffs), c.sense, c.rhs, c.name)
        m.set_objective(dict(self.objective), self.objective_const)
        return m

    def dense_arrays(self):
        """(c, A, senses, b, lb, ub) as numpy arrays; A dense (small models)."""
        n, m = self.num_vars, self.num_constraints
        c = np.zeros(n)
        for j, v in self.objective.items():
            c[j] = v
        A = np.zeros((m, n))
        b = np.zeros(m)
        senses = []
        for k, row in enumerate(self.constraints):
            for j, v in row.coeffs.items():
                A[k, j] = v
            b[k] = row.rhs
            senses.append(row.sense)
        lb = np.array([v.lb for v in self.variables])
        ub = np.array([v.ub for v in self.variables])
        return c, A, senses, b, lb, ub

    def check_solution(self, x: np.ndarray, feas_tol: float = 1e-7,
                       int_tol: float = 1e-6) -> list[str]:
        """Names of violated rows/bounds/integrality at point x."""
        bad = []
        for j, v in enumerate(self.variables):
            if x[j] < v.lb - feas_tol or x[j] > v.ub + feas_tol:
                bad.append(f"bound:{v.name}")
            if v.is_integer and abs(x[j] - round(x[j])) > int_tol:
                bad.append(f"integrality:{v.name}")
        for row in self.constraints:
            lhs = sum(c * x[j] for j, c in row.coeffs.items())
            if row.sense == LE and lhs > row.rhs + feas_tol:
                bad.append(f"row:{row.name}")
            elif row.sense == GE and lhs < row.rhs - feas_tol:
                bad.append(f"row:{row.name}")
            elif row.sense == EQ and abs(lhs - row.rhs) > feas_tol:
                bad.append(f"row:{row.name}")
        return bad

    def objective_value(self, x: np.ndarray) -> float:
        return float(sum(c * x[j] for j, c in self.objective.items())
                     + self.objective_const)


def export_lp(model: LinearModel, path) -> None:
    """Write the model in CPLEX LP text format with 17 significant digits."""

    def num(v: float) -> str:
        return f"{v:.17g}"

    def term(c: float, name: str, first: bool) -> str:
        sign = "-" if c < 0 else ("" if first else "+")
        return f" {sign} {num(abs(c))} {name}" if not first else f"{sign}{num(abs(c))} {name}"

    lines = [f"\\ {model.name}", "Minimize", " obj:"]
    parts = []
    first = True
    for j in sorted(model.objective):
        parts.append(term(model.objective[j], model.variables[j].name, first))
        first = False
    if model.objective_const:
        parts.append(term(model.objective_const, "", first).rstrip())
    lines.append("  " + " ".join(parts) if parts else "  0")
    lines.append("Subject To")
    op = {LE: "<=", EQ: "=", GE: ">="}
    for row in model.constraints:
        parts = []
        first = True
        for j in sorted(row.coeffs):
            parts.append(term(row.coeffs[j], model.variables[j].name, first))
            first = False
        body = " ".join(parts) if parts else "0"
        lines.append(f" {row.name}: {body} {op[row.sense]} {num(row.rhs)}")
    lines.append("Bounds")
    for v in model.variables:
        lo = "-inf" if v.lb == -INF else num(v.lb)
        hi = "+inf" if v.ub == INF else num(v.ub)
        lines.append(f" {lo} <= {v.name} <= {hi}")
    ints = [v.name for v in model.variables if v.is_integer]
    if ints:
        lines.append("Generals")
        lines.append(" " + " ".join(ints))
    lines.append("End")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
