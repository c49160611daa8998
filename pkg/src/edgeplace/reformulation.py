"""Exact single-level MILP for the robust placement problem.

The inner max-min collapses to a closed-form epigraph (module recourse),
the adversarial moment LP is dualized, and the resulting products of dual
variables with placement binaries are linearized with McCormick envelopes.
The optimum of the built model equals the original min-max-min value at
binary placements; optional ray cuts (module cuts) tighten the relaxation
without changing the optimum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cuts import build_feasibility_cuts
from .instance import NetworkInstance, validate_instance
from .linear_model import EQ, GE, INF, LE, LinearModel, ModelError
from .moments import (DemandSpec, check_variance_floor_slack, moment_values,
                      second_moment_expansion)
from .recourse import candidate_terms
from . import solver


class BuildError(ValueError):
    """Instance/spec cannot produce a valid model."""


@dataclass
class ReformulationOptions:
    big_m: float | None = None     # None -> default_big_m, split per class
    include_cuts: bool = False
    verification_mode: bool = False
    # emit only the envelope half the objective pushes against; the dropped
    # rows can never bind in any LP solve, so bounds and optima are identical
    minimal_envelopes: bool = True

    def resolve_big_m(self, inst: NetworkInstance,
                      spec: DemandSpec) -> tuple[float, float]:
        """(bound for mean-price duals, bound for curvature duals)."""
        if self.big_m is not None:
            if self.big_m <= 0:
                raise BuildError("big_m must be positive")
            return float(self.big_m), float(self.big_m)
        return default_big_m(inst, spec)


def default_big_m(inst: NetworkInstance, spec: DemandSpec) -> tuple[float, float]:
    """Valid upper bounds on the inner dual multipliers, with 10x margin.

    Some optimal dual is basic: a quadratic through at most three support
    points of the convex piecewise-linear recourse value, whose slopes lie
    in [0, s_i]. Divided differences then bound the curvature dual by
    s/(2h) and the mean-price dual by s(1 + xi_max/h), h being the smallest
    support spacing. Oversized bounds are not harmless: envelope rows carry
    the bound as a coefficient, and solver feasibility tolerances scale
    with it.
    """
    s_max = float(inst.unmet_penalty.max())
    xi = spec.support
    xi_max = float(xi[-1])
    h = float(np.diff(xi).min()) if len(xi) > 1 else 1.0
    m_delta = 10.0 * s_max * (1.0 + xi_max / h)
    m_gamma = 10.0 * s_max * max(1.0, 1.0 / h)
    return m_delta, m_gamma


def lambda_coefficients(spec: DemandSpec) -> np.ndarray:
    """Per-(area, node) linear coefficient of the second-moment scale."""
    _, linear, _ = second_moment_expansion(spec)
    return linear


def mccormick_bilinear(model: LinearModel, product: int, binary: int,
                       continuous: int, lo: float, hi: float,
                       tag: str = "mc", side: str = "both") -> None:
    """Envelope rows making product = continuous * binary at binary points.

    side="lower"/"upper" emits only that half (enough when the objective
    monotonically pushes the product the other way).
    """
    if not np.isfinite(hi) or not np.isfinite(lo):
        raise ModelError(f"{tag}: continuous variable needs finite bounds")
    if side in ("both", "lower"):
        model.add_constraint({product: 1.0, binary: -lo}, GE, 0.0, f"{tag}_lo")
        model.add_constraint({product: 1.0, continuous: -1.0, binary: -hi},
                             GE, -hi, f"{tag}_ghi")
    if side in ("both", "upper"):
        model.add_constraint({product: 1.0, binary: -hi}, LE, 0.0, f"{tag}_hi")
        model.add_constraint({product: 1.0, continuous: -1.0, binary: -lo},
                             LE, -lo, f"{tag}_glo")


def mccormick_trilinear(model: LinearModel, product: int, bin_l: int,
                        bin_m: int, continuous: int, lo: float, hi: float,
                        tag: str = "mc3", side: str = "both") -> None:
    """Envelope rows making product = continuous * y_l * y_m at binary points."""
    if not np.isfinite(hi) or not np.isfinite(lo):
        raise ModelError(f"{tag}: continuous variable needs finite bounds")
    if side in ("both", "upper"):
        model.add_constraint({product: 1.0, bin_l: -hi}, LE, 0.0, f"{tag}_l")
        model.add_constraint({product: 1.0, bin_m: -hi}, LE, 0.0, f"{tag}_m")
        model.add_constraint({product: 1.0, continuous: -1.0, bin_l: -lo}, LE,
                             -lo, f"{tag}_gl")
        model.add_constraint({product: 1.0, continuous: -1.0, bin_m: -lo}, LE,
                             -lo, f"{tag}_gm")
    if side in ("both", "lower"):
        model.add_constraint({product: 1.0, bin_l: -lo, bin_m: -lo}, GE, -lo,
                             f"{tag}_sum")
        model.add_constraint({product: 1.0, continuous: -1.0, bin_l: -hi,
                              bin_m: -hi}, GE, -2.0 * hi, f"{tag}_join")


def build_milp(inst: NetworkInstance, spec: DemandSpec,
               options: ReformulationOptions | None = None,
               theta_support: dict | None = None) -> LinearModel:
    """Assemble the exact placement MILP.

    Product variables are created only where their objective (or cut)
    coefficient is nonzero, which keeps zero-impact specs at the plain
    exogenous model size. `theta_support` optionally restricts the epigraph
    rows to {area: iterable of support indices} (used by the delayed-row
    solver); by default every (area, support point) row is emitted.
    """
    options = options or ReformulationOptions()
    bad = validate_instance(inst)
    if bad:
        raise BuildError(f"instance invalid: {bad}")
    bad = spec.validate()
    if bad:
        raise BuildError(f"demand spec invalid: {bad}")
    if spec.num_nodes != inst.num_nodes or spec.num_areas != inst.num_areas:
        raise BuildError("instance and demand spec disagree on dimensions")
    check_variance_floor_slack(spec)
    m_delta, m_gamma = options.resolve_big_m(inst, spec)

    I, J = inst.num_areas, inst.num_nodes
    xi = spec.support
    const, lam, cross = second_moment_expansion(spec)
    psi_mu = spec.psi_mu if spec.endogenous else np.zeros_like(spec.psi_mu)
    g_lo, g_hi = spec.gamma_sigma_lo, spec.gamma_sigma_hi

    model = LinearModel(name="placement_milp")
    y = [model.add_var(f"y[{j}]", 0.0, 1.0, integer=True) for j in range(J)]
    Y = {}
    for l in range(J):
        for m in range(l):
            Y[l, m] = model.add_var(f"Y[{l},{m}]", 0.0, 1.0)

    obj: dict[int, float] = {}
    for j in range(J):
        obj[y[j]] = float(inst.placement_cost[j])

    model.add_constraint({y[j]: float(inst.placement_cost[j]) for j in range(J)},
                         LE, float(inst.budget), "budget")
    model.add_constraint(dict.fromkeys(y, 1.0), GE, float(inst.min_nodes),
                         "reliability")
    for (l, m), Yi in Y.items():
        model.add_constraint({Yi: 1.0, y[l]: -1.0, y[m]: -1.0}, GE, -1.0,
                             f"link_lo[{l},{m}]")
        model.add_constraint({Yi: -1.0, y[l]: 1.0}, GE, 0.0, f"link_l[{l},{m}]")
        model.add_constraint({Yi: -1.0, y[m]: 1.0}, GE, 0.0, f"link_m[{l},{m}]")

    for i in range(I):
        omega = model.add_var(f"omega[{i}]", -INF, INF)
        d1 = model.add_var(f"delta1[{i}]", 0.0, m_delta)
        d2 = model.add_var(f"delta2[{i}]", 0.0, m_delta)
        g1 = model.add_var(f"gamma1[{i}]", 0.0, m_gamma)
        g2 = model.add_var(f"gamma2[{i}]", 0.0, m_gamma)

        mu_lo = float(spec.mu_bar[i] - spec.gamma_mu[i])
        mu_hi = float(spec.mu_bar[i] + spec.gamma_mu[i])
        obj[omega] = 1.0
        obj[d1] = mu_hi
        obj[d2] = -mu_lo
        obj[g1] = float(const[i] * g_hi[i])
        obj[g2] = float(-const[i] * g_lo[i])

        def needed_side(coeff: float) -> str:
            if not options.minimal_envelopes:
                return "both"
            return "lower" if coeff > 0 else "upper"

        for j in range(J):
            if psi_mu[i, j]:
                coef = float(spec.mu_bar[i] * psi_mu[i, j])
                for r, (dv, sign) in enumerate(((d1, 1.0), (d2, -1.0)), start=1):
                    t = model.add_var(f"tau{r}[{i},{j}]", 0.0, m_delta)
                    mccormick_bilinear(model, t, y[j], dv, 0.0, m_delta,
                                       f"tau{r}[{i},{j}]",
                                       side=needed_side(sign * coef))
                    obj[t] = sign * coef
            if lam[i, j]:
                for r, (gv, fac) in enumerate(((g1, float(g_hi[i])),
                                               (g2, float(-g_lo[i]))), start=1):
                    k = model.add_var(f"kappa{r}[{i},{j}]", 0.0, m_gamma)
                    c_k = float(lam[i, j]) * fac
                    mccormick_bilinear(model, k, y[j], gv, 0.0, m_gamma,
                                       f"kappa{r}[{i},{j}]",
                                       side=needed_side(c_k))
                    obj[k] = c_k
        for l in range(J):
            for m in range(l):
                if cross[i, l, m]:
                    for r, (gv, fac) in enumerate(((g1, float(g_hi[i])),
                                                   (g2, float(-g_lo[i]))), start=1):
                        e = model.add_var(f"eta{r}[{i},{l},{m}]", 0.0, m_gamma)
                        c_e = float(cross[i, l, m]) * fac
                        if options.minimal_envelopes:
                            # envelope against the linked pair variable:
                            # exact at binary placements and tighter than
                            # the raw three-factor envelope
                            mccormick_bilinear(model, e, Y[l, m], gv, 0.0,
                                               m_gamma, f"eta{r}[{i},{l},{m}]",
                                               side=needed_side(c_e))
                        else:
                            mccormick_trilinear(model, e, y[l], y[m], gv, 0.0,
                                                m_gamma, f"eta{r}[{i},{l},{m}]",
                                                side="both")
                        obj[e] = c_e

        # epigraph of the closed-form recourse value, one row per dual vertex
        support_idx = (range(len(xi)) if theta_support is None
                       else theta_support.get(i, ()))
        for t_idx, term in enumerate(candidate_terms(inst, i)):
            wnz = np.flatnonzero(term.weights)
            for n in support_idx:
                row = {omega: 1.0, d1: float(xi[n]), d2: float(-xi[n]),
                       g1: float(xi[n] ** 2), g2: float(-xi[n] ** 2)}
                for j in wnz:
                    row[y[j]] = -float(term.weights[j])
                model.add_constraint(row, GE, float(term.rate * xi[n]),
                                     f"theta[{i},{n},{t_idx}]")

    if options.include_cuts:
        system = build_feasibility_cuts(inst, spec, include_linking=False)
        for i in range(I):
            model.add_var(f"z[{i}]", -INF, INF)
            model.add_var(f"zeta[{i}]", -INF, INF)
        for row in system.definition_rows:
            model.add_constraint({model.var(n): c for n, c in row.coeffs.items()},
                                 EQ, row.rhs, row.name)
        for row in system.cut_rows:
            model.add_constraint({model.var(n): c for n, c in row.coeffs.items()},
                                 GE, row.rhs, row.name)

    model.set_objective(obj)
    if options.verification_mode:
        _verify_epigraph(inst, spec, model)
    return model


def _verify_epigraph(inst: NetworkInstance, spec: DemandSpec,
                     model: LinearModel) -> None:
    """Probe placements: closed-form value must match the recourse LP."""
    from .recourse import theta_table

    for y in (np.zeros(inst.num_nodes), np.ones(inst.num_nodes)):
        theta_table(inst, spec.support, y, verify=True)


def solve_with_delayed_rows(inst: NetworkInstance, spec: DemandSpec,
                            options: ReformulationOptions | None = None,
                            backend: str = "external",
                            solve_options=None,
                            violation_tol: float = 1e-7):
    """Exact solve generating epigraph rows on demand.

    Only a handful of (area, support point) rows bind at an optimum (the
    adversary's distribution has at most five atoms per area), so the model
    starts from the support endpoints and adds the argmax-candidate row for
    every violated pair until the incumbent satisfies the full epigraph.
    The result equals the full-model optimum: the working model is a
    relaxation and the final solution is feasible for every omitted row.

    Returns (SolveResult, model, rounds).
    """
    from .external import get_backend

    from .moments import worst_case_distribution
    from .recourse import theta_table

    options = options or ReformulationOptions()
    xi = spec.support
    I, N = inst.num_areas, len(xi)
    seed = {i: {0, N - 1} for i in range(I)}
    # seed the atoms of the empty-placement worst case; they are usually
    # close to the binding rows at the optimum
    y0 = np.zeros(inst.num_nodes)
    try:
        wcd0, _ = worst_case_distribution(
            spec, y0, theta_table(inst, xi, y0))
        for i in range(I):
            for n in np.flatnonzero(wcd0.probabilities[i] > 1e-9):
                seed[i].add(int(n))
    except Exception:
        pass  # empty set at y=0: the cut rows / solver will handle it
    model = build_milp(inst, spec, options, theta_support=seed)
    run = get_backend(backend)
    terms = [candidate_terms(inst, i) for i in range(I)]
    rates = [np.array([t.rate for t in ts]) for ts in terms]
    weights = [np.array([t.weights for t in ts]) for ts in terms]
    added = {(i, n, t) for i in range(I) for n in seed[i]
             for t in range(len(terms[i]))}
    dual_names = [(model.var(f"omega[{i}]"), model.var(f"delta1[{i}]"),
                   model.var(f"delta2[{i}]"), model.var(f"gamma1[{i}]"),
                   model.var(f"gamma2[{i}]")) for i in range(I)]
    y_idx = [model.var(f"y[{j}]") for j in range(inst.num_nodes)]

    import dataclasses as _dc

    base_opts = solve_options or solver.SolveOptions()
    relaxed_opts = _dc.replace(base_opts, gap_rel=max(base_opts.gap_rel, 1e-3))
    exact_phase = False
    rounds = 0
    while True:
        rounds += 1
        res = run(model, base_opts if exact_phase else relaxed_opts)
        if res.status != solver.OPTIMAL:
            return res, model, rounds
        x = res.x
        yv = np.array([x[j] for j in y_idx])
        new_rows = 0
        for i in range(I):
            om, d1, d2, g1, g2 = (x[k] for k in dual_names[i])
            lhs = om + (d1 - d2) * xi + (g1 - g2) * xi * xi
            vals = rates[i][:, None] * xi[None, :] + (weights[i] @ yv)[:, None]
            best = np.argmax(vals, axis=0)
            theta_v = vals[best, np.arange(N)]
            scale = np.maximum(1.0, np.abs(theta_v))
            for n in np.flatnonzero(theta_v - lhs > violation_tol * scale):
                key = (i, int(n), int(best[n]))
                if key in added:
                    continue
                added.add(key)
                t = terms[i][best[n]]
                row = {dual_names[i][0]: 1.0,
                       dual_names[i][1]: float(xi[n]),
                       dual_names[i][2]: float(-xi[n]),
                       dual_names[i][3]: float(xi[n] ** 2),
                       dual_names[i][4]: float(-xi[n] ** 2)}
                for j in np.flatnonzero(t.weights):
                    row[y_idx[j]] = -float(t.weights[j])
                model.add_constraint(row, GE, float(t.rate * xi[n]),
                                     f"theta[{i},{n},{best[n]}]+r{rounds}")
                new_rows += 1
        if new_rows == 0:
            if exact_phase:
                return res, model, rounds
            exact_phase = True  # row set settled; redo at the exact gap


def inner_dual_value(spec: DemandSpec, theta, y):
    """Dual of the adversarial moment LP at a fixed placement.

    Five dual variables per area; the value equals the worst-case
    expectation by strong duality. Returns (per-area values, total).
    """
    theta = np.asarray(getattr(theta, "values", theta), dtype=float)
    mv = moment_values(spec, y)
    xi = spec.support
    vals = np.zeros(spec.num_areas)
    for i in range(spec.num_areas):
        model = LinearModel(name=f"inner_dual_{i}")
        omega = model.add_var("omega", -INF, INF)
        d1 = model.add_var("delta1", 0.0)
        d2 = model.add_var("delta2", 0.0)
        g1 = model.add_var("gamma1", 0.0)
        g2 = model.add_var("gamma2", 0.0)
        s = mv.second_moment[i]
        model.set_objective({
            omega: 1.0,
            d1: float(mv.mean[i] + spec.gamma_mu[i]),
            d2: float(-(mv.mean[i] - spec.gamma_mu[i])),
            g1: float(s * spec.gamma_sigma_hi[i]),
            g2: float(-s * spec.gamma_sigma_lo[i]),
        })
        for n in range(len(xi)):
            model.add_constraint(
                {omega: 1.0, d1: float(xi[n]), d2: float(-xi[n]),
                 g1: float(xi[n] ** 2), g2: float(-xi[n] ** 2)},
                GE, float(theta[i, n]), f"support[{n}]")
        res = solver.solve_lp(model)
        if res.status != solver.OPTIMAL:
            raise RuntimeError(f"inner dual not optimal for area {i}: "
                               f"{res.status} (empty ambiguity set?)")
        vals[i] = res.objective
    return vals, float(vals.sum())


def extract_placement(model: LinearModel, x: np.ndarray, num_nodes: int
                      ) -> np.ndarray:
    y = np.array([x[model.var(f"y[{j}]")] for j in range(num_nodes)])
    return np.round(y).astype(int)
