"""Demand ambiguity sets and decision-dependent moment functions.

A DemandSpec pins a finite demand support together with empirical moments
and per-(area, node) impact factors. Placing a node shifts an area's demand
mean up and its variance down through affine moment functions; the
worst-case queries solve one small LP per area over the moment box.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .linear_model import EQ, GE, LE, LinearModel
from . import solver


class InfeasibleAmbiguityError(RuntimeError):
    """The moment system admits no distribution for this placement."""


class VarianceFloorError(ValueError):
    """Variance floor can bind for some placement; the exact reformulation
    assumes the affine branch of the variance function."""


@dataclass
class DemandSpec:
    support: np.ndarray          # (N,) strictly increasing demand values
    mu_bar: np.ndarray           # (I,) empirical means
    sigma_bar: np.ndarray        # (I,) empirical standard deviations
    psi_mu: np.ndarray           # (I, J) mean impact factors in [0, 1]
    psi_sigma: np.ndarray        # (I, J) variance impact factors in [0, 1]
    gamma_mu: np.ndarray         # (I,) mean deviation radii
    gamma_sigma_lo: np.ndarray   # (I,) lower second-moment factors in (0, 1]
    gamma_sigma_hi: np.ndarray   # (I,) upper second-moment factors >= 1
    sigma_floor: np.ndarray      # (I,) variance lower bound (std units)
    endogenous: bool = True

    def __post_init__(self):
        self.support = np.asarray(self.support, dtype=float)
        for name in ("mu_bar", "sigma_bar", "gamma_mu", "gamma_sigma_lo",
                     "gamma_sigma_hi", "sigma_floor"):
            setattr(self, name, np.atleast_1d(np.asarray(getattr(self, name),
                                                         dtype=float)))
        self.psi_mu = np.atleast_2d(np.asarray(self.psi_mu, dtype=float))
        self.psi_sigma = np.atleast_2d(np.asarray(self.psi_sigma, dtype=float))

    @property
    def num_areas(self) -> int:
        return len(self.mu_bar)

    @property
    def num_nodes(self) -> int:
        return self.psi_mu.shape[1]

    @property
    def num_support(self) -> int:
        return len(self.support)

    def validate(self) -> list[str]:
        bad = []
        if np.any(np.diff(self.support) <= 0):
            bad.append("support-not-increasing")
        if np.any(self.psi_mu < 0) or np.any(self.psi_mu > 1) \
                or np.any(self.psi_sigma < 0) or np.any(self.psi_sigma > 1):
            bad.append("impact-out-of-range")
        if np.any(self.psi_sigma.sum(axis=1) > 1 + 1e-12):
            bad.append("impact-row-sum")
        if np.any(self.gamma_mu < 0):
            bad.append("mean-radius-negative")
        if np.any(self.gamma_sigma_lo <= 0) or np.any(self.gamma_sigma_lo > 1) \
                or np.any(self.gamma_sigma_hi < 1):
            bad.append("sigma-factor-range")
        if np.any(self.sigma_floor < 0):
            bad.append("variance-floor-negative")
        return bad

    def exogenous_copy(self) -> "DemandSpec":
        """Zero-impact copy: the set degenerates to the exogenous form."""
        return replace(
            self,
            psi_mu=np.zeros_like(self.psi_mu),
            psi_sigma=np.zeros_like(self.psi_sigma),
            endogenous=False,
        )


@dataclass
class MomentValues:
    mean: np.ndarray           # (I,)
    variance: np.ndarray       # (I,)
    second_moment: np.ndarray  # (I,) variance + mean^2
    clipped: np.ndarray        # (I,) bool, True where the floor binds


@dataclass
class WorstCaseDistribution:
    probabilities: np.ndarray  # (I, N)
    area_values: np.ndarray    # (I,) per-area worst-case expectations

    def validate(self, spec: DemandSpec, y, tol: float = 1e-8) -> list[str]:
        mv = moment_values(spec, y)
        xi = spec.support
        bad = []
        for i in range(spec.num_areas):
            p = self.probabilities[i]
            if np.any(p < -tol):
                bad.append(f"negative-probability:{i}")
            if abs(p.sum() - 1.0) > tol:
                bad.append(f"mass:{i}")
            m1 = float(p @ xi)
            if abs(m1 - mv.mean[i]) > spec.gamma_mu[i] + tol:
                bad.append(f"mean-box:{i}")
            m2 = float(p @ (xi * xi))
            s = mv.second_moment[i]
            if not (s * spec.gamma_sigma_lo[i] - tol <= m2
                    <= s * spec.gamma_sigma_hi[i] + tol):
                bad.append(f"second-moment-box:{i}")
        return bad


def moment_values(spec: DemandSpec, y) -> MomentValues:
    """Decision-dependent mean/variance for a placement vector."""
    y = np.asarray(y, dtype=float)
    if y.shape != (spec.num_nodes,):
        raise ValueError(f"placement vector has shape {y.shape}, "
                         f"expected ({spec.num_nodes},)")
    if spec.endogenous:
        mean = spec.mu_bar * (1.0 + spec.psi_mu @ y)
        raw_var = spec.sigma_bar ** 2 * (1.0 - spec.psi_sigma @ y)
    else:
        mean = spec.mu_bar.copy()
        raw_var = spec.sigma_bar ** 2
    floor = spec.sigma_floor ** 2
    variance = np.maximum(raw_var, floor)
    clipped = raw_var < floor - 1e-15
    return MomentValues(mean, variance, variance + mean ** 2, clipped)


def second_moment_expansion(spec: DemandSpec):
    """Affine-plus-pairwise expansion of S_i(y) = variance + mean^2.

    Returns (const, linear, cross) with
        S_i(y) = const[i] + sum_j linear[i,j] y_j
                 + sum_{l>m} cross[i,l,m] y_l y_m,
    valid wherever the variance floor does not bind. linear is the usual
    per-node coefficient; cross[i,l,m] = 2 mu_bar_i^2 psi_mu[i,l] psi_mu[i,m].
    """
    mu2 = spec.mu_bar ** 2
    const = spec.sigma_bar ** 2 + mu2
    if not spec.endogenous:
        z = np.zeros_like(spec.psi_mu)
        return const, z, np.zeros((spec.num_areas, spec.num_nodes, spec.num_nodes))
    linear = (-spec.sigma_bar[:, None] ** 2 * spec.psi_sigma
              + mu2[:, None] * (2.0 * spec.psi_mu + spec.psi_mu ** 2))
    cross = 2.0 * mu2[:, None, None] * (
        spec.psi_mu[:, :, None] * spec.psi_mu[:, None, :])
    return const, linear, cross


def check_variance_floor_slack(spec: DemandSpec) -> None:
    """Reject specs whose variance floor can bind for some placement.

    The affine variance branch must dominate the floor for every y; since
    impacts are nonnegative the all-ones placement is the worst case.
    """
    if not spec.endogenous:
        return
    worst = spec.sigma_bar ** 2 * (1.0 - spec.psi_sigma.sum(axis=1))
    bad = np.flatnonzero(spec.sigma_floor ** 2 > worst + 1e-12)
    if bad.size:
        i = int(bad[0])
        raise VarianceFloorError(
            f"variance floor binds for area {i} under full placement "
            f"(floor^2={spec.sigma_floor[i]**2:.6g} > "
            f"min variance {worst[i]:.6g}); lower sigma_floor or the "
            "variance impacts")


def _area_lp(spec: DemandSpec, mv: MomentValues, i: int,
             objective: np.ndarray | None) -> LinearModel:
    xi = spec.support
    n = len(xi)
    model = LinearModel(name=f"worst_case_area_{i}")
    for k in range(n):
        model.add_var(f"p{k}", 0.0, 1.0)
    idx = list(range(n))
    model.add_constraint(dict.fromkeys(idx, 1.0), EQ, 1.0, "mass")
    mean_row = {k: float(xi[k]) for k in idx}
    model.add_constraint(mean_row, LE, mv.mean[i] + spec.gamma_mu[i], "mean_hi")
    model.add_constraint(mean_row, GE, mv.mean[i] - spec.gamma_mu[i], "mean_lo")
    sq_row = {k: float(xi[k] ** 2) for k in idx}
    s = mv.second_moment[i]
    model.add_constraint(sq_row, LE, s * spec.gamma_sigma_hi[i], "m2_hi")
    model.add_constraint(sq_row, GE, s * spec.gamma_sigma_lo[i], "m2_lo")
    if objective is not None:
        # built-in engine minimizes; negate for the adversarial max
        model.set_objective({k: -float(objective[k]) for k in idx})
    return model


def worst_case_distribution(spec: DemandSpec, y, theta) -> tuple[WorstCaseDistribution, float]:
    """Adversary's distribution: per-area LP max of expected recourse cost.

    `theta` is an (I, N) table of second-stage values for this same y.
    Raises InfeasibleAmbiguityError when the moment system is empty.
    """
    theta = np.asarray(getattr(theta, "values", theta), dtype=float)
    mv = moment_values(spec, y)
    n = spec.num_support
    probs = np.zeros((spec.num_areas, n))
    vals = np.zeros(spec.num_areas)
    for i in range(spec.num_areas):
        model = _area_lp(spec, mv, i, theta[i])
        res = solver.solve_lp(model)
        if res.status != solver.OPTIMAL:
            raise InfeasibleAmbiguityError(
                f"ambiguity set empty for area {i} at this placement")
        probs[i] = res.x
        vals[i] = -res.objective
    wcd = WorstCaseDistribution(probs, vals)
    bad = wcd.validate(spec, y)
    if bad:  # basic solutions should satisfy their own rows exactly
        raise AssertionError(f"worst-case distribution invalid: {bad}")
    return wcd, float(vals.sum())


def is_ambiguity_nonempty(spec: DemandSpec, y) -> bool:
    """LP feasibility of the moment system for placement y."""
    mv = moment_values(spec, y)
    for i in range(spec.num_areas):
        model = _area_lp(spec, mv, i, None)
        if solver.solve_lp(model).status != solver.OPTIMAL:
            return False
    return True
