"""Feasibility cuts from extreme rays of the dual cone.

The inner adversarial LP's dual cone is the set of quadratics nonnegative
on the demand support. A ray along which the dual objective goes negative
certifies an empty ambiguity set, so requiring the ray objective to stay
nonnegative for the placement-dependent moments yields valid inequalities
over (y, Y, z, zeta). Three ray families suffice at desk scale: roots at
the two lowest support points, at the two highest, and the concave ray
with roots at the extremes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .instance import NetworkInstance
from .moments import DemandSpec, second_moment_expansion


@dataclass
class ExtremeRay:
    omega: float
    delta: float
    gamma: float           # +1 or -1 after normalization
    root_indices: tuple    # support indices whose points are roots

    def quadratic(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        return self.omega + self.delta * xi + self.gamma * xi * xi

    def max_violation(self, support) -> float:
        return float(max(0.0, -self.quadratic(support).min()))


@dataclass
class CutRow:
    """sum(coeffs[name] * var) >= rhs over model variable names."""
    name: str
    coeffs: dict
    rhs: float


@dataclass
class CutSystem:
    definition_rows: list   # equality rows defining z[i], zeta[i] (as CutRow ==)
    cut_rows: list          # the >= 0 ray rows
    linking_rows: list      # Y[l,m] linking rows (>= / <= encoded in sense)


def compute_extreme_rays(support) -> list[ExtremeRay]:
    """The three ray families over a sorted support, gamma normalized to +-1."""
    xi = np.asarray(support, dtype=float)
    if len(xi) < 2:
        raise ValueError("extreme rays need a support with at least 2 points")
    if np.any(np.diff(xi) <= 0):
        raise ValueError("support must be strictly increasing")
    lo0, lo1 = float(xi[0]), float(xi[1])
    hi0, hi1 = float(xi[-2]), float(xi[-1])
    rays = [
        ExtremeRay(lo0 * lo1, -(lo0 + lo1), 1.0, (0, 1)),
        ExtremeRay(hi0 * hi1, -(hi0 + hi1), 1.0, (len(xi) - 2, len(xi) - 1)),
        # concave ray -(x - xi_min)(x - xi_max), nonnegative inside the range
        ExtremeRay(-lo0 * hi1, lo0 + hi1, -1.0, (0, len(xi) - 1)),
    ]
    for r in rays:
        v = r.max_violation(xi)
        if v > 1e-12 * max(1.0, hi1 * hi1):
            raise AssertionError(f"ray {r} violates cone membership by {v}")
    return rays


def ray_cut_coefficients(ray: ExtremeRay, gamma_sigma_lo: float,
                         gamma_sigma_hi: float, gamma_mu: float):
    """(zeta coeff, z coeff, rhs) of the cut  ray objective >= 0.

    The ray's dual objective at moments (zeta, z) is
        omega + delta1 (zeta + G) - delta2 (zeta - G)
        + z Ghi gamma1 - z Glo gamma2
    with delta1/delta2 (gamma1/gamma2) the positive/negative parts.
    """
    d1, d2 = max(ray.delta, 0.0), max(-ray.delta, 0.0)
    g1, g2 = max(ray.gamma, 0.0), max(-ray.gamma, 0.0)
    zeta_coeff = d1 - d2
    z_coeff = gamma_sigma_hi * g1 - gamma_sigma_lo * g2
    rhs = -ray.omega - (d1 + d2) * gamma_mu
    return zeta_coeff, z_coeff, rhs


def build_feasibility_cuts(inst: NetworkInstance, spec: DemandSpec,
                           include_linking: bool = True) -> CutSystem:
    """Rows (over names y[j], Y[l,m], z[i], zeta[i]) enforcing nonempty
    ambiguity sets at every binary placement."""
    rays = compute_extreme_rays(spec.support)
    const, linear, cross = second_moment_expansion(spec)
    I, J = spec.num_areas, spec.num_nodes
    defs, cut_rows, linking = [], [], []
    for i in range(I):
        row = {f"z[{i}]": 1.0}
        for j in range(J):
            if linear[i, j]:
                row[f"y[{j}]"] = -linear[i, j]
        for l in range(J):
            for m in range(l):
                if cross[i, l, m]:
                    row[f"Y[{l},{m}]"] = -cross[i, l, m]
        defs.append(CutRow(f"def_z[{i}]", row, float(const[i])))

        row = {f"zeta[{i}]": 1.0}
        if spec.endogenous:
            for j in range(J):
                if spec.psi_mu[i, j]:
                    row[f"y[{j}]"] = -spec.mu_bar[i] * spec.psi_mu[i, j]
        defs.append(CutRow(f"def_zeta[{i}]", row, float(spec.mu_bar[i])))

        for k, ray in enumerate(rays):
            zc, sc, rhs = ray_cut_coefficients(
                ray, float(spec.gamma_sigma_lo[i]), float(spec.gamma_sigma_hi[i]),
                float(spec.gamma_mu[i]))
            cut_rows.append(CutRow(f"ray{k}[{i}]",
                                   {f"zeta[{i}]": zc, f"z[{i}]": sc}, rhs))
    if include_linking:
        for l in range(J):
            for m in range(l):
                yl, ym, Y = f"y[{l}]", f"y[{m}]", f"Y[{l},{m}]"
                linking.append(CutRow(f"link_lo[{l},{m}]",
                                      {Y: 1.0, yl: -1.0, ym: -1.0}, -1.0))
                linking.append(CutRow(f"link_l[{l},{m}]", {Y: -1.0, yl: 1.0}, 0.0))
                linking.append(CutRow(f"link_m[{l},{m}]", {Y: -1.0, ym: 1.0}, 0.0))
    return CutSystem(defs, cut_rows, linking)


def evaluate_cuts_at(inst: NetworkInstance, spec: DemandSpec, y) -> np.ndarray:
    """Slack of each ray cut at a binary placement (negative = violated).

    Rows are ordered area-major, ray-minor: 3 entries per area.
    """
    from .moments import moment_values

    y = np.asarray(y, dtype=float)
    mv = moment_values(spec, y)
    rays = compute_extreme_rays(spec.support)
    out = np.zeros(spec.num_areas * len(rays))
    k = 0
    for i in range(spec.num_areas):
        for ray in rays:
            zc, sc, rhs = ray_cut_coefficients(
                ray, float(spec.gamma_sigma_lo[i]), float(spec.gamma_sigma_hi[i]),
                float(spec.gamma_mu[i]))
            out[k] = zc * mv.mean[i] + sc * mv.second_moment[i] - rhs
            k += 1
    return out
