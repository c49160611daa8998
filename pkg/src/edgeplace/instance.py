"""Problem data and the synthetic instance generator.

Instances carry the static first-stage data (topology, costs, capacities,
budget); the paired DemandSpec carries everything the ambiguity set needs.
Generation follows the standard experimental recipe: uniform cost draws,
capacity pre-allocation proportional to historical demand, and impact
factors that decay exponentially with network delay. Real topology/ping
data is replaced by scaled planar distances (see README).
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .moments import DemandSpec

SCHEMA_VERSION = 1

DELAY_RANGE_MS = (2.0, 80.0)


class ConfigurationError(ValueError):
    """Invalid generator configuration."""


class InstanceFormatError(ValueError):
    """Malformed or out-of-range instance file."""


@dataclass
class NetworkInstance:
    num_areas: int
    num_nodes: int
    delay: np.ndarray            # (I, J) milliseconds, all > 0
    placement_cost: np.ndarray   # (J,)
    unmet_penalty: np.ndarray    # (I,)
    capacity: np.ndarray         # (I, J) per-area capacity split
    budget: float
    min_nodes: int
    delay_weight: float          # cost per (ms * demand unit)
    delay_threshold: np.ndarray  # (I,) milliseconds

    def __post_init__(self):
        self.delay = np.asarray(self.delay, dtype=float)
        self.placement_cost = np.atleast_1d(np.asarray(self.placement_cost, dtype=float))
        self.unmet_penalty = np.atleast_1d(np.asarray(self.unmet_penalty, dtype=float))
        self.capacity = np.asarray(self.capacity, dtype=float)
        self.delay_threshold = np.atleast_1d(np.asarray(self.delay_threshold, dtype=float))

    @property
    def min_delay(self) -> np.ndarray:
        """Per-area distance to the closest candidate node."""
        return self.delay.min(axis=1)


@dataclass
class GeneratorConfig:
    seed: int = 0
    num_areas: int = 15
    num_nodes: int = 10
    support_size: int = 100
    cost_scale: float = 1.0          # h, multiplies placement costs
    decay_rate: float = 25.0         # b, impact decay in ms
    variation_ratio: float = 0.5     # sigma_bar / mu_bar
    eps_mu: float = 0.8
    eps_sigma: float = 0.2
    budget: float = 100.0
    min_nodes: int = 1
    delay_weight: float = 0.001      # rho
    delay_threshold: float = 35.0    # Delta
    capacity_pool: tuple = (84.0, 96.0, 128.0)
    cost_range: tuple = (20.0, 30.0)
    penalty_range: tuple = (30.0, 40.0)
    mean_range: tuple = (20.0, 50.0)

    def validate(self) -> None:
        if self.num_areas < 1 or self.num_nodes < 1:
            raise ConfigurationError("need at least one area and one node")
        if self.support_size < 2:
            raise ConfigurationError("support size must be >= 2")
        if not (0.0 <= self.eps_mu <= 1.0 and 0.0 <= self.eps_sigma <= 1.0):
            raise ConfigurationError("eps_mu and eps_sigma must lie in [0, 1]")
        if self.variation_ratio <= 0:
            raise ConfigurationError("variation ratio must be positive")
        if self.decay_rate <= 0:
            raise ConfigurationError("decay rate must be positive")
        if self.cost_scale < 0 or self.budget <= 0:
            raise ConfigurationError("cost scale must be >= 0 and budget > 0")
        if not 0 <= self.min_nodes <= self.num_nodes:
            raise ConfigurationError("min_nodes outside [0, num_nodes]")
        if not self.capacity_pool:
            raise ConfigurationError("capacity pool is empty")
        for lo, hi in (self.cost_range, self.penalty_range, self.mean_range):
            if lo > hi:
                raise ConfigurationError(f"range ({lo}, {hi}) has lo > hi")


def default_paper_config(**overrides) -> GeneratorConfig:
    """The default experimental setting; keyword overrides applied on top."""
    return GeneratorConfig(**overrides)


def generate_instance(config: GeneratorConfig) -> tuple[NetworkInstance, DemandSpec]:
    """Deterministically generate an instance + demand spec from a config."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    I, J = config.num_areas, config.num_nodes

    # planar stand-in for real ping data: scaled Euclidean distances
    node_xy = rng.uniform(0.0, 1.0, size=(J, 2))
    area_xy = rng.uniform(0.0, 1.0, size=(I, 2))
    raw = np.linalg.norm(area_xy[:, None, :] - node_xy[None, :, :], axis=2)
    lo, hi = DELAY_RANGE_MS
    span = raw.max() - raw.min()
    if span > 1e-12:
        delay = lo + (hi - lo) * (raw - raw.min()) / span
    else:
        delay = np.full_like(raw, 0.5 * (lo + hi))

    f = rng.uniform(*config.cost_range, size=J) * config.cost_scale
    s = rng.uniform(*config.penalty_range, size=I)
    cmax = rng.choice(np.asarray(config.capacity_pool, dtype=float), size=J)
    mu_bar = rng.uniform(*config.mean_range, size=I)
    sigma_bar = config.variation_ratio * mu_bar

    # capacity pre-allocated by relative historical demand
    share = mu_bar / mu_bar.sum()
    capacity = cmax[None, :] * share[:, None]

    # impact factors decay with delay; rows scaled so each sums to <= 1
    raw_psi = np.exp(-delay / config.decay_rate)
    row_sum = raw_psi.sum(axis=1)
    scale = np.minimum(1.0, 1.0 / row_sum)
    psi = raw_psi * scale[:, None]

    sigma_floor = sigma_bar * np.sqrt(np.maximum(0.0, 1.0 - psi.sum(axis=1)))

    rho = config.delay_weight
    # keep the standing assumption s_i > rho * d_ij strict
    if s.min() <= rho * delay.max():
        rho = 0.9 * s.min() / delay.max()

    inst = NetworkInstance(
        num_areas=I,
        num_nodes=J,
        delay=delay,
        placement_cost=f,
        unmet_penalty=s,
        capacity=capacity,
        budget=config.budget,
        min_nodes=config.min_nodes,
        delay_weight=rho,
        delay_threshold=np.full(I, config.delay_threshold, dtype=float),
    )
    spec = DemandSpec(
        support=np.arange(1.0, config.support_size + 1.0),
        mu_bar=mu_bar,
        sigma_bar=sigma_bar,
        psi_mu=psi,
        psi_sigma=psi.copy(),
        gamma_mu=config.eps_mu * mu_bar,
        gamma_sigma_lo=np.full(I, 1.0 - config.eps_sigma),
        gamma_sigma_hi=np.full(I, 1.0 + config.eps_sigma),
        sigma_floor=sigma_floor,
        endogenous=True,
    )
    return inst, spec


def validate_instance(inst: NetworkInstance) -> list[str]:
    """Invariant violations, empty when the instance is usable."""
    bad = []
    if inst.delay.shape != (inst.num_areas, inst.num_nodes):
        bad.append("delay-shape")
        return bad
    if np.any(inst.delay <= 0):
        bad.append("delay-positivity")
    if np.any(inst.unmet_penalty[:, None] <= inst.delay_weight * inst.delay):
        bad.append("penalty-dominance")
    if np.any(inst.capacity < 0):
        bad.append("capacity-negative")
    if inst.budget <= 0:
        bad.append("budget-positive")
    if not 0 <= inst.min_nodes <= inst.num_nodes:
        bad.append("k-min-range")
    else:
        cheapest = np.sort(inst.placement_cost)[:inst.min_nodes].sum()
        if cheapest > inst.budget + 1e-12:
            bad.append("budget-vs-K_min")
    return bad


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _inst_to_dict(inst: NetworkInstance) -> dict:
    return {
        "num_areas": inst.num_areas,
        "num_nodes": inst.num_nodes,
        "delay": inst.delay.tolist(),
        "placement_cost": inst.placement_cost.tolist(),
        "unmet_penalty": inst.unmet_penalty.tolist(),
        "capacity": inst.capacity.tolist(),
        "budget": inst.budget,
        "min_nodes": inst.min_nodes,
        "delay_weight": inst.delay_weight,
        "delay_threshold": inst.delay_threshold.tolist(),
    }


def _spec_to_dict(spec: DemandSpec) -> dict:
    return {
        "support": spec.support.tolist(),
        "mu_bar": spec.mu_bar.tolist(),
        "sigma_bar": spec.sigma_bar.tolist(),
        "psi_mu": spec.psi_mu.tolist(),
        "psi_sigma": spec.psi_sigma.tolist(),
        "gamma_mu": spec.gamma_mu.tolist(),
        "gamma_sigma_lo": spec.gamma_sigma_lo.tolist(),
        "gamma_sigma_hi": spec.gamma_sigma_hi.tolist(),
        "sigma_floor": spec.sigma_floor.tolist(),
        "endogenous": spec.endogenous,
    }


def save_instance(path, inst: NetworkInstance, spec: DemandSpec,
                  seed: int | None = None) -> None:
    doc = {
        "meta": {"schema_version": SCHEMA_VERSION, "seed": seed},
        "instance": _inst_to_dict(inst),
        "demand": _spec_to_dict(spec),
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_instance(path) -> tuple[NetworkInstance, DemandSpec, dict]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"{path}: not valid JSON ({exc})") from exc
    meta = doc.get("meta", {})
    version = meta.get("schema_version")
    if version != SCHEMA_VERSION:
        raise InstanceFormatError(
            f"{path}: schema_version {version!r}, expected {SCHEMA_VERSION}")
    for key in ("instance", "demand"):
        if key not in doc:
            raise InstanceFormatError(f"{path}: missing top-level block {key!r}")
    d = doc["instance"]
    try:
        inst = NetworkInstance(
            num_areas=int(d["num_areas"]),
            num_nodes=int(d["num_nodes"]),
            delay=np.array(d["delay"], dtype=float),
            placement_cost=np.array(d["placement_cost"], dtype=float),
            unmet_penalty=np.array(d["unmet_penalty"], dtype=float),
            capacity=np.array(d["capacity"], dtype=float),
            budget=float(d["budget"]),
            min_nodes=int(d["min_nodes"]),
            delay_weight=float(d["delay_weight"]),
            delay_threshold=np.array(d["delay_threshold"], dtype=float),
        )
    except KeyError as exc:
        raise InstanceFormatError(f"{path}: instance block missing field {exc}") from exc
    if np.any(inst.delay <= 0):
        raise InstanceFormatError(f"{path}: delays must be positive")
    g = doc["demand"]
    try:
        psi_mu = np.array(g["psi_mu"], dtype=float)
        if "psi_sigma" in g:
            psi_sigma = np.array(g["psi_sigma"], dtype=float)
        else:
            warnings.warn(f"{path}: demand block has no psi_sigma; "
                          "defaulting to psi_mu", stacklevel=2)
            psi_sigma = psi_mu.copy()
        spec = DemandSpec(
            support=np.array(g["support"], dtype=float),
            mu_bar=np.array(g["mu_bar"], dtype=float),
            sigma_bar=np.array(g["sigma_bar"], dtype=float),
            psi_mu=psi_mu,
            psi_sigma=psi_sigma,
            gamma_mu=np.array(g["gamma_mu"], dtype=float),
            gamma_sigma_lo=np.array(g["gamma_sigma_lo"], dtype=float),
            gamma_sigma_hi=np.array(g["gamma_sigma_hi"], dtype=float),
            sigma_floor=np.array(g["sigma_floor"], dtype=float),
            endogenous=bool(g.get("endogenous", True)),
        )
    except KeyError as exc:
        raise InstanceFormatError(f"{path}: demand block missing field {exc}") from exc
    return inst, spec, meta


def export_csv(directory, inst: NetworkInstance, spec: DemandSpec) -> list[Path]:
    """Write the matrix blocks as CSV files for eyeballing/diffing."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    matrices = {
        "d.csv": inst.delay,
        "C.csv": inst.capacity,
        "psi_mu.csv": spec.psi_mu,
        "psi_sigma.csv": spec.psi_sigma,
    }
    for name, mat in matrices.items():
        p = directory / name
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            for row in np.atleast_2d(mat):
                w.writerow([repr(float(v)) for v in row])
        out.append(p)
    return out
