"""Shared helpers: tiny consistent instances and brute-force oracles."""

import itertools

import numpy as np
import pytest

from edgeplace.instance import GeneratorConfig, generate_instance
from edgeplace.moments import is_ambiguity_nonempty, worst_case_distribution
from edgeplace.recourse import theta_table


def tiny_config(seed, rng, max_areas=4, max_nodes=5, max_support=6):
    """Random desk-size config whose demand stats live inside the support."""
    I = int(rng.integers(2, max_areas + 1))
    J = int(rng.integers(2, max_nodes + 1))
    N = int(rng.integers(3, max_support + 1))
    return GeneratorConfig(
        seed=seed,
        num_areas=I, num_nodes=J, support_size=N,
        mean_range=(0.30 * N, 0.55 * N),
        variation_ratio=float(rng.uniform(0.3, 0.7)),
        eps_mu=float(rng.uniform(0.3, 0.9)),
        eps_sigma=float(rng.uniform(0.1, 0.4)),
        budget=float(rng.uniform(40, 130)),
        min_nodes=int(rng.integers(0, 2)),
        delay_threshold=float(rng.uniform(10, 70)),
        delay_weight=float(rng.choice([0.001, 0.01, 0.05])),
        capacity_pool=tuple(rng.uniform(0.3 * N, 1.6 * N, size=3)),
    )


def feasible_placements(inst):
    """All binary placements satisfying budget and minimum count."""
    out = []
    for bits in itertools.product([0, 1], repeat=inst.num_nodes):
        y = np.array(bits, dtype=float)
        if inst.placement_cost @ y > inst.budget + 1e-9:
            continue
        if y.sum() < inst.min_nodes:
            continue
        out.append(y)
    return out


def consistent_tiny_instance(seed, rng=None, **kwargs):
    """Generate a tiny instance whose ambiguity set is nonempty for every
    feasible placement, rejecting and reseeding until that holds."""
    rng = rng or np.random.default_rng(seed)
    attempt = seed
    while True:
        cfg = tiny_config(attempt, rng, **kwargs)
        inst, spec = generate_instance(cfg)
        ys = feasible_placements(inst)
        if ys and all(is_ambiguity_nonempty(spec, y) for y in ys):
            return inst, spec, ys
        attempt += 10007


def brute_force_optimum(inst, spec, placements):
    """min over feasible placements of spend + worst-case expectation."""
    best, besty = np.inf, None
    for y in placements:
        tab = theta_table(inst, spec.support, y)
        _, wc = worst_case_distribution(spec, y, tab)
        val = float(inst.placement_cost @ y) + wc
        if val < best - 1e-12:
            best, besty = val, y
    return best, besty


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240809)
