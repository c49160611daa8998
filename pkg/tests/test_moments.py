"""Moment functions, ambiguity-set queries, and their oracles."""

import itertools

import numpy as np
import pytest

from edgeplace.instance import generate_instance
from edgeplace.moments import (DemandSpec, InfeasibleAmbiguityError,
                               is_ambiguity_nonempty, moment_values,
                               second_moment_expansion,
                               worst_case_distribution)
from edgeplace.recourse import theta_table
from edgeplace.reformulation import inner_dual_value
from conftest import consistent_tiny_instance, tiny_config


def simple_spec(**over):
    base = dict(
        support=np.array([1.0, 2.0, 3.0]),
        mu_bar=np.array([2.0]),
        sigma_bar=np.array([0.5]),
        psi_mu=np.array([[0.2, 0.1]]),
        psi_sigma=np.array([[0.2, 0.1]]),
        gamma_mu=np.array([0.5]),
        gamma_sigma_lo=np.array([0.8]),
        gamma_sigma_hi=np.array([1.2]),
        sigma_floor=np.array([0.0]),
        endogenous=True,
    )
    base.update(over)
    return DemandSpec(**base)


def test_zero_impact_reduces_to_empirical():
    spec = simple_spec(psi_mu=np.zeros((1, 2)), psi_sigma=np.zeros((1, 2)))
    mv = moment_values(spec, np.array([1.0, 1.0]))
    assert mv.mean[0] == pytest.approx(2.0)
    assert mv.variance[0] == pytest.approx(0.25)


def test_no_placement_keeps_empirical():
    mv = moment_values(simple_spec(), np.zeros(2))
    assert mv.mean[0] == pytest.approx(2.0)
    assert mv.variance[0] == pytest.approx(0.25)


def test_mean_shift_hand_value():
    spec = simple_spec(mu_bar=np.array([30.0]), gamma_mu=np.array([5.0]))
    mv = moment_values(spec, np.array([1.0, 1.0]))
    assert mv.mean[0] == pytest.approx(30.0 * 1.3)  # 39


def test_variance_floor_clips():
    spec = simple_spec(psi_sigma=np.array([[0.6, 0.4]]),
                       sigma_floor=np.array([0.3]))
    mv = moment_values(spec, np.array([1.0, 1.0]))
    assert mv.variance[0] == pytest.approx(0.09)
    assert mv.clipped[0]
    mv0 = moment_values(spec, np.zeros(2))
    assert not mv0.clipped[0]


def test_length_mismatch_raises():
    with pytest.raises(ValueError):
        moment_values(simple_spec(), np.zeros(3))


def test_monotone_mean_and_variance(rng):
    cfg = tiny_config(5, rng)
    inst, spec = generate_instance(cfg)
    y = np.zeros(inst.num_nodes)
    prev = moment_values(spec, y)
    for j in range(inst.num_nodes):
        y[j] = 1.0
        cur = moment_values(spec, y)
        assert np.all(cur.mean >= prev.mean - 1e-12)
        assert np.all(cur.variance <= prev.variance + 1e-12)
        prev = cur


def test_singleton_support_pinned():
    spec = simple_spec(support=np.array([2.0]),
                       psi_mu=np.zeros((1, 2)), psi_sigma=np.zeros((1, 2)),
                       mu_bar=np.array([2.0]), sigma_bar=np.array([0.0]),
                       gamma_mu=np.array([0.0]),
                       gamma_sigma_lo=np.array([1.0]),
                       gamma_sigma_hi=np.array([1.0]))
    theta = np.array([[7.0]])
    wcd, val = worst_case_distribution(spec, np.zeros(2), theta)
    assert wcd.probabilities[0, 0] == pytest.approx(1.0)
    assert val == pytest.approx(7.0)


def test_slack_box_puts_mass_on_argmax():
    spec = simple_spec(gamma_mu=np.array([100.0]),
                       gamma_sigma_lo=np.array([1e-6]),
                       gamma_sigma_hi=np.array([100.0]))
    theta = np.array([[1.0, 5.0, 2.0]])
    wcd, val = worst_case_distribution(spec, np.zeros(2), theta)
    assert val == pytest.approx(5.0)
    assert wcd.probabilities[0].tolist() == pytest.approx([0.0, 1.0, 0.0])


def grid_search_worst_case(spec, y, theta, step=1e-3):
    """Exhaustive simplex grid over a 3-point support."""
    mv = moment_values(spec, y)
    xi = spec.support
    best = -np.inf
    s = mv.second_moment[0]
    lo, hi = s * spec.gamma_sigma_lo[0], s * spec.gamma_sigma_hi[0]
    p1 = np.arange(0.0, 1.0 + step / 2, step)
    for a in p1:
        b = np.arange(0.0, 1.0 - a + step / 2, step)
        c = 1.0 - a - b
        m1 = a * xi[0] + b * xi[1] + c * xi[2]
        m2 = a * xi[0] ** 2 + b * xi[1] ** 2 + c * xi[2] ** 2
        ok = (np.abs(m1 - mv.mean[0]) <= spec.gamma_mu[0] + 1e-12) \
            & (m2 >= lo - 1e-12) & (m2 <= hi + 1e-12)
        if ok.any():
            vals = a * theta[0, 0] + b * theta[0, 1] + c * theta[0, 2]
            best = max(best, vals[ok].max())
    return best


def test_three_point_grid_oracle():
    spec = simple_spec()
    y = np.array([1.0, 0.0])
    theta = np.array([[2.0, 1.0, 4.0]])
    _, val = worst_case_distribution(spec, y, theta)
    ref = grid_search_worst_case(spec, y, theta)
    assert val == pytest.approx(ref, abs=5e-3)
    assert val >= ref - 1e-9  # grid is a restriction


def test_nonempty_queries():
    spec = simple_spec()
    assert is_ambiguity_nonempty(spec, np.zeros(2))
    pinned = simple_spec(gamma_mu=np.array([0.0]), mu_bar=np.array([10.0]))
    assert not is_ambiguity_nonempty(pinned, np.zeros(2))  # mean off-support
    heavy = simple_spec(mu_bar=np.array([3.0]), sigma_bar=np.array([4.0]),
                        gamma_sigma_lo=np.array([1.0]),
                        gamma_sigma_hi=np.array([1.0]),
                        psi_mu=np.zeros((1, 2)), psi_sigma=np.zeros((1, 2)))
    # required second moment 25 > max achievable 9
    assert not is_ambiguity_nonempty(heavy, np.zeros(2))


def test_infeasible_ambiguity_raises():
    pinned = simple_spec(gamma_mu=np.array([0.0]), mu_bar=np.array([10.0]))
    with pytest.raises(InfeasibleAmbiguityError):
        worst_case_distribution(pinned, np.zeros(2), np.ones((1, 3)))


def test_exogenous_reduction_matches_zero_impact(rng):
    # endogenous spec with zeroed impacts == exogenous flag, over random tables
    cfg = tiny_config(21, rng)
    inst, spec = generate_instance(cfg)
    zeroed = spec.exogenous_copy()
    manual = DemandSpec(
        support=spec.support, mu_bar=spec.mu_bar, sigma_bar=spec.sigma_bar,
        psi_mu=np.zeros_like(spec.psi_mu),
        psi_sigma=np.zeros_like(spec.psi_sigma),
        gamma_mu=spec.gamma_mu, gamma_sigma_lo=spec.gamma_sigma_lo,
        gamma_sigma_hi=spec.gamma_sigma_hi, sigma_floor=spec.sigma_floor,
        endogenous=True)
    for trial in range(4):
        y = (rng.random(inst.num_nodes) < 0.5).astype(float)
        theta = rng.uniform(0.0, 10.0,
                            size=(inst.num_areas, spec.num_support))
        theta.sort(axis=1)
        _, v1 = worst_case_distribution(zeroed, y, theta)
        _, v2 = worst_case_distribution(manual, y, theta)
        assert v1 == pytest.approx(v2, abs=1e-9)


def test_strong_duality_with_reformulation(rng):
    inst, spec, ys = consistent_tiny_instance(31)
    for y in ys[: min(6, len(ys))]:
        tab = theta_table(inst, spec.support, y)
        _, primal = worst_case_distribution(spec, y, tab)
        _, dual = inner_dual_value(spec, tab, y)
        assert primal == pytest.approx(dual, abs=1e-7, rel=1e-7)


def test_second_moment_expansion_identity(rng):
    cfg = tiny_config(77, rng)
    _, spec = generate_instance(cfg)
    const, lin, cross = second_moment_expansion(spec)
    for _ in range(5):
        y = (rng.random(spec.num_nodes) < 0.5).astype(float)
        mv = moment_values(spec, y)
        val = const + lin @ y
        for i in range(spec.num_areas):
            # strict lower-triangle pair sum (the diagonal already sits in lin)
            pair = 0.5 * (y @ cross[i] @ y - np.diag(cross[i]) @ (y * y))
            val[i] += pair
        assert np.allclose(val, mv.second_moment, atol=1e-9)
