"""Closed-form recourse values against the LP oracle and hand cases."""

import itertools

import numpy as np
import pytest

from edgeplace.instance import NetworkInstance, generate_instance
from edgeplace import recourse
from conftest import tiny_config


def small_instance(**over):
    base = dict(
        num_areas=1, num_nodes=2,
        delay=np.array([[10.0, 30.0]]),
        placement_cost=np.array([5.0, 5.0]),
        unmet_penalty=np.array([35.0]),
        capacity=np.array([[5.0, 100.0]]),
        budget=100.0, min_nodes=0,
        delay_weight=0.001,
        delay_threshold=np.array([20.0]),
    )
    base.update(over)
    return NetworkInstance(**base)


def test_no_placement_drops_everything():
    inst = small_instance()
    y = np.zeros(2)
    val, node, branch = recourse.theta_closed_form(inst, y, 0, 7.0)
    assert val == pytest.approx(35.0 * 7.0)
    assert node == recourse.DROP and branch == recourse.CAPACITY
    lp_val, _, u = recourse.inner_lp(inst, y, [7.0])
    assert lp_val == pytest.approx(val)
    assert u[0] == pytest.approx(7.0)


def test_ample_nearby_capacity_serves_at_min_delay():
    inst = small_instance(capacity=np.array([[50.0, 100.0]]),
                          delay_threshold=np.array([40.0]))
    y = np.ones(2)
    demand = 20.0
    val, node, branch = recourse.theta_closed_form(inst, y, 0, demand)
    assert val == pytest.approx(0.001 * 10.0 * demand)
    assert node == 0
    lp_val, x, u = recourse.inner_lp(inst, y, [demand])
    assert lp_val == pytest.approx(val)
    assert x[0, 0] == pytest.approx(demand)


def test_delay_bound_mixes_nodes():
    # capacities (5, 100), delays (10, 30), threshold 20, demand 20:
    # fill node 0, spend the remaining delay budget at node 1, drop the rest
    inst = small_instance()
    y = np.ones(2)
    val, node, branch = recourse.theta_closed_form(inst, y, 0, 20.0)
    lp_val, x, u = recourse.inner_lp(inst, y, [20.0])
    assert lp_val == pytest.approx(0.001 * (10 * 5 + 30 * 35 / 3) + 35 * 10 / 3)
    assert val == pytest.approx(lp_val, abs=1e-9)
    assert branch == recourse.DELAY
    assert x[0].tolist() == pytest.approx([5.0, 35.0 / 3.0])


def test_capacity_discounts_are_nonpositive():
    inst = small_instance()
    for term in recourse.candidate_terms(inst, 0):
        assert np.all(term.weights <= 1e-12)
        if term.node != recourse.DROP and term.branch == recourse.CAPACITY:
            # real-node delay-threshold rate never exceeds the drop rate
            assert term.rate <= inst.unmet_penalty[0]


def test_assumption_violation_raises():
    inst = small_instance(unmet_penalty=np.array([0.02]))
    with pytest.raises(recourse.AssumptionError):
        recourse.theta_closed_form(inst, np.ones(2), 0, 5.0)


def test_upper_bound_and_equality_at_zero(rng):
    for seed in range(5):
        cfg = tiny_config(seed, rng)
        inst, spec = generate_instance(cfg)
        y0 = np.zeros(inst.num_nodes)
        tab = recourse.theta_table(inst, spec.support, y0)
        cap = inst.unmet_penalty[:, None] * spec.support[None, :]
        assert np.allclose(tab.values, cap)
        y1 = np.ones(inst.num_nodes)
        tab1 = recourse.theta_table(inst, spec.support, y1)
        assert np.all(tab1.values <= cap + 1e-9)
        assert np.all(tab1.values >= -1e-9)


def test_monotone_in_demand(rng):
    cfg = tiny_config(3, rng)
    inst, spec = generate_instance(cfg)
    y = (rng.random(inst.num_nodes) < 0.5).astype(float)
    tab = recourse.theta_table(inst, spec.support, y)
    assert np.all(np.diff(tab.values, axis=1) >= -1e-9)


def test_candidate_weights_match_bit_flips(rng):
    # per candidate the value is affine in y with the stated coefficients
    cfg = tiny_config(11, rng)
    inst, spec = generate_instance(cfg)
    J = inst.num_nodes
    y = (rng.random(J) < 0.5).astype(float)
    for i in range(inst.num_areas):
        for term in recourse.candidate_terms(inst, i):
            base = term.value(y, 3.0)
            for j in range(J):
                flipped = y.copy()
                flipped[j] = 1.0 - flipped[j]
                diff = term.value(flipped, 3.0) - base
                expected = (1.0 - 2.0 * y[j]) * term.weights[j]
                assert diff == pytest.approx(expected, abs=1e-9)


def test_oracle_sweep_all_placements(rng):
    worst = 0.0
    for seed in range(12):
        cfg = tiny_config(100 + seed, rng, max_areas=3, max_nodes=4,
                          max_support=5)
        inst, spec = generate_instance(cfg)
        for bits in itertools.product([0, 1], repeat=inst.num_nodes):
            y = np.array(bits, dtype=float)
            tab = recourse.theta_table(inst, spec.support, y, verify=True)
            assert tab.values.shape == (inst.num_areas, spec.num_support)
    # verify=True raises on any disagreement beyond 1e-6


def test_verify_mode_flags_incomplete_candidates(monkeypatch):
    # dropping the delay-branch vertices makes the closed form underestimate
    # exactly where the delay budget binds; verify mode must catch it
    inst = small_instance()
    good = recourse.theta_table(inst, [5.0, 20.0], np.ones(2), verify=True)
    assert good.values.shape == (1, 2)

    full = recourse.candidate_terms

    def crippled(instance, i):
        return [t for t in full(instance, i) if t.branch != recourse.DELAY]

    monkeypatch.setattr(recourse, "candidate_terms", crippled)
    with pytest.raises(recourse.OracleDisagreementError):
        recourse.theta_table(inst, [5.0, 20.0], np.ones(2), verify=True)
