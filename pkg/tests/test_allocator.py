import itertools
import logging
import math

import numpy as np
import pytest

from ttfed import wireless
from ttfed.allocator import (Allocator, CapacityInfeasibleError, InfeasibleDeadlineError, QualifiedUser,
                             lambda_coeff, objective_value, optimal_bandwidth, select_equal_bandwidth,
                             select_users)
from ttfed.numerics import bisect_root
from ttfed.wireless import ChannelParams

log = logging.getLogger(__name__)


@pytest.fixture
def params():
    return ChannelParams.from_db(3.76, -174.0, 0.01, 0.0, 2e7, 1e5)


def _user(u, weight, bandwidth, tier=1):
    q = QualifiedUser(u, tier, 100, 1.0, 1.0, 1e-10, 100.0)
    q.weight = weight
    q.bandwidth = bandwidth
    return q


def _oracle_bandwidth(model_size, slack, gain, params):
    need = model_size / slack

    def f(b):
        return b * math.log1p(params.tx_power * gain / (params.noise_psd * b)) / wireless.LN2 - need

    hi = 1e-3
    while f(hi) <= 0.0:
        hi *= 2.0
    lo = hi / 2.0
    return bisect_root(f, lo, hi, lo * 1e-12)


def test_closed_form_matches_bisection(params):
    rng = np.random.default_rng(7)
    checked = 0
    while checked < 1000:
        model_size = 10 ** rng.uniform(4.0, 7.0)
        slack = 10 ** rng.uniform(-3.0, 0.0)
        distance = rng.uniform(10.0, 600.0)
        gain = wireless.path_loss(distance, params.path_loss_exponent)
        lam = lambda_coeff(model_size, slack, gain, params)
        if not 1e-9 < lam < 0.95:
            continue
        b = optimal_bandwidth(lam, model_size, slack)
        assert b == pytest.approx(_oracle_bandwidth(model_size, slack, gain, params), rel=1e-6)
        # the upload lands exactly on the deadline
        p = ChannelParams(params.path_loss_exponent, params.noise_psd, params.tx_power,
                          params.snr_threshold, params.total_bandwidth, model_size)
        assert wireless.comm_delay(b, gain, p) == pytest.approx(slack, rel=1e-6)
        checked += 1


def test_near_capacity_boundary(params):
    lam = 1.0 - 1e-6
    b = optimal_bandwidth(lam, 1e5, 0.1)
    assert math.isfinite(b) and b > 0.0


def test_infeasible_inputs(params):
    with pytest.raises(CapacityInfeasibleError):
        optimal_bandwidth(1.0, 1e5, 0.1)
    with pytest.raises(CapacityInfeasibleError):
        optimal_bandwidth(3.0, 1e5, 0.1)
    with pytest.raises(InfeasibleDeadlineError):
        lambda_coeff(1e5, 0.0, 1e-10, params)
    with pytest.raises(InfeasibleDeadlineError):
        lambda_coeff(1e5, -0.5, 1e-10, params)
    assert optimal_bandwidth(0.5, 0.0, 0.1) == 0.0


def test_greedy_takes_heaviest_first():
    users = [_user(0, 1.0, 4.0), _user(1, 3.0, 5.0), _user(2, 2.0, 6.0)]
    plan = select_users(users, 10.0)
    assert plan.selected() == [1]
    assert plan.allocated == 5.0
    assert plan.flags == {0: 0, 1: 1, 2: 0}


def test_greedy_skip_variant():
    users = [_user(0, 1.0, 4.0), _user(1, 3.0, 5.0), _user(2, 2.0, 6.0)]
    plan = select_users(users, 10.0, greedy_skip=True)
    assert plan.selected() == [0, 1]


def test_greedy_ties_break_on_user_id():
    users = [_user(2, 1.0, 5.0), _user(1, 1.0, 5.0), _user(0, 1.0, 5.0)]
    assert select_users(users, 10.0).selected() == [0, 1]


def test_budget_exactly_spent():
    users = [_user(0, 2.0, 4.0), _user(1, 1.0, 6.0)]
    assert select_users(users, 10.0).selected() == [0, 1]


def test_equal_bandwidth_policy():
    users = [_user(0, 3.0, 1.0), _user(1, 2.0, 2.0), _user(2, 1.0, 8.0)]
    plan = select_equal_bandwidth(users, 9.0)
    assert plan.selected() == [0, 1]
    assert plan.bandwidth == {0: 4.5, 1: 4.5}


def test_allocator_drops_infeasible_users(params):
    alloc = Allocator(params)
    ok = QualifiedUser(0, 1, 100, 0.5, 0.5, wireless.path_loss(100.0, 3.76), 100.0)
    late = QualifiedUser(1, 1, 100, 0.5, -0.1, wireless.path_loss(100.0, 3.76), 100.0)
    plan = alloc.plan([ok, late], num_tiers=1)
    assert plan.selected() == [0]
    assert alloc.dropped == 1
    assert ok.weight == pytest.approx(0.5 * 100 * wireless.stp(ok.bandwidth, 100.0, params))


def test_equal_weight_policy_overrides_alpha(params):
    alloc = Allocator(params, policy="equal_weight")
    users = [QualifiedUser(u, 1, 100, 0.9 if u else 0.0, 0.5, wireless.path_loss(200.0, 3.76), 200.0)
             for u in range(2)]
    alloc.plan(users, num_tiers=4)
    assert [q.alpha for q in users] == [0.25, 0.25]


def test_unknown_policy(params):
    with pytest.raises(ValueError):
        Allocator(params, policy="random")


def _random_candidates(rng, params, n):
    return [QualifiedUser(u, int(rng.integers(1, 4)), int(rng.integers(1, 300)), float(rng.uniform(0.0, 1.0)),
                          float(rng.uniform(-0.05, 0.5)), 0.0, float(rng.uniform(5.0, 600.0)))
            for u in range(n)]


def test_plans_respect_constraints(params):
    rng = np.random.default_rng(11)
    alloc = Allocator(params)
    for _ in range(10_000):
        candidates = _random_candidates(rng, params, int(rng.integers(1, 9)))
        for c in candidates:
            c.gain_power = wireless.path_loss(c.distance, params.path_loss_exponent)
        plan = alloc.plan(candidates, num_tiers=3)
        assert plan.allocated <= params.total_bandwidth * (1.0 + 1e-12)
        assert set(plan.flags) <= {c.user_id for c in candidates}
        by_id = {c.user_id: c for c in candidates}
        for u in plan.selected():
            c = by_id[u]
            assert c.slack > 0.0 and c.lam < 1.0
            assert wireless.comm_delay(plan.bandwidth[u], c.gain_power, params) <= c.slack * (1.0 + 1e-6)


def test_greedy_against_brute_force(params):
    rng = np.random.default_rng(12)
    alloc = Allocator(params)
    ratios = []
    for _ in range(200):
        candidates = _random_candidates(rng, params, int(rng.integers(2, 13)))
        for c in candidates:
            c.slack = abs(c.slack) + 1e-3
            c.gain_power = wireless.path_loss(c.distance, params.path_loss_exponent)
        qualified = [q for q in (alloc.qualify(c) for c in candidates) if q is not None]
        if not qualified:
            continue
        budget = 0.5 * sum(q.bandwidth for q in qualified)
        plan = select_users(qualified, budget)
        greedy = objective_value(plan, qualified, params)

        n = len(qualified)
        masks = (np.arange(2 ** n)[:, None] >> np.arange(n)) & 1
        bw = np.array([q.bandwidth for q in qualified])
        weight = np.array([q.weight for q in qualified])
        feasible = masks @ bw <= budget
        best = float((masks @ weight)[feasible].max())
        assert greedy <= best * (1.0 + 1e-9)
        if best > 0.0:
            ratios.append(greedy / best)
    log.info("greedy / optimum: min %.3f, mean %.3f", min(ratios), sum(ratios) / len(ratios))
    assert ratios


def test_larger_budget_never_lowers_greedy_objective(params):
    rng = np.random.default_rng(13)
    alloc = Allocator(params)
    sets = 0
    while sets < 2000:
        candidates = _random_candidates(rng, params, int(rng.integers(1, 9)))
        for c in candidates:
            c.slack = abs(c.slack) + 1e-3
            c.gain_power = wireless.path_loss(c.distance, params.path_loss_exponent)
        qualified = [q for q in (alloc.qualify(c) for c in candidates) if q is not None]
        if not qualified:
            continue
        sets += 1
        top = 1.1 * sum(q.bandwidth for q in qualified)
        values = [objective_value(select_users(qualified, b), qualified, params)
                  for b in np.linspace(0.0, top, 30)]
        assert all(later >= earlier for earlier, later in zip(values, values[1:]))


def test_skip_variant_selection_is_not_nested_in_budget():
    users = [_user(0, 3.0, 9.0), _user(1, 2.0, 4.0), _user(2, 1.0, 4.0)]
    assert select_users(users, 8.0, greedy_skip=True).selected() == [1, 2]
    assert select_users(users, 10.0, greedy_skip=True).selected() == [0]
