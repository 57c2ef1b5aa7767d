"""Per-round user selection and bandwidth allocation for TT-Fed.

Each qualified user gets the smallest bandwidth that lands its upload exactly
on its tier deadline; users are then admitted greedily by contribution weight
until the bandwidth budget is spent.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

from . import wireless
from .numerics import INV_E, lambert_w_minus1
from .wireless import ChannelParams

log = logging.getLogger(__name__)

POLICIES = ("proposed", "equal_bandwidth", "equal_weight")


class InfeasibleDeadlineError(ValueError):
    pass


class CapacityInfeasibleError(ValueError):
    pass


@dataclass
class QualifiedUser:
    user_id: int
    tier: int
    data_size: int
    alpha: float
    slack: float
    gain_power: float
    distance: float
    lam: float = math.nan
    bandwidth: float = math.nan
    weight: float = math.nan


@dataclass
class RoundPlan:
    flags: Dict[int, int] = field(default_factory=dict)
    bandwidth: Dict[int, float] = field(default_factory=dict)
    allocated: float = 0.0

    def selected(self) -> List[int]:
        return sorted(u for u, a in self.flags.items() if a)


def lambda_coeff(model_size: float, slack: float, gain_power: float, params: ChannelParams) -> float:
    if not slack > 0.0:
        raise InfeasibleDeadlineError(f"local computation leaves no time to upload (slack {slack!r} s)")
    if not gain_power > 0.0:
        raise InfeasibleDeadlineError("channel gain is zero")
    return model_size * params.noise_psd * wireless.LN2 / (params.tx_power * gain_power * slack)


def optimal_bandwidth(lam: float, model_size: float, slack: float) -> float:
    """Bandwidth at which the upload finishes exactly when the slack runs out."""
    if lam >= 1.0:
        raise CapacityInfeasibleError(f"capacity coefficient {lam!r} >= 1: deadline unreachable at any bandwidth")
    if model_size == 0.0:
        return 0.0
    if not lam > 0.0:
        raise ValueError(f"capacity coefficient must be positive, got {lam!r}")
    if not slack > 0.0:
        raise InfeasibleDeadlineError(f"non-positive slack {slack!r}")

    w = lambert_w_minus1(max(-lam * math.exp(-lam), -INV_E))
    # t is the SNR per Hz at the optimum: log1p(t) = lam * t
    t = -(w + lam) / lam
    for _ in range(3):
        phi = math.log1p(t) - lam * t
        dphi = 1.0 / (1.0 + t) - lam
        if dphi == 0.0:
            break
        t_next = t - phi / dphi
        if not t_next > 0.0 or abs(math.log1p(t_next) - lam * t_next) >= abs(phi):
            break
        t = t_next
    return model_size * wireless.LN2 / (slack * lam * t)


def contribution_weight(alpha: float, data_size: int, b: float, d: float, params: ChannelParams) -> float:
    return alpha * data_size * wireless.stp(b, d, params)


def select_users(qualified: Sequence[QualifiedUser], budget: float, greedy_skip: bool = False) -> RoundPlan:
    plan = RoundPlan(flags={q.user_id: 0 for q in qualified})
    for q in sorted(qualified, key=lambda q: (-q.weight, q.user_id)):
        if plan.allocated + q.bandwidth <= budget:
            plan.flags[q.user_id] = 1
            plan.bandwidth[q.user_id] = q.bandwidth
            plan.allocated += q.bandwidth
        elif not greedy_skip:
            break
    return plan


def select_equal_bandwidth(qualified: Sequence[QualifiedUser], budget: float) -> RoundPlan:
    """Largest top-weight prefix whose members all meet their deadline on B/n each."""
    ranked = sorted(qualified, key=lambda q: (-q.weight, q.user_id))
    plan = RoundPlan(flags={q.user_id: 0 for q in qualified})
    for n in range(len(ranked), 0, -1):
        share = budget / n
        if all(q.bandwidth <= share for q in ranked[:n]):
            for q in ranked[:n]:
                plan.flags[q.user_id] = 1
                plan.bandwidth[q.user_id] = share
                plan.allocated += share
            break
    return plan


def objective_value(plan: RoundPlan, qualified: Sequence[QualifiedUser], params: ChannelParams) -> float:
    by_id = {q.user_id: q for q in qualified}
    return math.fsum(
        by_id[u].alpha * by_id[u].data_size * wireless.stp(plan.bandwidth[u], by_id[u].distance, params)
        for u in plan.selected())


class Allocator:
    def __init__(self, params: ChannelParams, policy: str = "proposed", greedy_skip: bool = False):
        if policy not in POLICIES:
            raise ValueError(f"unknown scheduling policy {policy!r}")
        self.params = params
        self.policy = policy
        self.greedy_skip = greedy_skip
        self.dropped = 0

    def qualify(self, user: QualifiedUser) -> Optional[QualifiedUser]:
        """Fill in lambda, bandwidth and weight; None if the user cannot make its deadline."""
        try:
            user.lam = lambda_coeff(self.params.model_size, user.slack, user.gain_power, self.params)
            user.bandwidth = optimal_bandwidth(user.lam, self.params.model_size, user.slack)
        except (InfeasibleDeadlineError, CapacityInfeasibleError) as e:
            log.debug("user %d dropped: %s", user.user_id, e)
            self.dropped += 1
            return None
        user.weight = contribution_weight(user.alpha, user.data_size, user.bandwidth, user.distance, self.params)
        return user

    def plan(self, candidates: Sequence[QualifiedUser], num_tiers: int) -> RoundPlan:
        if self.policy == "equal_weight":
            for c in candidates:
                c.alpha = 1.0 / num_tiers
        qualified = [q for q in (self.qualify(c) for c in candidates) if q is not None]
        if self.policy == "equal_bandwidth":
            return select_equal_bandwidth(qualified, self.params.total_bandwidth)
        return select_users(qualified, self.params.total_bandwidth, self.greedy_skip)
