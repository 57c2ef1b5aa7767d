"""Server-side merge rules for FedAvg, FedAsync, FedAT and TT-Fed."""
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Sequence

import numpy as np

from .learner import ParamVector


class AggregationError(ValueError):
    pass


class EmptyTierError(AggregationError):
    pass


@dataclass(frozen=True)
class Upload:
    user_id: int
    data_size: int
    params: ParamVector


@dataclass
class TierSchedule:
    num_tiers: int
    membership: Dict[int, int]
    tier_data: Dict[int, int]
    delta_t: float

    def members(self, m: int) -> List[int]:
        return sorted(u for u, t in self.membership.items() if t == m)

    def due_tiers(self, k: int) -> List[int]:
        return [m for m in range(1, self.num_tiers + 1) if k % m == 0]

    def dispatched_tiers(self, k: int) -> List[int]:
        """Tiers that receive the global model at the start of round k."""
        return [m for m in range(1, self.num_tiers + 1) if (k - 1) % m == 0]


@dataclass
class AggregationInput:
    round_index: int
    previous_global: ParamVector
    tier_uploads: Dict[int, List[Upload]] = field(default_factory=dict)


def weighted_mean(uploads: Sequence[Upload]) -> ParamVector:
    if not uploads:
        raise AggregationError("no uploads to aggregate")
    ordered = sorted(uploads, key=lambda up: up.user_id)
    total = sum(up.data_size for up in ordered)
    if total <= 0:
        raise AggregationError("uploads carry no data")
    acc = np.zeros_like(ordered[0].params)
    for up in ordered:
        acc += up.data_size * up.params
    return acc / total


def fedavg_aggregate(uploads: Sequence[Upload]) -> ParamVector:
    return weighted_mean(uploads)


def fedasync_aggregate(w_prev: ParamVector, w_new: ParamVector, psi: float) -> ParamVector:
    if not 0.0 < psi < 1.0:
        raise AggregationError(f"mixing weight psi must lie in (0, 1), got {psi!r}")
    return psi * w_new + (1.0 - psi) * w_prev


def fedat_aggregate(tier_models: Sequence[ParamVector], weights: Sequence[float]) -> ParamVector:
    if len(tier_models) != len(weights) or not tier_models:
        raise AggregationError("need one weight per tier model")
    if any(a < 0.0 for a in weights) or abs(math.fsum(weights) - 1.0) > 1e-12:
        raise AggregationError(f"tier weights must form a simplex, got {list(weights)}")
    out = weights[0] * tier_models[0]
    for a, w in zip(weights[1:], tier_models[1:]):
        out = out + a * w
    return out


def swap_weights(update_counts: Sequence[int]) -> List[Fraction]:
    """Weight tier m by the update count of tier M+1-m, normalised exactly."""
    total = sum(update_counts)
    if total <= 0:
        raise AggregationError("tier weights undefined before any tier update")
    return [Fraction(c, total) for c in reversed(update_counts)]


def tier_weight_fractions(k: int, num_tiers: int) -> List[Fraction]:
    if k < 1 or num_tiers < 1:
        raise AggregationError(f"tier weights need k >= 1 and M >= 1, got k={k}, M={num_tiers}")
    return swap_weights([k // m for m in range(1, num_tiers + 1)])


def ttfed_tier_weights(k: int, num_tiers: int) -> np.ndarray:
    return np.array([float(a) for a in tier_weight_fractions(k, num_tiers)])


def ttfed_intra_tier(uploads: Sequence[Upload]) -> ParamVector:
    if not uploads:
        raise EmptyTierError("no successful upload in tier")
    return weighted_mean(uploads)


def ttfed_global(inp: AggregationInput, schedule: TierSchedule) -> ParamVector:
    k = inp.round_index
    for m, ups in inp.tier_uploads.items():
        if ups and k % m != 0:
            raise AggregationError(f"tier {m} is not due in round {k} but carries uploads")

    alphas = ttfed_tier_weights(k, schedule.num_tiers)
    out = None
    for m in range(1, schedule.num_tiers + 1):
        w = inp.previous_global
        if k % m == 0:
            try:
                w = ttfed_intra_tier(inp.tier_uploads.get(m, []))
            except EmptyTierError:
                pass
        term = alphas[m - 1] * w
        out = term if out is None else out + term
    return out
