"""Convergence upper bound of TT-Fed for user-supplied problem constants."""
import json
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

log = logging.getLogger(__name__)


class BoundError(ArithmeticError):
    pass


@dataclass(frozen=True)
class BoundConstants:
    L: float
    mu: float
    chi: float = 0.0
    nu: float = 0.0
    delta: float = 0.0
    epsilon: float = 0.0
    beta: float = 1.0
    phi: float = 0.0
    gap0: float = 1.0
    failure_fractions: Tuple[float, ...] = (0.0,)
    xi: Optional[float] = None

    def __post_init__(self):
        if not (self.L > 0.0 and self.mu > 0.0):
            raise ValueError("L and mu must be positive")
        for name in ("chi", "nu", "delta", "epsilon", "beta", "phi", "gap0"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")
        if not self.failure_fractions:
            raise ValueError("need one failure fraction per tier")
        if any(not 0.0 <= f <= 1.0 for f in self.failure_fractions):
            raise ValueError("failure fractions must lie in [0, 1]")
        object.__setattr__(self, "failure_fractions", tuple(float(f) for f in self.failure_fractions))
        if self.xi is None:
            object.__setattr__(self, "xi", self.num_tiers / 2.0)
        if not 0.0 < self.xi < self.num_tiers:
            raise ValueError(f"xi must lie in (0, {self.num_tiers})")

    @property
    def num_tiers(self) -> int:
        return len(self.failure_fractions)

    @classmethod
    def from_file(cls, path: str) -> "BoundConstants":
        with open(path, "r") as f:
            raw = json.load(f)
        raw.pop("ks", None)
        if "failure_fractions" in raw:
            raw["failure_fractions"] = tuple(raw["failure_fractions"])
        return cls(**raw)


@dataclass
class Proposition1Verdict:
    ok: bool
    reasons: List[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok


def _failure_factor(c: BoundConstants, fraction: float) -> float:
    return 1.0 + (1.0 + c.beta) ** 2 * fraction


def delta1(c: BoundConstants) -> float:
    terms = [c.L * c.epsilon ** 2 + 3.0 / (4.0 * c.L) * (c.phi ** 2 + c.chi * _failure_factor(c, f))
             for f in c.failure_fractions]
    return math.fsum(terms) / c.num_tiers


def delta2(c: BoundConstants) -> float:
    terms = [1.0 - 4.0 * c.delta * c.L - 3.0 * c.nu * _failure_factor(c, f) for f in c.failure_fractions]
    return math.fsum(terms) / c.num_tiers


def contraction_factor(c: BoundConstants) -> float:
    return 1.0 - c.mu * c.xi / (2.0 * c.L) * delta2(c)


def asymptote(c: BoundConstants) -> float:
    d2 = delta2(c)
    if d2 == 0.0:
        raise BoundError("delta2 is zero: the bound divides by zero")
    return 2.0 * delta1(c) * c.L / (c.mu * d2)


def convergence_bound(c: BoundConstants, K: int) -> float:
    if K < 0:
        raise ValueError("K must be non-negative")
    limit = asymptote(c)
    rho_k = contraction_factor(c) ** K
    return rho_k * c.gap0 + limit * (1.0 - rho_k)


def check_proposition1(c: BoundConstants) -> Proposition1Verdict:
    reasons = []
    ratio = c.mu / (2.0 * c.L)
    if not 0.0 <= ratio <= 1.0 / c.num_tiers:
        reasons.append("tier-count bound")
    drift = 4.0 * c.delta * c.L + 3.0 * c.nu * (1.0 + (1.0 + c.beta) ** 2)
    if not 0.0 <= drift <= 1.0:
        reasons.append("drift bound")
    return Proposition1Verdict(not reasons, reasons)


def bound_table(c: BoundConstants, ks: Sequence[int]) -> List[Tuple[int, float, bool]]:
    """Rows (K, bound, proposition holds); a failed proposition is logged once."""
    verdict = check_proposition1(c)
    if not verdict:
        log.warning("convergence conditions violated (%s); bound is not guaranteed", ", ".join(verdict.reasons))
    return [(k, convergence_bound(c, k), verdict.ok) for k in ks]
