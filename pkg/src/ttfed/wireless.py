"""Uplink physical layer: path loss, block fading, rate, delay and the
successful transmission probability of an FDMA user, plus local compute time.

The downlink is not modelled; broadcasts are instantaneous and always arrive.
"""
import math
from dataclasses import dataclass

import numpy as np

LN2 = math.log(2.0)


class WirelessDomainError(ValueError):
    pass


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_per_hz_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class ChannelParams:
    """Linear-unit channel constants shared by every user of a run."""
    path_loss_exponent: float
    noise_psd: float        # W/Hz
    tx_power: float         # W
    snr_threshold: float    # linear
    total_bandwidth: float  # Hz
    model_size: float       # bits

    def __post_init__(self):
        if self.path_loss_exponent < 2.0:
            raise WirelessDomainError("path loss exponent must be >= 2")
        for name in ("noise_psd", "tx_power", "snr_threshold", "total_bandwidth"):
            if not getattr(self, name) > 0.0:
                raise WirelessDomainError(f"{name} must be positive")
        if self.model_size < 0.0:
            raise WirelessDomainError("model_size must be non-negative")

    @classmethod
    def from_db(cls, path_loss_exponent: float, noise_psd_db: float, tx_power: float,
                snr_threshold_db: float, total_bandwidth: float, model_size: float) -> "ChannelParams":
        return cls(
            path_loss_exponent=path_loss_exponent,
            noise_psd=dbm_per_hz_to_watts(noise_psd_db),
            tx_power=tx_power,
            snr_threshold=db_to_linear(snr_threshold_db),
            total_bandwidth=total_bandwidth,
            model_size=model_size,
        )


@dataclass(frozen=True)
class ChannelDraw:
    user_id: int
    round_index: int
    fading_power: float
    gain_power: float


@dataclass(frozen=True)
class ComputeProfile:
    cpu_freq: float
    cycles_per_sample: float
    local_epochs: int
    dataset_size: int


def path_loss(d: float, alpha: float) -> float:
    if d < 0.0:
        raise WirelessDomainError(f"negative distance {d!r}")
    if d <= 1.0:
        return 1.0
    return d ** (-alpha)


def achievable_rate(b: float, gain_power: float, params: ChannelParams) -> float:
    """Shannon rate b*log2(1 + P|g|^2 / (N0 b)) in bit/s."""
    if not b > 0.0:
        raise WirelessDomainError(f"bandwidth must be positive, got {b!r}")
    snr = params.tx_power * gain_power / (params.noise_psd * b)
    return b * math.log1p(snr) / LN2


def rate_limit(gain_power: float, params: ChannelParams) -> float:
    """Supremum of the rate as b grows without bound."""
    return params.tx_power * gain_power / (params.noise_psd * LN2)


def comm_delay(b: float, gain_power: float, params: ChannelParams) -> float:
    if params.model_size == 0.0:
        return 0.0
    rate = achievable_rate(b, gain_power, params)
    if rate == 0.0:
        return math.inf
    return params.model_size / rate


def success_threshold(b: float, d: float, params: ChannelParams) -> float:
    """Fading power a transmission on bandwidth b at distance d must reach."""
    if b == 0.0:
        return 0.0
    return params.snr_threshold * params.noise_psd * b / (
        params.tx_power * path_loss(d, params.path_loss_exponent))


def stp(b: float, d: float, params: ChannelParams) -> float:
    if b < 0.0:
        raise WirelessDomainError(f"bandwidth must be non-negative, got {b!r}")
    return math.exp(-success_threshold(b, d, params))


def draw_success(b: float, d: float, params: ChannelParams, rng: np.random.Generator) -> int:
    """One Bernoulli outcome of the uplink using a fresh exponential fading draw."""
    if b == 0.0:
        return 1
    fading = rng.exponential(1.0)
    return int(fading >= success_threshold(b, d, params))


def draw_channel(user_id: int, round_index: int, d: float, alpha: float,
                 rng: np.random.Generator) -> ChannelDraw:
    fading = float(rng.exponential(1.0))
    return ChannelDraw(user_id, round_index, fading, fading * path_loss(d, alpha))


def transmission_succeeds(draw: ChannelDraw, b: float, d: float, params: ChannelParams) -> bool:
    return draw.fading_power >= success_threshold(b, d, params)


def compute_delay(profile: ComputeProfile) -> float:
    return profile.local_epochs * profile.dataset_size * profile.cycles_per_sample / profile.cpu_freq
