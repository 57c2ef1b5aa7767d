import math

import numpy as np
import pytest

from ttfed import wireless
from ttfed.streams import Purpose, substream
from ttfed.wireless import ChannelParams, ComputeProfile, WirelessDomainError


@pytest.fixture
def params():
    return ChannelParams.from_db(3.76, -174.0, 0.01, 0.0, 2e7, 1e5)


def test_db_conversions(params):
    assert params.noise_psd == pytest.approx(3.981e-21, rel=1e-3)
    assert params.snr_threshold == 1.0
    assert wireless.db_to_linear(10.0) == pytest.approx(10.0)


def test_params_validation():
    with pytest.raises(WirelessDomainError):
        ChannelParams(1.5, 1e-20, 0.01, 1.0, 2e7, 1e5)
    with pytest.raises(WirelessDomainError):
        ChannelParams(3.0, 1e-20, 0.0, 1.0, 2e7, 1e5)
    with pytest.raises(WirelessDomainError):
        ChannelParams(3.0, 1e-20, 0.01, 1.0, 2e7, -1.0)


def test_path_loss():
    assert wireless.path_loss(0.5, 3.76) == 1.0
    assert wireless.path_loss(1.0, 3.76) == 1.0
    assert wireless.path_loss(100.0, 2.0) == pytest.approx(1e-4)
    with pytest.raises(WirelessDomainError):
        wireless.path_loss(-1.0, 2.0)


def test_rate_matches_shannon(params):
    g = wireless.path_loss(300.0, params.path_loss_exponent)
    b = 1e6
    snr = params.tx_power * g / (params.noise_psd * b)
    assert wireless.achievable_rate(b, g, params) == pytest.approx(b * math.log2(1.0 + snr), rel=1e-12)
    assert wireless.achievable_rate(b, g, params) < wireless.rate_limit(g, params)


@pytest.mark.parametrize("d", [50.0, 300.0, 600.0])
def test_rate_gap_shrinks_as_bandwidth_grows(params, d):
    g = wireless.path_loss(d, params.path_loss_exponent)
    limit = wireless.rate_limit(g, params)
    # the grid ends where the per-Hz SNR is still large enough to resolve the gap
    top = params.tx_power * g / params.noise_psd * 10.0
    gaps = [limit - wireless.achievable_rate(b, g, params) for b in np.geomspace(top * 1e-8, top, 40)]
    assert all(gap > 0.0 for gap in gaps)
    assert all(later < earlier for earlier, later in zip(gaps, gaps[1:]))


def test_rate_rejects_zero_bandwidth(params):
    with pytest.raises(WirelessDomainError):
        wireless.achievable_rate(0.0, 1e-10, params)


def test_comm_delay(params):
    g = wireless.path_loss(300.0, params.path_loss_exponent)
    assert wireless.comm_delay(1e6, g, params) == pytest.approx(
        params.model_size / wireless.achievable_rate(1e6, g, params))
    assert wireless.comm_delay(1e6, 0.0, params) == math.inf
    empty = ChannelParams(3.76, params.noise_psd, 0.01, 1.0, 2e7, 0.0)
    assert wireless.comm_delay(1e6, g, empty) == 0.0


def test_stp_limits(params):
    assert wireless.stp(0.0, 300.0, params) == 1.0
    values = [wireless.stp(b, 500.0, params) for b in (1e5, 1e6, 1e7)]
    assert values[0] > values[1] > values[2] > 0.0
    with pytest.raises(WirelessDomainError):
        wireless.stp(-1.0, 300.0, params)


@pytest.mark.parametrize("b, d, gamma_db", [
    (1e6, 300.0, 0.0),
    (4e6, 600.0, 0.0),
    (1e6, 600.0, 10.0),
    (2e7, 200.0, 20.0),
    (5e5, 450.0, 5.0),
])
def test_stp_matches_empirical_rate(b, d, gamma_db):
    params = ChannelParams.from_db(3.76, -174.0, 0.01, gamma_db, 2e7, 1e5)
    rng = substream(11, Purpose.FADING, int(b), int(d))
    fading = rng.exponential(1.0, size=100_000)
    empirical = np.mean(fading >= wireless.success_threshold(b, d, params))
    assert empirical == pytest.approx(wireless.stp(b, d, params), abs=0.01)


def test_draw_success_uses_threshold(params):
    rng = substream(5, Purpose.FADING, 0)
    outcomes = [wireless.draw_success(4e6, 600.0, params, rng) for _ in range(2000)]
    assert set(outcomes) <= {0, 1}
    assert np.mean(outcomes) == pytest.approx(wireless.stp(4e6, 600.0, params), abs=0.05)
    assert wireless.draw_success(0.0, 600.0, params, rng) == 1


def test_channel_draw(params):
    draw = wireless.draw_channel(3, 7, 250.0, 3.76, substream(1, Purpose.FADING, 3, 7))
    assert draw.user_id == 3 and draw.round_index == 7
    assert draw.fading_power >= 0.0
    assert draw.gain_power == pytest.approx(draw.fading_power * 250.0 ** -3.76)
    again = wireless.draw_channel(3, 7, 250.0, 3.76, substream(1, Purpose.FADING, 3, 7))
    assert again == draw


def test_transmission_succeeds_against_threshold(params):
    threshold = wireless.success_threshold(1e6, 400.0, params)
    above = wireless.ChannelDraw(0, 1, threshold * 1.01, 0.0)
    below = wireless.ChannelDraw(0, 1, threshold * 0.99, 0.0)
    assert wireless.transmission_succeeds(above, 1e6, 400.0, params)
    assert not wireless.transmission_succeeds(below, 1e6, 400.0, params)


def test_compute_delay():
    profile = ComputeProfile(cpu_freq=2e9, cycles_per_sample=5e5, local_epochs=2, dataset_size=125)
    assert wireless.compute_delay(profile) == pytest.approx(2 * 125 * 5e5 / 2e9)
