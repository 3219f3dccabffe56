import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from regenscatter.channel import (
    SPEED_OF_LIGHT,
    LinkGeometry,
    NoiseModel,
    OffsetKind,
    OffsetPenaltyModel,
    distance_for_power,
    downlink_path,
    friis_received_power,
    noise_power_dbm,
    offset_penalty,
    path_loss_db,
    thermal_noise_psd,
    uplink_power,
    uplink_roundtrip,
)
from regenscatter.errors import DomainError
from regenscatter.modem import FskConfig, fsk_modulate
from regenscatter.regen_frontend import AmplifierBehavioral
from regenscatter.signal_core import BasebandSignal, RandomSource, signal_power, watts_to_dbm

AMP = AmplifierBehavioral()
DOWN_PEN = OffsetPenaltyModel(OffsetKind.DOWNLINK_RESONANCE)
UP_PEN = OffsetPenaltyModel(OffsetKind.UPLINK_COHERENCE, 13.47e6)


def friis_oracle(eirp, gr, f, d):
    # independent form: Pr = EIRP * Gr * (lambda / (4 pi d))^2 in linear units
    lam = 299792458.0 / f
    pr_mw = 10 ** (eirp / 10) * 10 ** (gr / 10) * (lam / (4 * math.pi * d)) ** 2
    return 10 * math.log10(pr_mw)


def test_friis_examples():
    g = LinkGeometry(200.0, 26.3e9, 20.0, 10.0)
    assert friis_received_power(g) == pytest.approx(-76.87, abs=0.01)
    assert friis_received_power(g) == pytest.approx(friis_oracle(20, 10, 26.3e9, 200), abs=1e-9)
    assert friis_received_power(g) - friis_received_power(g.at(400.0)) == pytest.approx(20 * math.log10(2), abs=1e-12)
    lam = SPEED_OF_LIGHT / 26.3e9
    assert friis_received_power(g.at(lam / (4 * math.pi))) == pytest.approx(30.0, abs=1e-12)


def test_friis_35m_horn():
    # 20 dBm EIRP, 20 dBi horn, 26.3 GHz, 35 m; evaluated by the independent oracle
    g = LinkGeometry(35.0, 26.3e9, 20.0, 20.0)
    assert friis_received_power(g) == pytest.approx(friis_oracle(20, 20, 26.3e9, 35.0), abs=1e-9)
    assert friis_received_power(g) == pytest.approx(-51.73, abs=0.01)


@given(st.floats(0.01, 1e5), st.floats(1.0001, 100.0))
def test_friis_decreasing_and_20db_per_decade(d, k):
    g = LinkGeometry(d, 26.3e9)
    assert friis_received_power(g.at(d * k)) < friis_received_power(g)
    assert friis_received_power(g) - friis_received_power(g.at(10 * d)) == pytest.approx(20.0, abs=1e-9)


def test_distance_guard_and_inverse():
    with pytest.raises(DomainError):
        LinkGeometry(0.0, 26.3e9)
    with pytest.raises(DomainError):
        path_loss_db(-1.0, 26.3e9)
    g = LinkGeometry(1.0, 26.3e9, 20.0, 20.0)
    d = distance_for_power(g, -80.0)
    assert friis_received_power(g.at(d)) == pytest.approx(-80.0, abs=1e-9)


def test_thermal_noise_examples():
    assert thermal_noise_psd(NoiseModel()) == pytest.approx(-173.98, abs=0.01)
    assert thermal_noise_psd(NoiseModel(noise_figure=10.0)) - thermal_noise_psd(NoiseModel()) == pytest.approx(10.0)
    assert noise_power_dbm(NoiseModel(bandwidth=60e3)) == pytest.approx(-126.2, abs=0.1)
    with pytest.raises(DomainError):
        NoiseModel(temperature=0.0)


def test_offset_penalty_examples():
    assert offset_penalty(DOWN_PEN, AMP, 0.0) == 0.0
    assert offset_penalty(UP_PEN, AMP, 0.0) == 0.0
    assert offset_penalty(UP_PEN, AMP, 20e6) == pytest.approx(10.0, abs=0.5)
    with pytest.raises(DomainError):
        offset_penalty(DOWN_PEN, AMP, -1.0)
    with pytest.raises(DomainError):
        OffsetPenaltyModel(OffsetKind.UPLINK_COHERENCE)


def test_downlink_penalty_at_nominal_q_falls_short():
    # a Lorentzian with Q = 210 detunes only about 5.5 dB at 100 MHz
    amp = AmplifierBehavioral(f0=26.3e9, Q=210.0)
    x = 2 * 210.0 * 100e6 / 26.3e9
    assert offset_penalty(DOWN_PEN, amp, 100e6) == pytest.approx(10 * math.log10(1 + x * x), abs=1e-12)
    assert offset_penalty(DOWN_PEN, amp, 100e6) < 10.0


@pytest.mark.parametrize("pen", [DOWN_PEN, UP_PEN])
def test_offset_penalty_monotone(pen):
    vals = [offset_penalty(pen, AMP, f) for f in np.linspace(0, 300e6, 301)]
    assert np.all(np.diff(vals) >= 0)


def test_downlink_path_scaling():
    tx = BasebandSignal(np.repeat([1.0, 0.0, 1.0, 1.0], 16), 16e3)
    g = LinkGeometry(35.0, 26.3e9, 20.0, 20.0)
    rx, p = downlink_path(tx, g, DOWN_PEN, AMP)
    rx2, p2 = downlink_path(tx, g.at(70.0), DOWN_PEN, AMP)
    assert p - p2 == pytest.approx(6.0206, abs=1e-4)
    assert watts_to_dbm(float(np.max(rx.samples**2))) == pytest.approx(p, abs=1e-9)
    _, p3 = downlink_path(tx, g, DOWN_PEN, AMP, 50e6)
    assert p3 == pytest.approx(p - offset_penalty(DOWN_PEN, AMP, 50e6))
    with pytest.raises(DomainError):
        downlink_path(BasebandSignal([], 1.0), g, DOWN_PEN, AMP)


def _uplink_slope(sat, amp):
    dist = np.array([5.0, 10.0, 20.0, 40.0])
    p = [
        uplink_power(20.0, LinkGeometry(d, 25.98e9, 20.0, 0.0), amp, LinkGeometry(d, 25.98e9, 0.0, 20.0), UP_PEN, 0.0, sat)[2]
        for d in dist
    ]
    return np.polyfit(np.log2(dist), p, 1)[0]


def test_uplink_slopes():
    amp = AmplifierBehavioral(p_sat_out=-60.0)
    assert _uplink_slope(True, amp) == pytest.approx(-6.02, abs=0.1)
    # below the lower knee the gain is constant, so the linear amplifier is two-way Friis
    lin = AmplifierBehavioral(p_knee_low=-20.0, p_knee_high=-5.0)
    assert _uplink_slope(False, lin) == pytest.approx(-12.04, abs=0.2)


def test_uplink_saturation_depends_only_on_return_leg():
    amp = AmplifierBehavioral(p_sat_out=-60.0)
    up = LinkGeometry(10.0, 25.98e9, 0.0, 20.0)
    outs = {uplink_power(20.0, LinkGeometry(d, 25.98e9), amp, up, UP_PEN)[2] for d in (1.0, 5.0, 20.0)}
    assert len(outs) == 1


def test_uplink_roundtrip_power_and_determinism():
    cfg = FskConfig.for_rate(20e3)
    sig = fsk_modulate(np.random.default_rng(0).integers(0, 2, 200), cfg)
    args = (20.0, LinkGeometry(10.0, 25.98e9, 20.0, 0.0), AmplifierBehavioral(p_sat_out=-50.0), sig,
            LinkGeometry(10.0, 25.98e9, 0.0, 20.0), NoiseModel(), UP_PEN, 0.0)
    clean, p = uplink_roundtrip(*args, RandomSource(1, 1), add_noise=False)
    assert watts_to_dbm(signal_power(clean)) == pytest.approx(p, abs=1e-9)
    a, _ = uplink_roundtrip(*args, RandomSource(1, 1))
    b, _ = uplink_roundtrip(*args, RandomSource(1, 1))
    np.testing.assert_array_equal(a.samples, b.samples)
    noise_var = np.var(a.samples - clean.samples)
    expected = 10 ** ((thermal_noise_psd(NoiseModel()) - 30) / 10) * cfg.sample_rate / 2
    assert noise_var == pytest.approx(expected, rel=0.1)
    _, p_off = uplink_roundtrip(*args[:-1], 20e6, RandomSource(1, 1), add_noise=False)
    assert p - p_off == pytest.approx(offset_penalty(UP_PEN, args[2], 20e6))
