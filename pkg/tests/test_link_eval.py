import dataclasses
import json
import math

import numpy as np
import pytest
from scipy.stats import binom

from regenscatter.channel import distance_for_power
from regenscatter import link_eval
from regenscatter.errors import ConfigError, DomainError, LengthError, SyncError
from regenscatter.link_eval import (
    Link,
    LinkMetrics,
    ModelBundle,
    ModemSettings,
    SweepSpec,
    default_bundle,
    downlink_ber_estimate,
    downlink_eb_n0,
    eb_n0_db,
    load_model_file,
    measure_ber,
    run_downlink_point,
    run_sweep,
    run_uplink_point,
    uplink_ber_estimate,
    uplink_eb_n0,
    uplink_rx_power,
)
from regenscatter.signal_core import RandomSource


def test_measure_ber_examples():
    a = np.random.default_rng(0).integers(0, 2, 1000)
    assert measure_ber(a, a) == (0, 0.0)
    assert measure_ber(a, 1 - a) == (1000, 1.0)
    b = a.copy()
    b[17] ^= 1
    assert measure_ber(a, b) == (1, 0.001)
    with pytest.raises(LengthError):
        measure_ber(a, a[:-1])


def test_eb_n0_examples():
    assert eb_n0_db(-80.0, -174.0, 20e3) - eb_n0_db(-80.0, -174.0, 60e3) == pytest.approx(4.771, abs=1e-3)
    assert eb_n0_db(-174.0 + 10 * math.log10(20e3), -174.0, 20e3) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(DomainError):
        eb_n0_db(-80.0, -174.0, 0.0)


def test_eb_n0_distance_doubling(models):
    assert downlink_eb_n0(models, 50, 20e3) - downlink_eb_n0(models, 100, 20e3) == pytest.approx(6.0206, abs=1e-4)


def test_link_metrics():
    m = LinkMetrics("down", 1.0, 1e3, 0.0, -60.0, 10.0, 200, 5)
    assert m.ber == 0.025
    with pytest.raises(DomainError):
        LinkMetrics("down", 1.0, 1e3, 0.0, -60.0, 10.0, 0, 0)


def test_bundle_roundtrip_and_overrides():
    m = ModelBundle()
    assert ModelBundle.from_dict(json.loads(json.dumps(m.to_dict()))) == m
    m2 = ModelBundle.from_dict({"uplink_amp": {"p_sat_out": -50}, "saturated_retransmit": False}, base=m)
    assert m2.uplink_amp.p_sat_out == -50 and m2.uplink_amp.Q == m.uplink_amp.Q
    assert m2.saturated_retransmit is False
    with pytest.raises(ConfigError):
        ModelBundle.from_dict({"uplink_amp": {"nope": 1}})
    with pytest.raises(ConfigError):
        ModelBundle.from_dict({"bogus": {}})
    with pytest.raises(ConfigError):
        ModelBundle.from_dict({"uplink_amp": {"Q": -1.0}})
    with pytest.raises(ConfigError):
        ModelBundle.from_dict({"saturated_retransmit": "yes"})


def test_bundle_params():
    m = ModelBundle()
    assert m.get_param("uplink_amp.Q") == 210.0
    m2 = m.with_params({"uplink_amp.p_sat_out": -55.0})
    assert m2.uplink_amp.p_sat_out == -55.0 and m.uplink_amp.p_sat_out == -40.0
    with pytest.raises(ConfigError):
        m.get_param("uplink_amp.nope")
    with pytest.raises(ConfigError):
        m.with_params({"uplink_amp": 1.0})


def test_model_file_loading(tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps({"schema_version": 1, "models": ModelBundle().to_dict()}))
    assert load_model_file(p) == ModelBundle()
    p.write_text("{}")
    with pytest.raises(ConfigError):
        load_model_file(p)


def test_default_bundle_is_calibrated(models):
    assert models != ModelBundle()
    assert models.uplink_amp.g_small == pytest.approx(30.0, abs=0.5)


def test_modem_settings_validation():
    with pytest.raises(ConfigError):
        ModemSettings(fsk_tone_bin=7)
    with pytest.raises(ConfigError):
        ModemSettings(frame_bits=0)


def test_downlink_noiseless_is_error_free(models):
    for d in (5.0, 500.0):
        r = run_downlink_point(d, 20e3, 0.0, models, RandomSource(0, 0), 5000, noise=False)
        assert r.n_errors == 0 and not r.sync_failed


def test_sync_failure_counts_every_bit_and_flags(models, monkeypatch):
    def fail(*a, **k):
        raise SyncError("no level crossing")

    monkeypatch.setattr(link_eval, "ask_demodulate", fail)
    r = run_downlink_point(10.0, 20e3, 0.0, models, RandomSource(0, 0), 3000)
    assert r.sync_failed and r.n_errors == r.n_bits == 3000


def test_uplink_noiseless_is_error_free(models):
    r = run_uplink_point(300.0, 60e3, 0.0, models, RandomSource(0, 0), 5000, noise=False)
    assert r.n_errors == 0


@pytest.mark.parametrize("rate", [20e3, 60e3])
def test_downlink_short_range(models, rate):
    r = run_downlink_point(5.0, rate, 0.0, models, RandomSource(1, 0), 10**4)
    assert r.ber < 1e-4


def test_downlink_below_sensitivity_is_coin_flip(models):
    d = distance_for_power(models.downlink_geometry, models.rectifier.sensitivity - 20.0)
    r = run_downlink_point(d, 20e3, 0.0, models, RandomSource(2, 0), 10**4)
    assert r.ber == pytest.approx(0.5, abs=0.05)


def test_uplink_anchors(models):
    assert run_uplink_point(5.0, 200e3, 0.0, models, RandomSource(3, 0), 10**4).ber <= 1e-2
    assert run_uplink_point(40.0, 500.0, 0.0, models, RandomSource(3, 1), 10**4).ber <= 1e-2


def test_points_are_deterministic(models):
    a = run_downlink_point(200.0, 20e3, 0.0, models, RandomSource(9, 3), 3000)
    b = run_downlink_point(200.0, 20e3, 0.0, models, RandomSource(9, 3), 3000)
    assert a == b
    c = run_downlink_point(200.0, 20e3, 0.0, models, RandomSource(9, 4), 3000)
    assert c.n_errors != a.n_errors


def test_frames_split_payload(models):
    m = dataclasses.replace(models, modem=dataclasses.replace(models.modem, frame_bits=1500))
    r = run_downlink_point(200.0, 20e3, 0.0, m, RandomSource(0, 0), 4000)
    assert r.n_bits == 4000
    u = run_uplink_point(5.0, 200e3, 0.0, m, RandomSource(0, 0), 4000)
    assert u.n_bits == 4000


def _binomial_band(ber, n, k=3.0):
    s = math.sqrt(max(ber * (1 - ber), 1.0 / n) / n)
    return k * s


def test_uplink_ber_estimate_matches_monte_carlo(models):
    n = 10**5
    mc = run_uplink_point(5.0, 200e3, 0.0, models, RandomSource(4, 0), n).ber
    lo, hi = binom.ppf([1e-4, 1 - 1e-4], n, uplink_ber_estimate(models, 5.0, 200e3)) / n
    assert lo <= mc <= hi


def test_downlink_ber_estimate_tracks_monte_carlo(models):
    # the closed form ignores the slicing threshold's own noise, which only
    # adds errors; averaged over many short frames the excess stays small
    m = dataclasses.replace(models, modem=dataclasses.replace(models.modem, frame_bits=2000))
    est = downlink_ber_estimate(m, 200.0, 20e3)
    mc = np.mean([run_downlink_point(200.0, 20e3, 0.0, m, RandomSource(s, 0), 10**5).ber for s in range(3)])
    assert est <= mc <= 1.3 * est


def test_sweep_order_and_shape(models):
    spec = SweepSpec("down", [200.0, 100.0], [20e3, 60e3], bits_per_point=1000, models=models)
    rows = run_sweep(spec)
    assert [(r.distance, r.bit_rate) for r in rows] == [(200, 20e3), (200, 60e3), (100, 20e3), (100, 60e3)]
    assert rows == run_sweep(spec, threads=3)


def test_sweep_validation(models):
    with pytest.raises(ConfigError):
        SweepSpec("down", [], [20e3], models=models)
    with pytest.raises(ConfigError):
        SweepSpec("down", [1.0], [20e3], bits_per_point=10, models=models)
    with pytest.raises(ValueError):
        SweepSpec("sideways", [1.0], [20e3], models=models)
    spec = SweepSpec("down", [10.0], [20e3], offsets=[0.0, -1.0], bits_per_point=1000, models=models)
    with pytest.raises(ConfigError, match="row 1"):
        run_sweep(spec)


def test_sweep_warns_on_unresolvable_floor(models):
    spec = SweepSpec("down", [10.0], [20e3], bits_per_point=1000, models=models, ber_floor=1e-4)
    with pytest.warns(UserWarning):
        run_sweep(spec)


def test_sweep_eb_n0_regression(models):
    d = [5.0, 10.0, 20.0, 40.0, 80.0, 160.0]
    spec = SweepSpec(Link.DOWN, d, [20e3, 60e3], bits_per_point=1000, models=models, noise=False)
    rows = run_sweep(spec)
    e20 = [r.eb_n0 for r in rows if r.bit_rate == 20e3]
    e60 = [r.eb_n0 for r in rows if r.bit_rate == 60e3]
    assert np.polyfit(np.log2(d), e20, 1)[0] == pytest.approx(-6.02, abs=0.1)
    np.testing.assert_allclose(np.array(e20) - np.array(e60), 10 * math.log10(3), atol=0.01)
    assert all(r.n_errors == 0 for r in rows)


def test_uplink_eb_n0_saturated_slope(models):
    d = np.array([5.0, 10.0, 20.0, 40.0])
    e = [uplink_eb_n0(models, x, 500.0) for x in d]
    assert np.polyfit(np.log2(d), e, 1)[0] == pytest.approx(-6.02, abs=0.1)
    p_lin = [uplink_rx_power(models, x, saturated=False) for x in d]
    assert np.polyfit(np.log2(d), p_lin, 1)[0] == pytest.approx(-12.04, abs=0.2)


def test_sweep_ber_nonincreasing_in_eb_n0(models):
    spec = SweepSpec("down", [150.0, 200.0, 250.0, 300.0], [20e3, 60e3], bits_per_point=20000, models=models)
    rows = run_sweep(spec)
    for a in rows:
        for b in rows:
            if b.eb_n0 - a.eb_n0 >= 3.0 and 1e-4 < a.ber < 0.4 and 1e-4 < b.ber < 0.4:
                assert b.ber <= a.ber + _binomial_band(a.ber, a.n_bits) + _binomial_band(b.ber, b.n_bits)
