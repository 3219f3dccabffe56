"""Regenerative front end: feedback-loop math and behavioral device models.

The circuit helpers (closed-loop gain, oscillation check, Q of a resonator
with negative resistance, LC resonance, capacitor formulas) are direct
closed forms. The amplifier and rectifier are memoryless behavioral models
whose free parameters are set by :mod:`regenscatter.calibrate`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError, OscillationError
from .signal_core import BasebandSignal, RandomSource, dbm_to_watts

OSCILLATION_EPS = 1e-9
PHASE_TOL_DEG = 1.0


@dataclass(frozen=True)
class LoopModel:
    open_loop_gain: float
    feedback_factor: float
    loop_phase: float = 0.0  # degrees

    def __post_init__(self):
        if not self.open_loop_gain > 0:
            raise DomainError("open-loop gain must be positive")
        if self.feedback_factor < 0:
            raise DomainError("feedback factor must be non-negative")

    @property
    def loop_gain(self) -> float:
        return self.feedback_factor * self.open_loop_gain


def closed_loop_gain(m: LoopModel, eps: float = OSCILLATION_EPS) -> float:
    """Positive-feedback closed-loop gain ``G / (1 - f G)``."""
    denom = 1.0 - m.loop_gain
    if abs(denom) <= eps:
        raise OscillationError(f"loop gain at unity (f*G = {m.loop_gain!r})")
    return m.open_loop_gain / denom


class Stable(NamedTuple):
    gain_margin_db: float
    phase_margin_deg: float


class Oscillating(NamedTuple):
    loop_gain: float
    loop_phase_deg: float


def _phase_distance(phase_deg: float) -> float:
    r = math.fmod(phase_deg, 360.0)
    if r < 0:
        r += 360.0
    return min(r, 360.0 - r)


def barkhausen_check(m: LoopModel, phase_tol: float = PHASE_TOL_DEG):
    """Classify the loop as :class:`Oscillating` or :class:`Stable`.

    Oscillation needs both ``|f G| >= 1`` and a loop phase within
    ``phase_tol`` degrees of a multiple of 360.
    """
    lg = abs(m.loop_gain)
    dist = _phase_distance(m.loop_phase)
    if lg >= 1.0 and dist <= phase_tol:
        return Oscillating(lg, m.loop_phase)
    gm = math.inf if lg == 0 else -20.0 * math.log10(lg)
    return Stable(gm, dist)


@dataclass(frozen=True)
class ResonatorParams:
    L: float
    C: float
    X: float
    R: float
    R_neg: float = 0.0

    def __post_init__(self):
        if min(self.L, self.C, self.X, self.R) <= 0:
            raise DomainError("L, C, X and R must be positive")
        if self.R_neg < 0:
            raise DomainError("R_neg is a magnitude and must be >= 0")


def quality_factor(r: ResonatorParams) -> float:
    net = r.R - r.R_neg
    if net <= 0:
        raise OscillationError("negative resistance cancels all losses")
    return r.X / net


def resonant_frequency(L: float, C: float) -> float:
    """LC natural frequency in Hz."""
    if L <= 0 or C <= 0:
        raise DomainError("L and C must be positive")
    return 1.0 / (2.0 * math.pi * math.sqrt(L * C))


@dataclass(frozen=True)
class InterdigCapParams:
    eps_r: float
    finger_length: float
    n_fingers: int
    A1: float
    A2: float

    def __post_init__(self):
        if self.n_fingers < 3:
            raise DomainError("an interdigitated capacitor needs at least 3 fingers")
        if self.eps_r < 1 or self.finger_length <= 0 or self.A1 + self.A2 <= 0:
            raise DomainError("invalid interdigitated capacitor parameters")


def interdig_capacitance(p: InterdigCapParams) -> float:
    """Interdigitated capacitance ``(eps_r + 1) l (N - 3) (A1 + A2)``."""
    return (p.eps_r + 1.0) * p.finger_length * (p.n_fingers - 3) * (p.A1 + p.A2)


def parallel_plate_capacitance(area: float, eps: float, d: float) -> float:
    if area <= 0 or eps <= 0 or d <= 0:
        raise DomainError("area, permittivity and separation must be positive")
    return area * eps / d


@dataclass(frozen=True)
class AmplifierBehavioral:
    """Regenerative amplifier: compression curve times resonator selectivity.

    Gain is ``g_small`` below ``p_knee_low``, ``g_sat`` above ``p_knee_high``
    and linear in dB between them.
    """

    f0: float = 25.98e9
    Q: float = 210.0
    g_small: float = 30.0
    g_sat: float = 15.0
    p_knee_low: float = -40.0
    p_knee_high: float = -10.0
    p_sat_out: float = -40.0

    def __post_init__(self):
        if not self.Q > 0 or not self.f0 > 0:
            raise DomainError("f0 and Q must be positive")
        if self.g_small < self.g_sat:
            raise DomainError("g_small must be >= g_sat")
        if not self.p_knee_low < self.p_knee_high:
            raise DomainError("p_knee_low must be below p_knee_high")

    @property
    def half_power_bandwidth(self) -> float:
        return self.f0 / self.Q


def selectivity_db(a: AmplifierBehavioral, f):
    """Single-pole resonator magnitude in dB, 0 at ``f0``."""
    x = 2.0 * a.Q * (np.asarray(f, dtype=float) - a.f0) / a.f0
    out = -10.0 * np.log10(1.0 + x * x)
    return float(out) if out.ndim == 0 else out


def compression_db(a: AmplifierBehavioral, p_in):
    out = np.interp(p_in, [a.p_knee_low, a.p_knee_high], [a.g_small, a.g_sat])
    return float(out) if np.ndim(out) == 0 else out


def amp_gain(a: AmplifierBehavioral, p_in, f=None):
    """Gain in dB at input power ``p_in`` (dBm) and frequency ``f`` (Hz, default f0)."""
    f = a.f0 if f is None else f
    return compression_db(a, p_in) + selectivity_db(a, f)


def amp_apply(
    a: AmplifierBehavioral,
    sig: BasebandSignal,
    p_in: float,
    f: float | None = None,
    saturated_retransmit: bool = False,
) -> tuple[BasebandSignal, float]:
    """Amplify a waveform whose nominal power is ``p_in`` dBm.

    Returns the scaled waveform and the output power. With
    ``saturated_retransmit`` the output clamps at ``p_sat_out`` whenever the
    boosted power would reach it.
    """
    if len(sig) == 0:
        raise DomainError("cannot amplify an empty signal")
    g = amp_gain(a, p_in, f)
    p_out = p_in + g
    if saturated_retransmit and p_out >= a.p_sat_out:
        p_out = a.p_sat_out
    k = 10.0 ** ((p_out - p_in) / 20.0)
    return sig.scaled(k), p_out


@dataclass(frozen=True)
class RectifierModel:
    """Envelope detector with square-law and linear regions plus a noise floor.

    ``exponent_low`` applies to input power below ``p_linear``; above it the
    output is proportional to input power. ``baseband_noise_v`` is the RMS
    output noise, referenced to the video bandwidth of the detector.
    """

    sensitivity: float = -60.0
    v_scale: float = 0.1
    exponent_low: float = 1.0
    p_linear: float = -10.0
    baseband_noise_v: float = 1e-6

    def __post_init__(self):
        if not self.v_scale > 0:
            raise DomainError("v_scale must be positive")
        if not self.exponent_low > 0:
            raise DomainError("exponent_low must be positive")
        if self.baseband_noise_v < 0:
            raise DomainError("baseband_noise_v must be >= 0")


def rectifier_transfer(r: RectifierModel, p_in_dbm) -> np.ndarray:
    """Noiseless output voltage for input powers in dBm (``-inf`` gives 0 V)."""
    p = np.asarray(p_in_dbm, dtype=float)
    with np.errstate(over="ignore"):
        w = np.where(np.isneginf(p), 0.0, 10.0 ** ((p - 30.0) / 10.0))
    ratio = w / dbm_to_watts(r.p_linear)
    return r.v_scale * np.where(ratio < 1.0, ratio**r.exponent_low, ratio)


def rectifier_sensitivity(r: RectifierModel) -> float:
    """Input power (dBm) at which the noiseless output equals the noise RMS."""
    if r.baseband_noise_v <= 0:
        return -math.inf
    lvl = r.baseband_noise_v / r.v_scale
    if lvl < 1.0:
        return r.p_linear + 10.0 * math.log10(lvl) / r.exponent_low
    return r.p_linear + 10.0 * math.log10(lvl)


def rectifier_envelope(r: RectifierModel, p_in_trace, rng: RandomSource, sample_rate: float = 1.0) -> BasebandSignal:
    """Detector output for a per-sample input-power trace in dBm, noise added."""
    p = np.asarray(p_in_trace, dtype=float)
    if p.size == 0:
        raise DomainError("input power trace is empty")
    v = rectifier_transfer(r, p)
    if r.baseband_noise_v > 0:
        v = v + rng.generator().standard_normal(v.size) * r.baseband_noise_v
    return BasebandSignal(v, sample_rate)


def rectifier_at_rate(r: RectifierModel, sample_rate: float, video_bandwidth: float) -> RectifierModel:
    """Rescale the noise RMS from the video bandwidth to the Nyquist band of ``sample_rate``.

    Keeps the noise spectral density fixed, so simulations at different sample
    rates see the same detector.
    """
    if video_bandwidth <= 0 or sample_rate <= 0:
        raise DomainError("bandwidth and sample rate must be positive")
    k = math.sqrt(0.5 * sample_rate / video_bandwidth)
    return RectifierModel(r.sensitivity, r.v_scale, r.exponent_low, r.p_linear, r.baseband_noise_v * k)
