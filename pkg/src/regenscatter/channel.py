"""Free-space propagation, thermal noise, carrier-offset penalties and the
composed downlink and uplink paths."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError
from .regen_frontend import AmplifierBehavioral, amp_apply, amp_gain, selectivity_db
from .signal_core import BasebandSignal, RandomSource, add_awgn, dbm_to_watts, signal_power

SPEED_OF_LIGHT = 299_792_458.0
BOLTZMANN = 1.380649e-23


@dataclass(frozen=True)
class LinkGeometry:
    """One-way link. ``eirp`` in dBm, gains in dBi.

    ``tx_gain`` is only used when the radiated power comes from a device
    output (the tag's retransmission), in which case ``eirp`` is ignored.
    """

    distance: float
    carrier: float
    eirp: float = 20.0
    rx_gain: float = 0.0
    tx_gain: float = 0.0

    def __post_init__(self):
        if not self.distance > 0:
            raise DomainError(f"distance must be positive, got {self.distance}")
        if not self.carrier > 0:
            raise DomainError("carrier frequency must be positive")

    def at(self, distance: float) -> "LinkGeometry":
        return replace(self, distance=distance)


@dataclass(frozen=True)
class NoiseModel:
    temperature: float = 290.0
    noise_figure: float = 0.0
    bandwidth: float = 1e6

    def __post_init__(self):
        if not self.temperature > 0 or not self.bandwidth > 0:
            raise DomainError("temperature and bandwidth must be positive")


class OffsetKind(enum.Enum):
    DOWNLINK_RESONANCE = "downlink_resonance"
    UPLINK_COHERENCE = "uplink_coherence"


@dataclass(frozen=True)
class OffsetPenaltyModel:
    kind: OffsetKind
    sigma_hz: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", OffsetKind(self.kind))
        if self.kind is OffsetKind.UPLINK_COHERENCE and not (self.sigma_hz and self.sigma_hz > 0):
            raise DomainError("uplink coherence penalty needs sigma_hz > 0")


def path_loss_db(distance: float, carrier: float) -> float:
    """Free-space path loss ``20 log10(4 pi d / lambda)``."""
    if not distance > 0:
        raise DomainError(f"distance must be positive, got {distance}")
    lam = SPEED_OF_LIGHT / carrier
    return 20.0 * math.log10(4.0 * math.pi * distance / lam)


def friis_received_power(g: LinkGeometry) -> float:
    """Received power in dBm. Far field is assumed, not checked."""
    return g.eirp + g.rx_gain - path_loss_db(g.distance, g.carrier)


def distance_for_power(g: LinkGeometry, p_rx: float) -> float:
    """Distance at which :func:`friis_received_power` equals ``p_rx``."""
    lam = SPEED_OF_LIGHT / g.carrier
    return lam / (4.0 * math.pi) * 10.0 ** ((g.eirp + g.rx_gain - p_rx) / 20.0)


def thermal_noise_psd(n: NoiseModel) -> float:
    """Noise spectral density in dBm/Hz: ``kT`` plus the noise figure."""
    return 10.0 * math.log10(BOLTZMANN * n.temperature * 1000.0) + n.noise_figure


def noise_power_dbm(n: NoiseModel) -> float:
    return thermal_noise_psd(n) + 10.0 * math.log10(n.bandwidth)


def offset_penalty(m: OffsetPenaltyModel, amp: AmplifierBehavioral, delta_f: float) -> float:
    """Power penalty in dB for a carrier ``delta_f`` Hz away from the tag resonance."""
    if delta_f < 0:
        raise DomainError("offset must be non-negative")
    pen = -selectivity_db(amp, amp.f0 + delta_f)
    if m.kind is OffsetKind.UPLINK_COHERENCE:
        pen += 10.0 * math.log10(math.e) * (delta_f / m.sigma_hz) ** 2
    return pen


def _rescale(sig: BasebandSignal, p_dbm: float, reference_w: float) -> BasebandSignal:
    if reference_w <= 0:
        return sig
    return sig.scaled(math.sqrt(dbm_to_watts(p_dbm) / reference_w))


def downlink_path(
    tx: BasebandSignal,
    g: LinkGeometry,
    penalty: OffsetPenaltyModel,
    amp: AmplifierBehavioral,
    delta_f: float = 0.0,
) -> tuple[BasebandSignal, float]:
    """Reader-to-tag envelope at the detector input.

    The waveform is scaled so its peak instantaneous power equals ``p_rx``;
    detector noise is added later by the rectifier model.
    """
    if len(tx) == 0:
        raise DomainError("transmit signal is empty")
    p_rx = friis_received_power(g) - offset_penalty(penalty, amp, delta_f)
    peak = float(np.max(tx.samples**2))
    return _rescale(tx, p_rx, peak), p_rx


def uplink_power(
    carrier_eirp: float,
    g_down: LinkGeometry,
    amp: AmplifierBehavioral,
    g_up: LinkGeometry,
    penalty: OffsetPenaltyModel,
    delta_f: float = 0.0,
    saturated_retransmit: bool = True,
) -> tuple[float, float, float]:
    """Analytic tag input, tag output and reader-received powers (dBm)."""
    p_tag_in = friis_received_power(replace(g_down, eirp=carrier_eirp))
    p_out = p_tag_in + amp_gain(amp, p_tag_in)
    if saturated_retransmit and p_out >= amp.p_sat_out:
        p_out = amp.p_sat_out
    p_rx = friis_received_power(replace(g_up, eirp=p_out + g_up.tx_gain)) - offset_penalty(penalty, amp, delta_f)
    return p_tag_in, p_out, p_rx


def uplink_roundtrip(
    carrier_eirp: float,
    g_down: LinkGeometry,
    amp: AmplifierBehavioral,
    mod_sig: BasebandSignal,
    g_up: LinkGeometry,
    noise: NoiseModel,
    penalty: OffsetPenaltyModel,
    delta_f: float,
    rng: RandomSource,
    saturated_retransmit: bool = True,
    add_noise: bool = True,
) -> tuple[BasebandSignal, float]:
    """Carrier to the tag, regenerative retransmission, return leg, reader noise.

    Returns the waveform at the reader (mean power ``p_rx``) and ``p_rx``.
    Reader noise has the one-sided density of ``noise`` over the Nyquist band.
    """
    p_tag_in, _, p_rx = uplink_power(carrier_eirp, g_down, amp, g_up, penalty, delta_f, saturated_retransmit)
    tag_in = _rescale(mod_sig, p_tag_in, signal_power(mod_sig))
    tag_out, _ = amp_apply(amp, tag_in, p_tag_in, amp.f0, saturated_retransmit)
    rx = _rescale(tag_out, p_rx, signal_power(tag_out))
    if add_noise:
        n0_w = dbm_to_watts(thermal_noise_psd(noise))
        rx = add_awgn(rx, n0_w * rx.sample_rate / 2.0, rng)
    return rx, p_rx
