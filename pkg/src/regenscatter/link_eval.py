"""End-to-end link experiments: BER, Eb/N0 and parameter sweeps."""

from __future__ import annotations

import dataclasses
import enum
import itertools
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Sequence

import numpy as np
from scipy.special import erfc

from .channel import (
    LinkGeometry,
    NoiseModel,
    OffsetKind,
    OffsetPenaltyModel,
    downlink_path,
    friis_received_power,
    offset_penalty,
    thermal_noise_psd,
    uplink_power,
    uplink_roundtrip,
)
from .errors import ConfigError, DomainError, LengthError, SyncError
from .modem import (
    DEFAULT_PREAMBLE,
    AskConfig,
    FskConfig,
    _pole,
    ask_demodulate,
    ask_modulate,
    fsk_demodulate,
    fsk_modulate,
    lowpass_noise_gain,
)
from .regen_frontend import (
    AmplifierBehavioral,
    RectifierModel,
    rectifier_at_rate,
    rectifier_envelope,
    rectifier_transfer,
)
from .signal_core import RandomSource, random_bits


class Link(enum.Enum):
    DOWN = "down"
    UP = "up"


@dataclass(frozen=True)
class ModemSettings:
    samples_per_bit: int = 16
    preamble: tuple = DEFAULT_PREAMBLE
    threshold_fraction: float = 0.5
    lpf_cutoff_ratio: float = 1.0  # low-pass cutoff as a multiple of the bit rate
    fsk_tone_bin: int = 3
    frame_bits: int = 100_000  # payload bits per simulated frame

    def __post_init__(self):
        object.__setattr__(self, "preamble", tuple(int(b) for b in self.preamble))
        if self.frame_bits < 1:
            raise ConfigError("frame_bits must be positive")
        if self.fsk_tone_bin < 1 or self.fsk_tone_bin + 1 >= self.samples_per_bit / 2:
            raise ConfigError("fsk_tone_bin must keep both tones below Nyquist")

    def ask(self, bit_rate: float) -> AskConfig:
        return AskConfig.for_rate(
            bit_rate,
            self.samples_per_bit,
            preamble=self.preamble,
            threshold_fraction=self.threshold_fraction,
            lpf_cutoff=self.lpf_cutoff_ratio * bit_rate,
        )

    def fsk(self, bit_rate: float) -> FskConfig:
        return FskConfig.for_rate(bit_rate, self.samples_per_bit, self.fsk_tone_bin)


@dataclass(frozen=True)
class ModelBundle:
    """Every model parameter of both links.

    ``downlink_noise`` describes the detector: its noise figure sets the
    equivalent input noise density used for Eb/N0 and its bandwidth is the
    video bandwidth in which ``rectifier.baseband_noise_v`` is specified.
    """

    uplink_amp: AmplifierBehavioral = AmplifierBehavioral()
    downlink_amp: AmplifierBehavioral = AmplifierBehavioral(f0=26.3e9, Q=400.0)
    rectifier: RectifierModel = RectifierModel()
    passive_rectifier: RectifierModel = RectifierModel(
        sensitivity=-3.0, v_scale=0.5, exponent_low=1.0, p_linear=0.0, baseband_noise_v=0.25
    )
    uplink_penalty: OffsetPenaltyModel = OffsetPenaltyModel(OffsetKind.UPLINK_COHERENCE, 13.5e6)
    downlink_penalty: OffsetPenaltyModel = OffsetPenaltyModel(OffsetKind.DOWNLINK_RESONANCE)
    downlink_noise: NoiseModel = NoiseModel(290.0, 54.0, 5e6)
    reader_noise: NoiseModel = NoiseModel(290.0, 10.0, 1e6)
    downlink_geometry: LinkGeometry = LinkGeometry(1.0, 26.3e9, eirp=20.0, rx_gain=20.0)
    carrier_geometry: LinkGeometry = LinkGeometry(1.0, 25.98e9, eirp=20.0, rx_gain=15.0)
    return_geometry: LinkGeometry = LinkGeometry(1.0, 25.98e9, eirp=0.0, rx_gain=15.0, tx_gain=5.0)
    modem: ModemSettings = ModemSettings()
    saturated_retransmit: bool = True

    def to_dict(self) -> dict:
        def conv(v):
            if dataclasses.is_dataclass(v):
                return {f.name: conv(getattr(v, f.name)) for f in dataclasses.fields(v)}
            if isinstance(v, enum.Enum):
                return v.value
            if isinstance(v, tuple):
                return list(v)
            return v

        return conv(self)

    @classmethod
    def from_dict(cls, d: dict, base: "ModelBundle | None" = None) -> "ModelBundle":
        """Build a bundle from nested dicts; missing fields keep ``base`` values."""
        if not isinstance(d, dict):
            raise ConfigError("models: expected an object")
        base = cls() if base is None else base
        kwargs = {}
        for f in dataclasses.fields(cls):
            if f.name not in d:
                continue
            v = d[f.name]
            default = getattr(base, f.name)
            if dataclasses.is_dataclass(default):
                if not isinstance(v, dict):
                    raise ConfigError(f"{f.name}: expected an object")
                known = {g.name for g in dataclasses.fields(default)}
                unknown = set(v) - known
                if unknown:
                    raise ConfigError(f"{f.name}: unknown field(s) {sorted(unknown)}")
                try:
                    v = replace(default, **{k: tuple(x) if isinstance(x, list) else x for k, x in v.items()})
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"{f.name}: {exc}") from exc
            elif not isinstance(v, type(default)):
                raise ConfigError(f"{f.name}: expected {type(default).__name__}")
            kwargs[f.name] = v
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"unknown model section(s) {sorted(unknown)}")
        return replace(base, **kwargs)

    def get_param(self, path: str) -> float:
        obj = self
        for part in path.split("."):
            if not hasattr(obj, part):
                raise ConfigError(f"unknown parameter {path!r}")
            obj = getattr(obj, part)
        return obj

    def with_params(self, values: dict) -> "ModelBundle":
        """Return a copy with dotted-path parameters replaced."""
        out = self
        for path, val in values.items():
            head, _, leaf = path.partition(".")
            if not leaf:
                raise ConfigError(f"parameter path {path!r} must be section.field")
            section = getattr(out, head, None)
            if section is None or not hasattr(section, leaf):
                raise ConfigError(f"unknown parameter {path!r}")
            out = replace(out, **{head: replace(section, **{leaf: float(val)})})
        return out


_DEFAULT_MODEL_FILE = "default_model.json"


def load_model_file(path) -> ModelBundle:
    """Read a model file written by the ``calibrate`` command."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or "models" not in doc:
        raise ConfigError(f"{path}: not a model file (no 'models' section)")
    return ModelBundle.from_dict(doc["models"])


def default_bundle() -> ModelBundle:
    """Shipped calibrated bundle (falls back to nominal values if absent)."""
    ref = resources.files("regenscatter.data").joinpath(_DEFAULT_MODEL_FILE)
    if not ref.is_file():
        return ModelBundle()
    return ModelBundle.from_dict(json.loads(ref.read_text(encoding="utf-8"))["models"])


@dataclass(frozen=True)
class LinkMetrics:
    link: str
    distance: float
    bit_rate: float
    offset: float
    p_rx: float
    eb_n0: float
    n_bits: int
    n_errors: int
    sync_failed: bool = False

    def __post_init__(self):
        if self.n_bits <= 0:
            raise DomainError("n_bits must be positive")

    @property
    def ber(self) -> float:
        return self.n_errors / self.n_bits


def measure_ber(tx, rx) -> tuple[int, float]:
    tx = np.asarray(tx, dtype=np.uint8)
    rx = np.asarray(rx, dtype=np.uint8)
    if tx.shape != rx.shape:
        raise LengthError(f"bit streams differ in length ({tx.size} vs {rx.size})")
    if tx.size == 0:
        raise LengthError("bit streams are empty")
    n = int(np.count_nonzero(tx != rx))
    return n, n / tx.size


def eb_n0_db(p_rx: float, noise_psd: float, bit_rate: float) -> float:
    if not bit_rate > 0:
        raise DomainError("bit rate must be positive")
    return p_rx - noise_psd - 10.0 * math.log10(bit_rate)


def _q(x):
    return 0.5 * erfc(np.asarray(x) / math.sqrt(2.0))


def downlink_rx_power(models: ModelBundle, distance: float, delta_f: float = 0.0) -> float:
    g = models.downlink_geometry.at(distance)
    return friis_received_power(g) - offset_penalty(models.downlink_penalty, models.downlink_amp, delta_f)


def uplink_rx_power(models: ModelBundle, distance: float, delta_f: float = 0.0, saturated=None) -> float:
    sat = models.saturated_retransmit if saturated is None else saturated
    return uplink_power(
        models.carrier_geometry.eirp,
        models.carrier_geometry.at(distance),
        models.uplink_amp,
        models.return_geometry.at(distance),
        models.uplink_penalty,
        delta_f,
        sat,
    )[2]


def downlink_eb_n0(models: ModelBundle, distance: float, bit_rate: float, delta_f: float = 0.0) -> float:
    return eb_n0_db(downlink_rx_power(models, distance, delta_f), thermal_noise_psd(models.downlink_noise), bit_rate)


def uplink_eb_n0(models: ModelBundle, distance: float, bit_rate: float, delta_f: float = 0.0) -> float:
    return eb_n0_db(uplink_rx_power(models, distance, delta_f), thermal_noise_psd(models.reader_noise), bit_rate)


def downlink_ber_estimate(models: ModelBundle, distance: float, bit_rate: float, delta_f: float = 0.0) -> float:
    """Closed-form BER of the OOK decoder, ignoring sync and threshold errors.

    Averages the four level transitions seen at the symbol center after the
    single-pole filter, with Gaussian detector noise.
    """
    ms = models.modem
    fs = bit_rate * ms.samples_per_bit
    cutoff = ms.lpf_cutoff_ratio * bit_rate
    rect = rectifier_at_rate(models.rectifier, fs, models.downlink_noise.bandwidth)
    v = float(rectifier_transfer(rect, downlink_rx_power(models, distance, delta_f)))
    sigma = rect.baseband_noise_v * math.sqrt(lowpass_noise_gain(cutoff, fs))
    if sigma == 0:
        return 0.0
    resid = _pole(cutoff, fs) ** (ms.samples_per_bit // 2 + 1)
    thr = ms.threshold_fraction * v
    terms = _q((v - thr) / sigma) + _q((v * (1 - resid) - thr) / sigma) + _q(thr / sigma) + _q((thr - v * resid) / sigma)
    return float(0.25 * terms)


def uplink_ber_estimate(models: ModelBundle, distance: float, bit_rate: float, delta_f: float = 0.0) -> float:
    """Noncoherent orthogonal FSK: ``0.5 exp(-Eb/2N0)``."""
    g = 10.0 ** (uplink_eb_n0(models, distance, bit_rate, delta_f) / 10.0)
    return 0.5 * math.exp(-0.5 * g)


def _frames(n_bits: int, frame_bits: int):
    full, rest = divmod(n_bits, frame_bits)
    return [frame_bits] * full + ([rest] if rest else [])


def _score(sent: np.ndarray, got: np.ndarray, slip: int = 0) -> int:
    """Bit errors with ``got`` advanced by ``slip`` symbols; missing bits count as errors."""
    if slip > 0:
        got = got[slip:]
    elif slip < 0:
        sent = sent[-slip:]
    m = min(sent.size, got.size)
    return int(np.count_nonzero(sent[:m] != got[:m])) + (sent.size - m) + max(0, -slip)


def _score_framed(sent: np.ndarray, got: np.ndarray) -> int:
    # Without a preamble the symbol clock is ambiguous by one whole symbol
    # (offsets o and o - spb score alike at low SNR). Like a pattern-locked
    # BER tester, take the best of the three frame alignments. When every
    # alignment is near 0.5 this reads low by under one binomial sigma.
    return min(_score(sent, got, s) for s in (0, -1, 1))


def run_downlink_point(
    distance: float,
    bit_rate: float,
    delta_f: float,
    models: ModelBundle,
    rng: RandomSource,
    n_bits: int = 100_000,
    noise: bool = True,
) -> LinkMetrics:
    """Random payload through OOK, free space, the detector and the decoder.

    A frame whose sync fails counts every payload bit as an error and is flagged.
    """
    ms = models.modem
    cfg = ms.ask(bit_rate)
    rect = rectifier_at_rate(models.rectifier, cfg.sample_rate, models.downlink_noise.bandwidth)
    if not noise:
        rect = replace(rect, baseband_noise_v=0.0)
    geom = models.downlink_geometry.at(distance)
    errors, failed, p_rx = 0, False, None
    for i, nb in enumerate(_frames(n_bits, ms.frame_bits)):
        sub = rng.substream(i)
        payload = random_bits(nb, sub.substream(0))
        env, p_rx = downlink_path(ask_modulate(payload, cfg), geom, models.downlink_penalty, models.downlink_amp, delta_f)
        with np.errstate(divide="ignore"):
            trace = 10.0 * np.log10(env.samples**2) + 30.0
        det = rectifier_envelope(rect, trace, sub.substream(1), cfg.sample_rate)
        try:
            res = ask_demodulate(det, cfg, n_bits=nb)
        except (SyncError, LengthError):
            failed = True
            errors += nb
            continue
        errors += _score(payload, res.bits)
    ebn0 = eb_n0_db(p_rx, thermal_noise_psd(models.downlink_noise), bit_rate)
    return LinkMetrics("down", distance, bit_rate, delta_f, p_rx, ebn0, n_bits, errors, failed)


def run_uplink_point(
    distance: float,
    bit_rate: float,
    delta_f: float,
    models: ModelBundle,
    rng: RandomSource,
    n_bits: int = 100_000,
    noise: bool = True,
    saturated_retransmit: bool | None = None,
) -> LinkMetrics:
    """Random payload through FSK, the regenerative retransmission and the Goertzel decoder."""
    ms = models.modem
    cfg = ms.fsk(bit_rate)
    sat = models.saturated_retransmit if saturated_retransmit is None else saturated_retransmit
    errors, failed, p_rx = 0, False, None
    for i, nb in enumerate(_frames(n_bits, ms.frame_bits)):
        sub = rng.substream(i)
        payload = random_bits(nb, sub.substream(0))
        rx, p_rx = uplink_roundtrip(
            models.carrier_geometry.eirp,
            models.carrier_geometry.at(distance),
            models.uplink_amp,
            fsk_modulate(payload, cfg),
            models.return_geometry.at(distance),
            models.reader_noise,
            models.uplink_penalty,
            delta_f,
            sub.substream(1),
            saturated_retransmit=sat,
            add_noise=noise,
        )
        try:
            res = fsk_demodulate(rx, cfg)
        except LengthError:
            failed = True
            errors += nb
            continue
        errors += _score_framed(payload, res.bits)
    ebn0 = eb_n0_db(p_rx, thermal_noise_psd(models.reader_noise), bit_rate)
    return LinkMetrics("up", distance, bit_rate, delta_f, p_rx, ebn0, n_bits, errors, failed)


@dataclass(frozen=True)
class SweepSpec:
    link: Link
    distances: Sequence[float]
    bit_rates: Sequence[float]
    offsets: Sequence[float] = (0.0,)
    bits_per_point: int = 100_000
    seed: int = 0
    models: ModelBundle = field(default_factory=default_bundle)
    noise: bool = True
    ber_floor: float | None = None  # smallest BER the sweep must resolve

    def __post_init__(self):
        object.__setattr__(self, "link", Link(self.link))
        for name in ("distances", "bit_rates", "offsets"):
            vals = tuple(float(v) for v in getattr(self, name))
            if not vals:
                raise ConfigError(f"sweep {name} must be nonempty")
            object.__setattr__(self, name, vals)
        if self.bits_per_point < 1000:
            raise ConfigError("bits_per_point must be >= 1000")

    def grid(self):
        return list(itertools.product(self.distances, self.bit_rates, self.offsets))


def run_sweep(spec: SweepSpec, threads: int = 1) -> list[LinkMetrics]:
    """Evaluate every grid point; rows come back in lexicographic grid order.

    Point ``i`` draws from ``RandomSource(seed, i)`` so the table does not
    depend on ``threads``.
    """
    if spec.ber_floor is not None and spec.bits_per_point * spec.ber_floor < 10:
        warnings.warn(
            f"{spec.bits_per_point} bits per point cannot resolve a BER of {spec.ber_floor:g}; "
            f"use at least {math.ceil(10 / spec.ber_floor)}",
            stacklevel=2,
        )
    point = run_downlink_point if spec.link is Link.DOWN else run_uplink_point
    grid = spec.grid()

    def one(i):
        d, r, o = grid[i]
        try:
            return point(d, r, o, spec.models, RandomSource(spec.seed, i), spec.bits_per_point, spec.noise)
        except (ConfigError, DomainError) as exc:
            raise ConfigError(f"row {i} (distance={d}, bit_rate={r}, offset={o}): {exc}") from exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, range(len(grid))))
    return [one(i) for i in range(len(grid))]
