"""OOK downlink and FSK uplink modems.

Downlink decoding: low-pass the detector envelope, coarse-align on the
first mid-level crossing, refine by correlating against the known preamble,
derive a slicing threshold from the preamble swing and sample each symbol
at its center.

Uplink decoding: Goertzel magnitudes at the two tones per symbol with a
brute-force search over symbol-timing offsets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import lfilter

from .errors import ConfigError, DomainError, LengthError, SyncError
from .signal_core import BasebandSignal

DEFAULT_PREAMBLE = (1, 0) * 8

# Added to the Goertzel feedback coefficient; only the self-test touches it.
_COEFF_PERTURBATION = 0.0


def _as_bits(bits) -> np.ndarray:
    arr = np.asarray(bits, dtype=np.uint8).reshape(-1)
    if np.any(arr > 1):
        raise DomainError("bits must be 0 or 1")
    return arr


def _samples_per_symbol(sample_rate: float, bit_rate: float) -> int:
    if not bit_rate > 0 or not sample_rate > 0:
        raise ConfigError("bit_rate and sample_rate must be positive")
    ratio = sample_rate / bit_rate
    spb = int(round(ratio))
    if abs(ratio - spb) > 1e-9 * ratio:
        raise ConfigError(f"sample_rate / bit_rate = {ratio} is not an integer")
    return spb


@dataclass(frozen=True)
class AskConfig:
    bit_rate: float
    sample_rate: float
    preamble: tuple = DEFAULT_PREAMBLE
    threshold_fraction: float = 0.5
    lpf_cutoff: float | None = None  # defaults to the bit rate

    def __post_init__(self):
        object.__setattr__(self, "preamble", tuple(int(b) for b in self.preamble))
        spb = _samples_per_symbol(self.sample_rate, self.bit_rate)
        if spb < 8:
            raise ConfigError("sample_rate must be at least 8x the bit rate")
        if any(b not in (0, 1) for b in self.preamble):
            raise ConfigError("preamble must be binary")
        if not 0 < self.threshold_fraction < 1:
            raise ConfigError("threshold_fraction must lie in (0, 1)")
        if self.lpf_cutoff is None:
            object.__setattr__(self, "lpf_cutoff", float(self.bit_rate))
        if not 0 < self.lpf_cutoff < self.sample_rate / 2:
            raise ConfigError("lpf_cutoff must lie in (0, sample_rate/2)")

    @classmethod
    def for_rate(cls, bit_rate, samples_per_bit=16, **kw) -> "AskConfig":
        return cls(bit_rate=bit_rate, sample_rate=bit_rate * samples_per_bit, **kw)

    @property
    def samples_per_symbol(self) -> int:
        return _samples_per_symbol(self.sample_rate, self.bit_rate)


@dataclass(frozen=True)
class FskConfig:
    tone0: float
    tone1: float
    bit_rate: float
    sample_rate: float
    sync_stride: int = 1

    def __post_init__(self):
        _samples_per_symbol(self.sample_rate, self.bit_rate)
        if self.tone0 == self.tone1:
            raise ConfigError("FSK tones must differ")
        for t in (self.tone0, self.tone1):
            if not 0 < t < self.sample_rate / 2:
                raise ConfigError(f"tone {t} Hz outside (0, sample_rate/2)")
        if self.sync_stride < 1:
            raise ConfigError("sync_stride must be >= 1")

    @classmethod
    def for_rate(cls, bit_rate, samples_per_bit=16, tone_bin=3, **kw) -> "FskConfig":
        """Orthogonal tones on adjacent DFT bins of the symbol window."""
        return cls(
            tone0=tone_bin * bit_rate,
            tone1=(tone_bin + 1) * bit_rate,
            bit_rate=bit_rate,
            sample_rate=bit_rate * samples_per_bit,
            **kw,
        )

    @property
    def samples_per_symbol(self) -> int:
        return _samples_per_symbol(self.sample_rate, self.bit_rate)


@dataclass(frozen=True)
class DecodeResult:
    bits: np.ndarray
    sync_offset_samples: int
    per_bit_metric: np.ndarray = field(repr=False)


def ask_modulate(payload, cfg: AskConfig) -> BasebandSignal:
    """On-off keyed envelope: preamble then payload, one level per symbol."""
    bits = _as_bits(payload)
    if bits.size == 0:
        raise DomainError("payload is empty")
    frame = np.concatenate([np.asarray(cfg.preamble, dtype=np.uint8), bits])
    return BasebandSignal(np.repeat(frame.astype(float), cfg.samples_per_symbol), cfg.sample_rate)


def _pole(cutoff: float, sample_rate: float) -> float:
    # feedback coefficient placing the -3 dB point of a(1 - b z^-1)^-1 exactly at cutoff
    c = math.cos(2.0 * math.pi * cutoff / sample_rate)
    return (2.0 - c) - math.sqrt((2.0 - c) ** 2 - 1.0)


def lowpass(sig: BasebandSignal, cutoff: float, initial=None) -> BasebandSignal:
    """Single-pole IIR smoother with unity DC gain.

    The filter state starts at the first sample (or ``initial``) so a constant
    input passes through unchanged.
    """
    if not 0 < cutoff < sig.sample_rate / 2:
        raise ConfigError(f"cutoff {cutoff} Hz outside (0, {sig.sample_rate / 2})")
    x = sig.samples
    if x.size == 0:
        return sig
    b = _pole(cutoff, sig.sample_rate)
    y0 = x[0] if initial is None else initial
    y, _ = lfilter([1.0 - b], [1.0, -b], x, zi=[b * y0])
    return sig.with_samples(y)


def lowpass_noise_gain(cutoff: float, sample_rate: float) -> float:
    """Output/input variance ratio of :func:`lowpass` for white input."""
    a = 1.0 - _pole(cutoff, sample_rate)
    return a / (2.0 - a)


_BLOCK_ELEMENTS = 32768  # recurrence state per block, sized to stay in cache


def _reinsch(xt: np.ndarray, k: np.ndarray, n: int) -> np.ndarray:
    """|DFT bin k| of each column of ``xt`` (time along axis 0), cos(w) >= 0.

    Goertzel recurrence in Reinsch's form: it carries the state ``s`` and its
    first difference ``d`` with feedback ``2cos(w) - 2 = -4 sin^2(w/2)``,
    which keeps full precision for bins near DC where the textbook
    coefficient ``2cos(w)`` loses it.
    """
    w = 2.0 * np.pi * k / n
    kap = -4.0 * np.sin(w / 2.0) ** 2 + _COEFF_PERTURBATION
    out = np.empty((xt.shape[1], k.size))
    kb = max(1, min(k.size, _BLOCK_ELEMENTS // max(1, xt.shape[1])))
    rb = max(1, _BLOCK_ELEMENTS // kb)
    for r in range(0, xt.shape[1], rb):
        cols = xt[:, r : r + rb]
        for b in range(0, k.size, kb):
            kp = kap[b : b + kb]
            s = np.zeros((cols.shape[1], kp.size))
            d = np.zeros_like(s)
            tmp = np.empty_like(s)
            for xi in cols:
                np.multiply(kp, s, out=tmp)
                tmp += xi[:, None]
                d += tmp
                s += d
            out[r : r + rb, b : b + kb] = np.hypot(d + 0.5 * kp * s, np.sin(w[b : b + kb]) * s)
    return out


def goertzel_bins(x, bins) -> np.ndarray:
    """Goertzel magnitudes of every row of ``x`` at each DFT bin in ``bins``.

    Returns an array of shape ``x.shape[:-1] + (len(bins),)``. Bins in the
    upper half of the circle (cos(w) < 0) are computed as the mirrored bin
    ``n/2 - k`` of the sign-alternated input, so one stable recurrence covers
    every bin.
    """
    x = np.asarray(x, dtype=float)
    k = np.asarray(bins, dtype=float).reshape(-1)
    n = x.shape[-1]
    lead = x.shape[:-1]
    xt = np.ascontiguousarray(x.reshape(-1, n).T)
    low = np.cos(2.0 * np.pi * k / n) >= 0
    out = np.empty((xt.shape[1], k.size))
    if low.any():
        out[:, low] = _reinsch(xt, k[low], n)
    if not low.all():
        alt = np.where(np.arange(n) % 2, -1.0, 1.0)[:, None] * xt
        out[:, ~low] = _reinsch(alt, n / 2.0 - k[~low], n)
    return out.reshape(lead + (k.size,))


def goertzel(sig: BasebandSignal, target: float, n: int) -> float:
    """Magnitude of the length-``n`` DFT bin nearest ``target`` Hz.

    Uses the first ``n`` samples; the bin index is ``round(n * target / fs)``.
    """
    if n < 1:
        raise DomainError("window length must be positive")
    if n > len(sig):
        raise LengthError(f"window of {n} samples exceeds signal length {len(sig)}")
    if not 0 <= target < sig.sample_rate / 2:
        raise DomainError(f"target {target} Hz outside [0, sample_rate/2)")
    k = round(n * target / sig.sample_rate)
    return float(goertzel_bins(sig.samples[:n], [k])[0])


def ask_demodulate(envelope: BasebandSignal, cfg: AskConfig, n_bits: int | None = None) -> DecodeResult:
    """Decode an OOK envelope produced by :func:`ask_modulate`.

    Decodes every complete symbol after the preamble, or at most ``n_bits``.
    """
    spb = cfg.samples_per_symbol
    n_pre = len(cfg.preamble)
    if n_pre == 0:
        raise ConfigError("downlink decoding needs a preamble")
    y = lowpass(envelope, cfg.lpf_cutoff).samples
    if y.size < (n_pre + 1) * spb:
        raise LengthError("envelope shorter than preamble plus one symbol")

    hi, lo = float(y.max()), float(y.min())
    if not hi > lo:
        raise SyncError("envelope is flat; no level crossing")
    above = np.flatnonzero(y >= 0.5 * (hi + lo))
    crossing = int(above[0])

    b = _pole(cfg.lpf_cutoff, cfg.sample_rate)
    settle = max(0, math.ceil(math.log(0.5) / math.log(b)) - 1)
    ref = lowpass(
        BasebandSignal(np.repeat(np.asarray(cfg.preamble, dtype=float), spb), cfg.sample_rate),
        cfg.lpf_cutoff,
        initial=0.0,
    ).samples
    ref = ref - ref.mean()

    last = y.size - ref.size
    first = max(0, crossing - settle - spb // 2)
    first = min(first, last)
    cand = np.arange(first, min(first + spb, last + 1))
    windows = sliding_window_view(y, ref.size)[cand]
    start = int(cand[int(np.argmax(windows @ ref))])

    pre = y[start : start + n_pre * spb]
    p_lo, p_hi = float(pre.min()), float(pre.max())
    thr = p_lo + cfg.threshold_fraction * (p_hi - p_lo)

    first_center = start + n_pre * spb + spb // 2
    avail = 0 if first_center >= y.size else (y.size - 1 - first_center) // spb + 1
    count = avail if n_bits is None else min(avail, int(n_bits))
    centers = first_center + spb * np.arange(count)
    vals = y[centers]
    return DecodeResult((vals > thr).astype(np.uint8), start % spb, vals - thr)


def fsk_modulate(payload, cfg: FskConfig) -> BasebandSignal:
    """Phase-continuous binary FSK, unit amplitude."""
    bits = _as_bits(payload)
    if bits.size == 0:
        raise DomainError("payload is empty")
    spb = cfg.samples_per_symbol
    freqs = np.repeat(np.where(bits == 1, cfg.tone1, cfg.tone0), spb)
    phase = np.concatenate([[0.0], np.cumsum(2.0 * np.pi * freqs[:-1] / cfg.sample_rate)])
    return BasebandSignal(np.cos(phase), cfg.sample_rate)


def fsk_demodulate(sig: BasebandSignal, cfg: FskConfig) -> DecodeResult:
    """Noncoherent FSK decode with brute-force symbol timing.

    Each candidate offset is scored by the summed per-symbol magnitude margin
    over the same number of symbols; the best score wins, the smallest offset
    on ties (scores equal to 1e-12 relative). A trailing partial symbol with
    at least half its samples present is zero-padded and decoded.
    """
    spb = cfg.samples_per_symbol
    x = sig.samples
    if x.size < 2 * spb:
        raise LengthError("FSK decoding needs at least two symbol periods")
    bins = [round(spb * cfg.tone0 / cfg.sample_rate), round(spb * cfg.tone1 / cfg.sample_rate)]

    n_common = (x.size - spb + 1) // spb
    scores = []
    for o in range(0, spb, cfg.sync_stride):
        mags = goertzel_bins(x[o : o + n_common * spb].reshape(n_common, spb), bins)
        scores.append((float(np.sum(np.abs(mags[:, 1] - mags[:, 0]))), o))
    top = max(s for s, _ in scores)
    o = min(off for s, off in scores if s >= top - 1e-12 * abs(top))

    tail = x[o:]
    n_sym = tail.size // spb
    if tail.size - n_sym * spb >= spb / 2:
        n_sym += 1
        tail = np.concatenate([tail, np.zeros(n_sym * spb - tail.size)])
    mags = goertzel_bins(tail[: n_sym * spb].reshape(n_sym, spb), bins)
    m0, m1 = mags[:, 0], mags[:, 1]
    return DecodeResult((m1 > m0).astype(np.uint8), o, m1 - m0)
