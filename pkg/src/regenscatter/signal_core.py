"""Units, sampled-signal container, power measurement and seeded noise.

Powers are referenced to a 1 ohm load, so a sample value ``x`` carries an
instantaneous power of ``x**2`` watts. All link-level checks are ratios, so
the reference cancels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = [
    "BasebandSignal",
    "RandomSource",
    "dbm_to_watts",
    "watts_to_dbm",
    "signal_power",
    "signal_power_dbm",
    "add_awgn",
    "random_bits",
]


def dbm_to_watts(p_dbm):
    """Convert dBm to watts. Works elementwise on arrays."""
    if np.ndim(p_dbm):
        return 10.0 ** ((np.asarray(p_dbm, dtype=float) - 30.0) / 10.0)
    return 10.0 ** ((float(p_dbm) - 30.0) / 10.0)


def watts_to_dbm(w):
    """Convert watts to dBm. Raises DomainError for non-positive input."""
    arr = np.asarray(w, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError(f"power must be positive to convert to dBm, got {w!r}")
    out = 10.0 * np.log10(arr) + 30.0
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class BasebandSignal:
    """Uniformly sampled real amplitude trace.

    Samples are stored as a read-only float64 array.
    """

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        arr = np.array(self.samples, dtype=float, copy=True).reshape(-1)
        if not self.sample_rate > 0:
            raise DomainError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(arr)):
            raise DomainError("signal samples must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "sample_rate", float(self.sample_rate))

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def with_samples(self, samples) -> "BasebandSignal":
        return BasebandSignal(samples, self.sample_rate)

    def scaled(self, k: float) -> "BasebandSignal":
        return BasebandSignal(self.samples * k, self.sample_rate)

    def delayed(self, n: int) -> "BasebandSignal":
        """Prepend ``n`` zero samples."""
        if n < 0:
            raise DomainError("delay must be non-negative")
        return BasebandSignal(np.concatenate([np.zeros(n), self.samples]), self.sample_rate)


@dataclass(frozen=True)
class RandomSource:
    """Counter-based random stream keyed by ``(seed, stream_id)``.

    Backed by the Philox4x64 generator with the two 64-bit words as its key,
    so a given pair reproduces the same sequence on any platform and in any
    worker, independently of other streams.
    """

    seed: int = 0
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not (0 <= int(v) < 2**64):
                raise DomainError(f"{name} must fit in an unsigned 64-bit integer")
            object.__setattr__(self, name, int(v))

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def substream(self, k: int) -> "RandomSource":
        """Derive an independent stream, deterministic in ``k``."""
        mixed = np.random.SeedSequence([self.seed, self.stream_id, int(k)]).generate_state(2, np.uint64)
        return RandomSource(int(mixed[0]), int(mixed[1]))


def signal_power(sig: BasebandSignal) -> float:
    """Mean-square power in watts (1 ohm reference)."""
    if len(sig) == 0:
        raise DomainError("cannot measure the power of an empty signal")
    return float(np.mean(sig.samples**2))


def signal_power_dbm(sig: BasebandSignal) -> float:
    """Power in dBm; ``-inf`` for an all-zero signal."""
    w = signal_power(sig)
    return float("-inf") if w == 0.0 else watts_to_dbm(w)


def add_awgn(sig: BasebandSignal, noise_power: float, rng: RandomSource) -> BasebandSignal:
    """Add white Gaussian noise of variance ``noise_power`` (watts) per sample."""
    if noise_power < 0 or not np.isfinite(noise_power):
        raise DomainError(f"noise_power must be finite and >= 0, got {noise_power}")
    if noise_power == 0:
        return sig
    noise = rng.generator().standard_normal(len(sig)) * np.sqrt(noise_power)
    return sig.with_samples(sig.samples + noise)


def random_bits(n: int, rng: RandomSource) -> np.ndarray:
    """Uniform random bits as a uint8 array."""
    if n < 1:
        raise DomainError("bit count must be positive")
    return rng.generator().integers(0, 2, size=n, dtype=np.uint8)
