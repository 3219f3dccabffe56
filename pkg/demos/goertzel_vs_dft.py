"""Single-bin tone detection: the Goertzel recurrence against a full FFT.

Run: python3 demos/goertzel_vs_dft.py
"""
import time

import numpy as np

from regenscatter.modem import goertzel_bins, goertzel
from regenscatter.signal_core import BasebandSignal

rng = np.random.default_rng(1)

# a tone sitting exactly on bin 5 of a 64 point window
fs, n = 64_000.0, 64
t = np.arange(n) / fs
tone = BasebandSignal(np.cos(2 * np.pi * 5_000.0 * t), fs)
print("tone on bin 5:", goertzel(tone, 5_000.0, n), "(expect n/2 = 32)")

# every bin of a noisy window, compared with the FFT magnitude
x = rng.standard_normal(1024)
mags = goertzel_bins(x, np.arange(1024))
ref = np.abs(np.fft.fft(x))
print("max relative error over all 1024 bins: %.2e" % np.max(np.abs(mags - ref) / np.maximum(ref, 1e-300)))

# many short windows at once, one tone bin each, as the FSK decoder does
windows = rng.standard_normal((16, 200_000))
t0 = time.perf_counter()
goertzel_bins(windows, [3, 4])
print("16 x 200000 samples, 2 bins: %.3f s" % (time.perf_counter() - t0))
