"""Carrier offset penalties: resonator detuning and loss of coherence.

Run: python3 demos/offset_penalty.py
"""
import numpy as np

from regenscatter.channel import offset_penalty
from regenscatter.link_eval import default_bundle

m = default_bundle()
offsets = np.array([0, 5, 10, 20, 50, 100]) * 1e6
print("%10s %14s %14s" % ("offset MHz", "downlink dB", "uplink dB"))
for df in offsets:
    print("%10.0f %14.2f %14.2f" % (
        df / 1e6,
        offset_penalty(m.downlink_penalty, m.downlink_amp, df),
        offset_penalty(m.uplink_penalty, m.uplink_amp, df),
    ))
print("downlink amplifier half-power bandwidth: %.1f MHz" % (m.downlink_amp.half_power_bandwidth / 1e6))
