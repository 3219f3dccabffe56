"""Monte Carlo BER against the closed-form estimate for both links.

Run: python3 demos/ber_sweep.py   (about half a minute)
"""
from dataclasses import replace

from regenscatter.link_eval import (
    Link,
    SweepSpec,
    default_bundle,
    downlink_ber_estimate,
    run_sweep,
    uplink_ber_estimate,
)

# The downlink slicer threshold comes from the 16 bit preamble of each frame,
# so a single long frame inherits one noisy threshold. Short frames average
# over many thresholds and land closer to the estimate, slightly above it.
m = default_bundle()
m = replace(m, modem=replace(m.modem, frame_bits=1000))
for link, est, dists in [
    (Link.DOWN, downlink_ber_estimate, [120.0, 160.0, 200.0]),
    (Link.UP, uplink_ber_estimate, [40.0, 55.0, 70.0]),
]:
    spec = SweepSpec(link, dists, [20e3, 60e3], bits_per_point=20_000, seed=3, models=m)
    print(link.value)
    for r in run_sweep(spec, threads=4):
        print("  %6.0f m %6.0f bps  Eb/N0 %6.2f dB  BER %.4f  estimate %.4f" % (
            r.distance, r.bit_rate, r.eb_n0, r.ber, est(m, r.distance, r.bit_rate)))
