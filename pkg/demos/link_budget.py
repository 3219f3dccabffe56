"""Received power, Eb/N0 and the retransmit clamp versus range.

Run: python3 demos/link_budget.py
"""
import numpy as np

from regenscatter.link_eval import (
    default_bundle,
    downlink_eb_n0,
    downlink_rx_power,
    uplink_eb_n0,
    uplink_rx_power,
)

m = default_bundle()
print("%8s %12s %12s %14s %14s" % ("dist m", "down dBm", "up dBm", "up unsat dBm", "up Eb/N0 dB"))
for d in [1, 2, 5, 10, 20, 35, 50, 100, 200]:
    print("%8.0f %12.2f %12.2f %14.2f %14.2f" % (
        d,
        downlink_rx_power(m, d),
        uplink_rx_power(m, d),
        uplink_rx_power(m, d, saturated=False),
        uplink_eb_n0(m, d, 20e3),
    ))

# doubling the range costs 6 dB one way; the saturated tag keeps the
# uplink at the one-way slope, without the clamp it falls twice as fast
d = np.array([10.0, 20.0])
print("uplink slope saturated   %.3f dB/doubling" % np.diff([uplink_rx_power(m, x) for x in d])[0])
print("uplink slope unsaturated %.3f dB/doubling" % np.diff([uplink_rx_power(m, x, saturated=False) for x in d])[0])
print("downlink Eb/N0 at 35 m, 40 kbps: %.2f dB" % downlink_eb_n0(m, 35.0, 40e3))
