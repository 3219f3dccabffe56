"""OOK and FSK frames through the modem with a random timing offset.

Run: python3 demos/modem_roundtrip.py
"""
import numpy as np

from regenscatter.modem import AskConfig, FskConfig, ask_demodulate, ask_modulate, fsk_demodulate, fsk_modulate
from regenscatter.signal_core import RandomSource, random_bits

src = RandomSource(7, 0)
payload = random_bits(2000, src.substream(0))

# downlink: on-off keying, found by correlating against the preamble
ask = AskConfig.for_rate(40e3)
env = ask_modulate(payload, ask).delayed(5)
res = ask_demodulate(env, ask, n_bits=payload.size)
print("OOK  sync offset %d samples, bit errors %d" % (res.sync_offset_samples, np.count_nonzero(res.bits != payload)))

# uplink: two orthogonal tones, timing found by brute force
fsk = FskConfig.for_rate(20e3)
sig = fsk_modulate(payload, fsk).delayed(11)
res = fsk_demodulate(sig, fsk)
n = min(res.bits.size, payload.size)
print("FSK  sync offset %d samples, bit errors %d" % (res.sync_offset_samples, np.count_nonzero(res.bits[:n] != payload[:n])))

# the FSK metric is the tone energy difference, so its sign carries the bit
print("first per-bit metrics:", np.round(res.per_bit_metric[:6], 2))
