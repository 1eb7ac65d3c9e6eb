"""
Collapse and revival of an F=3 spin
===================================

A tensor light shift beta (F.e)^2 dephases the Larmor coherences and brings
them back after pi/beta. At the magic angle its secular part vanishes.
"""

# %%
import math

import numpy as np

from faradaytrap import spinsim as ss

fs = 20e6
t = np.arange(int(1e-3 * fs)) / fs
for deg in (0.0, 30.0, math.degrees(ss.MAGIC_ANGLE), 90.0):
    m = ss.SpinModel(theta=math.radians(deg))
    s = ss.quantum_evolve(m, t)
    amp = ss.revival_amplitude(s.fx / m.F, fs, m.larmor_hz)
    print(f"theta {deg:5.1f} deg  revival {amp:.4f}  norm drift {s.norm_drift:.1e}")

# %%
# The revival time against the secular prediction.
m = ss.SpinModel()
print(f"revival at {ss.revival_time(m) * 1e3:.4f} ms, pi/beta = {math.pi / m.beta * 1e3:.4f} ms")

# %%
# Envelope of the on-axis signal, every 50 us.
env = ss.envelope_of(ss.quantum_evolve(ss.SpinModel(tau=math.inf), t).fx / 3, fs, m.larmor_hz)
print(" ".join(f"{e:.2f}" for e in env[::1000]))
