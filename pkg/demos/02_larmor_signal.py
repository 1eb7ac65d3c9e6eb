"""
Larmor precession and its frequency
===================================

Synthesize the shot-averaged polarimeter trace, take one probe window, and
estimate the Larmor frequency two ways: Lorentzian fit to the padded FFT, and
a direct damped-sine fit in time.
"""

# %%
import numpy as np

from faradaytrap import fieldscape as fsc
from faradaytrap import spectra as sp
from faradaytrap import spinsim as ss
from faradaytrap.physconst import RB85

truth = fsc.FieldTimeline(bias=0.107)
sched = ss.PumpProbeSchedule(cycles=200)
trace = ss.synth_trace(truth, sched, envelope="trapped", snr=15 / 8, seed=1)
print(f"expected nu_L = {RB85.gyromagnetic_factor * 0.107:.1f} Hz")

# %%
# One window: 980 samples after the 20 us pump pulse.
seg = sp.window_slice(trace)[0]
lor = sp.fit_window(seg, sched.sample_rate)
td = sp.damped_sine_fit(seg, sched.sample_rate)
print(f"Lorentzian  {lor.center:.1f} +- {lor.sigma_center:.1f} Hz, half width {lor.half_width:.0f} Hz")
print(f"time domain {td.frequency:.1f} +- {td.sigma_frequency:.1f} Hz, tau {td.tau * 1e3:.3f} ms")

# %%
# All windows. The trapped envelope decays with a 150 ms time constant.
tl = sp.nu_timeline(trace)
amps = sp.window_amplitudes(trace)
cross, tau = sp.envelope_lifetime(sched.cycle_starts(), amps)
print(f"window scatter {np.std(tl.nu):.1f} Hz, median reported sigma {np.median(tl.sigma):.1f} Hz")
print(f"envelope 1/e {cross * 1e3:.0f} ms, exponential fit {tau * 1e3:.0f} ms")

# %%
# Without the trap the cloud falls out of the probe aperture.
free = ss.synth_trace(truth, ss.PumpProbeSchedule(cycles=40), envelope="untrapped",
                      snr=15 / 8, seed=2)
a = sp.window_amplitudes(free, decay=0.7e-3)
print(f"untrapped amplitude at 25 ms: {a[25] / a[0]:.3f} of the start")
