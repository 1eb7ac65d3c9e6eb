"""
Heating out of the dark trap
============================

Every scattered photon heats the atom by about two recoil energies. Follow
2000 samples through the crossed trap while they are pumped and probed at
about 7 photons/ms, and compare with the back-of-envelope boil time.
"""

# %%
import math

from faradaytrap import atomkinetics as ak
from faradaytrap import beamforge as bf

spec = bf.BeamSpec(z_off=-0.026)
trap = bf.crossed_trap(spec)
rep = bf.trap_report(trap)

# %%
# Pump: 10 photons per 2 ms cycle. Probe: 500 photons/s. Trap light scatters
# wherever the atom meets the walls.
sched = ak.ScatterSchedule(probe_rate=500.0, pump_photons=10.0)
ens = ak.thermal_ensemble(2000, seed=0)
res = ak.survival_curve(ens, trap, sched, 0.5)
total = sched.mean_imposed_rate + res.mean_trap_rate
print(f"total scattering {total / 1e3:.2f} photons/ms "
      f"(trap share 2pi x {res.mean_trap_rate_hz:.0f} Hz)")
print(f"survival 1/e {res.one_over_e_time() * 1e3:.0f} ms, fit {res.lifetime * 1e3:.0f} ms")
print(f"U / (gamma E_r) = {ak.boil_time(rep.u_max, total) * 1e3:.0f} ms")

# %%
# Trap light alone is a slow leak.
ref = ak.survival_curve(ak.thermal_ensemble(500, seed=1), trap, ak.ScatterSchedule(), 0.05,
                        fit_start=0.01)
print(f"trap only: 2pi x {ref.mean_trap_rate_hz:.0f} Hz, "
      f"{ref.fraction[-1]:.2f} left after 50 ms (initial spill included)")
for t, f in zip(res.t[49::50], res.fraction[49::50]):
    print(f"  t = {t * 1e3:4.0f} ms  fraction {f:.3f}  exp(-t/tau) {res.amplitude * math.exp(-t / res.lifetime):.3f}")
