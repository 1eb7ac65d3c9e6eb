"""The ten acceptance criteria, one test each, each reporting PASS or FAIL."""

import math
import time
from dataclasses import replace

import numpy as np
import pytest

from faradaytrap import atomkinetics as ak
from faradaytrap import beamforge as bf
from faradaytrap import cli
from faradaytrap import compensator as cp
from faradaytrap import fieldscape as fsc
from faradaytrap import physconst as pc
from faradaytrap import spectra as sp
from faradaytrap import spinsim as ss
from faradaytrap.formats import read_kv

G = pc.RB85.gyromagnetic_factor


def test_1_noise_floor(tmp_path, capsys, acceptance):
    t0 = time.perf_counter()
    assert cli.main(["synth", "--preset", "fig6_noisefloor", "--out", str(tmp_path)]) == 0
    assert cli.main(["analyze", str(tmp_path / "trace_trapped.csv"),
                     "--out", str(tmp_path / "an")]) == 0
    capsys.readouterr()
    elapsed = time.perf_counter() - t0
    s = read_kv(tmp_path / "an" / "analysis_summary.txt")
    std = s["nu_std_hz"]
    ok = 8 <= std <= 32 and elapsed < 60 and s["valid_windows"] == 256
    acceptance(1, ok, f"single-window nu std {std:.2f} Hz over {s['valid_windows']} windows "
                      f"(band [8, 32]), {elapsed:.1f} s")


def test_2_sixty_hz_suppression(acceptance):
    t0 = time.perf_counter()
    r = cp.closed_loop(cp.ClosedLoopScenario(truth=fsc.lab_like(), seed=0), iterations=2)
    elapsed = time.perf_counter() - t0
    f = r.suppression[60.0]
    acceptance(2, f >= 20 and elapsed < 120,
               f"60 Hz suppression {f:.0f}x (need >= 20), post std {r.final_std_hz:.0f} Hz, "
               f"{elapsed:.1f} s")


def test_3_eddy_compensation(acceptance):
    truth = fsc.lab_like(harmonic_set="60")
    a60 = truth.harmonics[0].amplitude
    sc = cp.ClosedLoopScenario(truth=truth, seed=0, compensate_harmonics=False,
                               support_start=25e-3)
    r = cp.closed_loop(sc, iterations=1)
    post = r.timelines[-1]
    sel = post.valid & (post.t >= 25e-3)
    bias_nu = G * r.params[0].bias
    dev = np.abs(post.nu[sel] - bias_nu)
    measured_ok = bool(np.all(dev <= G * a60 + 4 * post.sigma[sel]))
    # the compensated truth field itself, noise free
    t = np.linspace(25e-3, 0.2, 4001)
    b = fsc.field_at(fsc.apply(truth, r.plan), t)
    slow = np.abs(b - truth.bias - truth.harmonics[0].value(t))  # eddy left-over
    swing = np.max(np.abs(b - truth.bias))
    truth_ok = slow.max() < 0.1 * a60 and swing <= 1.1 * a60
    tau = r.eddy_tau
    tau_ok = abs(tau - 0.020) <= 0.15 * 0.020
    acceptance(3, measured_ok and truth_ok and tau_ok,
               f"tau_e {tau * 1e3:.2f} ms (20 +- 3), max |nu - nu0| beyond 25 ms "
               f"{dev.max():.0f} Hz vs band {G * a60:.0f} Hz + 4 sigma, "
               f"truth swing {swing / a60:.3f} a60, slow residual {slow.max() * 1e6:.1f} uG")


@pytest.mark.slow
def test_4_boil_lifetime(tmp_path, capsys, acceptance):
    t0 = time.perf_counter()
    assert cli.main(["boil", "--preset", "fig7_boil", "--out", str(tmp_path)]) == 0
    capsys.readouterr()
    elapsed = time.perf_counter() - t0
    s = read_kv(tmp_path / "boil_summary.txt")
    total = s["imposed_rate_per_s"] + 2 * math.pi * s["mean_trap_rate_over_2pi_hz"]
    life = s["one_over_e_s"]
    ref = s["reference_trap_rate_over_2pi_hz"]
    ok = (abs(life - 0.160) <= 0.3 * 0.160 and abs(ref - 100) <= 50
          and s["samples"] == 10_000 and elapsed < 600)
    acceptance(4, ok, f"survival 1/e {life * 1e3:.0f} ms (160 +- 30%) at {total / 1e3:.2f} "
                      f"photons/ms, trap-only rate 2pi x {ref:.0f} Hz (100 +- 50%), "
                      f"{elapsed:.0f} s")


def test_5_trap_numbers(default_trap, acceptance):
    rep = bf.trap_report(default_trap)
    checks = {
        "U/hbarGamma": (rep.u_max_hbar_gamma, 2.0, 0.35),
        "U/E_r": (rep.u_max_recoil, 3000.0, 0.35),
        "gamma_t/2pi": (rep.peak_scattering_rate / (2 * math.pi), 3e3, 0.35),
        "gravity span": (rep.gravity_span_hbar_gamma, 1 / 6, 0.20),
        "ring diameter": (rep.ring_diameter, 0.48e-3, 0.10),
    }
    ok = all(abs(v - ref) <= tol * ref for v, ref, tol in checks.values())
    acceptance(5, ok, ", ".join(f"{k} {v:.4g} (ref {ref:.4g} +- {tol:.0%})"
                                for k, (v, ref, tol) in checks.items()))


def test_6_shot_noise(acceptance):
    a = pc.shot_noise_limit(1e6, 0.7e-3, 2e-3) * 1e6
    b = pc.shot_noise_limit(1e5, 0.7e-3, 2e-3) * 1e6
    acceptance(6, 1.5 <= a <= 2.5 and 4.5 <= b <= 7.5,
               f"N=1e6: {a:.2f} uG (1.5-2.5), N=1e5: {b:.2f} uG (4.5-7.5)")


def test_7_unit_triple(acceptance):
    b45 = pc.field_from_frequency(45.0)
    b110 = pc.field_from_frequency(110.0)
    nt45 = pc.from_internal(pc.to_internal(b45, "G"), "nT")
    exact = (b45 == 45.0 / 466741.5 and b110 == 110.0 / 466741.5
             and pc.larmor_frequency(b45) == pytest.approx(45.0, rel=1e-15))
    ok = exact and 96e-6 <= b45 <= 100e-6 and round(nt45) == 10 and 230e-6 <= b110 <= 236e-6
    acceptance(7, ok, f"45 Hz = {b45 * 1e6:.2f} uG = {nt45:.2f} nT, "
                      f"110 Hz = {b110 * 1e6:.1f} uG, constant {G} Hz/G")


def test_8_revivals(acceptance):
    sched = ss.PumpProbeSchedule(cycle_period=1e-3, cycles=4, averages=64, sample_rate=20e6)
    fs = sched.sample_rate
    t = np.arange(sched.window_samples) / fs
    out = {}
    for name, theta in (("axis", 0.0), ("magic", ss.MAGIC_ANGLE)):
        m = ss.SpinModel(theta=theta)
        trace = ss.revival_trace(m, sched, snr=15.0, seed=1)
        mean = np.mean(sp.window_slice(trace), axis=0)
        clean = ss.quantum_evolve(m, t)
        out[name] = (ss.revival_amplitude(mean, fs, m.larmor_hz),
                     ss.revival_amplitude(clean.fx / m.F, fs, m.larmor_hz), clean.norm_drift)
    noise = 1 / (15.0 * math.sqrt(64 * 4))
    model = ss.SpinModel()
    t_rev = ss.revival_time(model)
    # the secular oracle on its own, envelope maximum after the collapse
    fs2 = 20e6
    tt = np.arange(int(1.5 * math.pi / model.beta * fs2)) / fs2
    env = ss.envelope_of(ss.secular_fx(model, tt), fs2, model.larmor_hz)
    lo = int(0.5 * math.pi / model.beta * fs2)
    t_sec = (lo + np.argmax(env[lo:])) / fs2
    t_ref = math.pi / model.beta
    ratio = out["axis"][1] / max(out["magic"][1], 1e-300)
    ok = (out["axis"][0] > 3 * noise and ratio >= 10
          and max(out["axis"][2], out["magic"][2]) < 1e-8
          and abs(t_rev - t_ref) <= 0.02 * t_ref and abs(t_sec - t_ref) <= 0.02 * t_ref)
    acceptance(8, ok, f"theta=0 lobe {out['axis'][0]:.3f} vs 3x noise {3 * noise:.3f}, "
                      f"magic suppression {ratio:.0f}x, norm drift "
                      f"{max(out['axis'][2], out['magic'][2]):.1e}, revival "
                      f"{t_rev * 1e3:.4f} ms (secular {t_sec * 1e3:.4f}, pi/beta {t_ref * 1e3:.4f})")


def test_9_envelopes(acceptance):
    const = fsc.FieldTimeline(bias=0.107)
    tr = ss.synth_trace(const, ss.PumpProbeSchedule(cycles=200), envelope="trapped",
                        snr=15 / 8, seed=11)
    starts = tr.schedule.cycle_starts()
    _, tau_fit = sp.envelope_lifetime(starts, sp.window_amplitudes(tr, decay=0.5e-3))
    tr = ss.synth_trace(const, ss.PumpProbeSchedule(cycles=40), envelope="untrapped",
                        snr=15 / 8, seed=12)
    starts = tr.schedule.cycle_starts()
    amps = sp.window_amplitudes(tr, decay=0.7e-3)
    cross, _ = sp.envelope_lifetime(starts, amps)
    at25 = amps[25] / amps[0]
    ok = (abs(tau_fit - 0.150) <= 0.015 and at25 < 0.05 and abs(cross - 0.013) <= 0.0013)
    acceptance(9, ok, f"trapped fit {tau_fit * 1e3:.1f} ms (150 +- 10%), untrapped 1/e "
                      f"{cross * 1e3:.2f} ms (~13), amplitude at 25 ms {at25:.3f} (< 0.05)")


def test_10_property_suites(default_trap, tmp_path, capsys, acceptance):
    rng = np.random.default_rng(0)
    # Parseval, beam propagation (unitary transfer function)
    spec = bf.BeamSpec(grid_n=256)
    grid = bf.input_field(spec)
    p0 = np.sum(np.abs(grid.field) ** 2)
    p1 = np.sum(np.abs(bf.propagate(grid, 0.1, check=False).field) ** 2)
    beam_ok = abs(p1 - p0) <= 1e-9 * p0
    # Parseval, spectra
    x = rng.normal(size=777)
    _, p = sp.power_spectrum(x, 1e6, zero_pad_factor=4)
    y = x - x.mean()
    spec_ok = abs(sp.two_sided_sum(p, 4 * 777) - 4 * 777 * np.sum(y * y)) <= 1e-9 * 4 * 777 * np.sum(y * y)
    # symplectic energy drift
    ens = ak.thermal_ensemble(20, seed=3)
    e0 = ak.total_energy(ens, default_trap)
    out, _ = ak.step(ens, default_trap, ak.ScatterSchedule(trap_scale=0.0), 1e-6, 400000)
    e1 = ak.total_energy(out, default_trap)
    drift = float(np.max(np.abs(e1 - e0)[out.alive] / np.abs(e0[out.alive])))
    # Lorentzian vs time-domain oracle on noisy windows
    t = np.arange(980) / 1e6
    lor, td = [], []
    for _ in range(300):
        seg = (np.exp(-t / 0.5e-3) * np.sin(2 * np.pi * 46674.15 * t + rng.uniform(0, 2 * np.pi))
               + rng.normal(size=980) / 15)
        lor.append(sp.fit_window(seg, 1e6).center)
        td.append(sp.damped_sine_fit(seg, 1e6).frequency)
    lor, td = np.array(lor), np.array(td)
    diff = abs(np.mean(lor - td))
    oracle_ok = diff < 0.2 * min(lor.std(), td.std())
    # bit-identical CLI reruns
    blobs = []
    for d in ("a", "b"):
        assert cli.main(["synth", "--out", str(tmp_path / d), "--schedule-cycles", "5",
                         "--seed", "42"]) == 0
        blobs.append({f.name: f.read_bytes() for f in (tmp_path / d).iterdir()
                      if f.name != "manifest.txt"})
    capsys.readouterr()
    rerun_ok = blobs[0] == blobs[1]
    ok = beam_ok and spec_ok and drift < 1e-4 and oracle_ok and rerun_ok
    acceptance(10, ok, f"Parseval beam {abs(p1 / p0 - 1):.1e} / spectra ok={spec_ok}, "
                       f"energy drift {drift:.1e}, oracle mean diff {diff:.2f} Hz vs std "
                       f"{lor.std():.1f} Hz, reruns identical={rerun_ok}")
