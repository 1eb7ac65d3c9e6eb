import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from faradaytrap import spinsim as ss
from faradaytrap.fieldscape import FieldTimeline
from faradaytrap.formats import FormatError
from faradaytrap.physconst import RB85
from faradaytrap.spectra import envelope_lifetime, window_amplitudes

CONST = FieldTimeline(bias=0.1)


def test_schedule_validation():
    with pytest.raises(ValueError):
        ss.PumpProbeSchedule(pump_duration=2e-3)
    with pytest.raises(ValueError):
        ss.PumpProbeSchedule(cycles=-1)
    with pytest.raises(ValueError):
        ss.PumpProbeSchedule(probe_window=0.99e-3)
    with pytest.raises(ValueError):
        ss.PumpProbeSchedule(cycle_period=1.0000005e-3)
    s = ss.PumpProbeSchedule()
    assert (s.samples_per_cycle, s.pump_samples, s.window_samples) == (1000, 20, 980)


def test_aliasing_rejected():
    with pytest.raises(ss.AliasingError):
        ss.synth_trace(CONST, ss.PumpProbeSchedule(sample_rate=1e5, cycles=2))
    with pytest.warns(UserWarning):
        ss.synth_trace(CONST, ss.PumpProbeSchedule(sample_rate=2e5, cycles=2))


def test_sign_change_rejected():
    tl = FieldTimeline(bias=1e-3, eddies=((-5e-3, 0.02),))
    with pytest.raises(ValueError):
        ss.synth_trace(tl, ss.PumpProbeSchedule(cycles=2))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 12), st.sampled_from([1e-3, 2e-3]), st.sampled_from(ss.ENVELOPES))
def test_length_matches_schedule(cycles, period, env):
    sched = ss.PumpProbeSchedule(cycle_period=period, cycles=cycles)
    tr = ss.synth_trace(CONST, sched, envelope=env)
    assert len(tr.voltage) == cycles * round(period * 1e6)


def test_pump_interval_is_noise_free_when_noise_off():
    sched = ss.PumpProbeSchedule(cycles=3)
    v = ss.synth_trace(CONST, sched, noise=False).voltage.reshape(3, -1)
    assert np.all(v[:, :sched.pump_samples] == 0)
    assert np.max(np.abs(v)) <= 1.0


def test_noise_calibration():
    sched = ss.PumpProbeSchedule(cycles=50, averages=16)
    clean = ss.synth_trace(CONST, sched, snr=2.0, seed=3, noise=False)
    noisy = ss.synth_trace(CONST, sched, snr=2.0, seed=3)
    want = 1 / (2.0 * 4)
    assert np.std(noisy.voltage - clean.voltage) == pytest.approx(want, rel=0.05)
    assert ss.noise_sigma(noisy) == want


def test_seed_determinism():
    sched = ss.PumpProbeSchedule(cycles=3)
    a = ss.synth_trace(CONST, sched, seed=9).voltage
    np.testing.assert_array_equal(a, ss.synth_trace(CONST, sched, seed=9).voltage)
    assert not np.array_equal(a, ss.synth_trace(CONST, sched, seed=10).voltage)


def test_instantaneous_frequency_constant_field():
    sched = ss.PumpProbeSchedule(cycles=1)
    tr = ss.synth_trace(CONST, sched, tau=math.inf, noise=False)
    v = tr.voltage[sched.pump_samples:]
    t = tr.t[sched.pump_samples:]
    up = np.nonzero((v[:-1] < 0) & (v[1:] >= 0))[0]
    tc = t[up] - v[up] * (t[up + 1] - t[up]) / (v[up + 1] - v[up])
    freq = 1 / np.mean(np.diff(tc))
    assert freq == pytest.approx(RB85.gyromagnetic_factor * 0.1, rel=1e-4)


def test_trapped_envelope_lifetime():
    sched = ss.PumpProbeSchedule(cycles=200, start_time=0.0)
    tr = ss.synth_trace(CONST, sched, envelope="trapped", snr=15.0, seed=1)
    t = sched.cycle_starts()
    crossing, tau = envelope_lifetime(t, window_amplitudes(tr, decay=0.5e-3))
    assert crossing == pytest.approx(0.150, rel=0.05)
    assert tau == pytest.approx(0.150, rel=0.05)


def test_untrapped_envelope():
    t = np.linspace(0, 0.04, 4001)
    a = ss.envelope_amplitude("untrapped", t)
    assert a[0] == pytest.approx(1.0)
    assert np.all(np.diff(a) <= 1e-15)
    t_e = t[np.argmax(a < 1 / math.e)]
    assert t_e == pytest.approx(0.013, abs=0.5e-3)
    assert ss.envelope_amplitude("untrapped", 0.025) < 0.05
    with pytest.raises(ValueError):
        ss.envelope_amplitude("levitated", t)


def test_random_phase_mode_differs_per_cycle():
    sched = ss.PumpProbeSchedule(cycles=4)
    kw = dict(envelope="constant", noise=False)
    fixed = ss.synth_trace(CONST, sched, **kw).voltage.reshape(4, -1)
    rand = ss.synth_trace(CONST, sched, phase_mode="random", **kw).voltage.reshape(4, -1)
    np.testing.assert_allclose(fixed[:, 20], fixed[0, 20], atol=1e-12)
    assert len({round(x, 12) for x in rand[:, 20]}) == 4


def _trace():
    sched = ss.PumpProbeSchedule(cycles=3, averages=8, start_time=0.01)
    return ss.synth_trace(FieldTimeline(bias=0.1, eddies=((5e-3, 0.02),)), sched,
                          envelope="untrapped", seed=2**40 + 7)


def test_csv_round_trip_bit_exact(tmp_path):
    tr = _trace()
    back = ss.read_trace_csv(ss.write_trace_csv(tmp_path / "t.csv", tr))
    np.testing.assert_array_equal(back.voltage, tr.voltage)
    assert back.schedule == tr.schedule
    assert (back.envelope, back.seed) == (tr.envelope, tr.seed)


def test_bin_round_trip_bit_exact(tmp_path):
    tr = _trace()
    path = ss.write_trace_bin(tmp_path / "t.bin", tr)
    assert path.stat().st_size == 64 + 8 * len(tr.voltage)
    back = ss.read_trace_bin(path)
    np.testing.assert_array_equal(back.voltage, tr.voltage)
    assert back.schedule == tr.schedule and back.seed == tr.seed


def test_corrupt_files_report_location(tmp_path):
    tr = _trace()
    path = ss.write_trace_csv(tmp_path / "t.csv", tr)
    lines = path.read_text().splitlines()
    lines[5] = lines[5].split(",")[0] + ",oops"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(FormatError, match=r"t\.csv:6:"):
        ss.read_trace_csv(path)
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(FormatError):
        ss.read_trace_csv(path)
    (tmp_path / "b.bin").write_bytes(b"FTR2" + bytes(60))
    with pytest.raises(FormatError):
        ss.read_trace_bin(tmp_path / "b.bin")


# -- quantum model ------------------------------------------------------------

def test_spin_matrices_commutator():
    fx, fy, fz = ss.spin_matrices(3)
    np.testing.assert_allclose(fx @ fy - fy @ fx, 1j * fz, atol=1e-12)
    np.testing.assert_allclose(fx @ fx + fy @ fy + fz @ fz, 12 * np.eye(7), atol=1e-12)


def test_beta_zero_is_plain_precession():
    m = ss.SpinModel(beta=0.0, tau=math.inf)
    t = np.arange(2000) / 20e6
    fx = ss.quantum_evolve(m, t).fx
    np.testing.assert_allclose(fx, 3 * np.cos(2 * np.pi * m.larmor_hz * t), atol=1e-12)


@given(st.floats(0, math.pi))
@settings(max_examples=10, deadline=None)
def test_beta_zero_ignores_theta(theta):
    t = np.arange(500) / 20e6
    a = ss.quantum_evolve(ss.SpinModel(beta=0.0, theta=theta), t).fx
    b = ss.quantum_evolve(ss.SpinModel(beta=0.0), t).fx
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_secular_oracle_exact_on_axis():
    m = ss.SpinModel(theta=0.0, tau=math.inf)
    t = np.arange(20000) / 20e6
    s = ss.quantum_evolve(m, t)
    assert np.max(np.abs(s.fx - ss.secular_fx(m, t))) < 1e-10
    assert s.norm_drift < 1e-12 and s.energy_drift < 1e-12


def test_secular_oracle_converges_off_axis():
    errs = []
    for larmor in (46674.15, 466741.5):
        m = ss.SpinModel(larmor_hz=larmor, theta=0.5, tau=math.inf)
        fs = 40 * larmor
        t = np.arange(int(1e-3 * fs)) / fs
        q = ss.envelope_of(ss.quantum_evolve(m, t).fx, fs, larmor)
        s = ss.envelope_of(ss.secular_fx(m, t), fs, larmor)
        errs.append(np.max(np.abs(q - s)))
    assert errs[1] < 0.02 < errs[0] / 10


def test_revival_time_and_magic_suppression():
    m = ss.SpinModel()
    assert ss.revival_time(m) == pytest.approx(math.pi / m.beta, rel=0.02)
    sched = ss.PumpProbeSchedule(cycle_period=2e-3, cycles=1, averages=1, sample_rate=20e6)
    on = ss.revival_trace(ss.SpinModel(theta=0.0), sched, noise=False)
    magic = ss.revival_trace(ss.SpinModel(theta=ss.MAGIC_ANGLE), sched, noise=False)
    v0 = on.voltage[sched.pump_samples:]
    vm = magic.voltage[sched.pump_samples:]
    a0 = ss.revival_amplitude(v0, sched.sample_rate, m.larmor_hz)
    am = ss.revival_amplitude(vm, sched.sample_rate, m.larmor_hz)
    assert a0 > 0.2 and am < 0.05 * a0


def test_monotone_decay_scores_zero():
    fs, f = 20e6, 46674.15
    t = np.arange(20000) / fs
    sig = np.exp(-t / 0.5e-3) * np.cos(2 * np.pi * f * t)
    assert ss.revival_amplitude(sig, fs, f) < 1e-3
