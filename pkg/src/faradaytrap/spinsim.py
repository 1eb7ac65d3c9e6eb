"""Polarimeter traces from precessing spins.

Two generators live here:

* ``synth_trace``: the phenomenological damped sinusoid driven by a field
  timeline, used by the magnetometry chain;
* ``quantum_evolve`` / ``revival_trace``: a single F=3 spin under Larmor
  precession plus a tensor light shift, showing collapse and revival.

The polarimeter is linear: voltage is proportional to the spin projection on
the probe axis.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import ncx2

from . import rng
from .fieldscape import FieldTimeline, field_at, field_integral
from .formats import FormatError, write_csv
from .physconst import G_EARTH, KB, RB85, AtomSpecies


class AliasingError(ValueError):
    """Larmor frequency too close to the Nyquist limit of the sample rate."""


@dataclass(frozen=True)
class PumpProbeSchedule:
    """Timing of the pump/probe cycles.

    ``start_time`` is the trapping time of the first cycle (t = 0 is the MOT
    coil shutoff). ``probe_window`` defaults to the whole gap after the pump.
    """

    cycle_period: float = 1e-3
    pump_duration: float = 20e-6
    cycles: int = 200
    averages: int = 64
    sample_rate: float = 1e6
    probe_window: float | None = None
    start_time: float = 0.0

    def __post_init__(self):
        if not 0 < self.pump_duration < self.cycle_period:
            raise ValueError("pump duration must be positive and shorter than the cycle")
        if self.cycles < 0 or self.averages < 1:
            raise ValueError("need cycles >= 0 and averages >= 1")
        if self.sample_rate <= 0 or self.start_time < 0:
            raise ValueError("sample rate must be positive and start time non-negative")
        window = self.cycle_period - self.pump_duration
        if self.probe_window is None:
            object.__setattr__(self, "probe_window", window)
        elif not 0 < self.probe_window <= window * (1 + 1e-12):
            raise ValueError("probe window must fit between pump pulses")
        for name in ("cycle_period", "pump_duration", "probe_window"):
            n = getattr(self, name) * self.sample_rate
            if abs(n - round(n)) > 1e-6:
                raise ValueError(f"{name} is not a whole number of samples")

    @property
    def samples_per_cycle(self) -> int:
        return int(round(self.cycle_period * self.sample_rate))

    @property
    def pump_samples(self) -> int:
        return int(round(self.pump_duration * self.sample_rate))

    @property
    def window_samples(self) -> int:
        return int(round(self.probe_window * self.sample_rate))

    @property
    def n_samples(self) -> int:
        return self.cycles * self.samples_per_cycle

    def cycle_starts(self) -> np.ndarray:
        return self.start_time + np.arange(self.cycles) * self.cycle_period

    def check_rate(self, nu_max: float):
        if nu_max > 0.4 * self.sample_rate:
            raise AliasingError(f"Larmor frequency {nu_max:.6g} Hz exceeds 0.4 x "
                                f"sample rate {self.sample_rate:.6g} Hz")
        if nu_max * 10 > self.sample_rate:
            warnings.warn("sample rate is below 10x the Larmor frequency", stacklevel=3)


@dataclass
class PrecessionTrace:
    voltage: np.ndarray
    sample_rate: float
    schedule: PumpProbeSchedule
    envelope: str = "trapped"
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.voltage = np.asarray(self.voltage, dtype=np.float64)
        if len(self.voltage) != self.schedule.n_samples:
            raise ValueError("trace length does not match the schedule")
        if not np.all(np.isfinite(self.voltage)):
            raise ValueError("trace contains non-finite samples")

    @property
    def t(self) -> np.ndarray:
        return self.schedule.start_time + np.arange(len(self.voltage)) / self.sample_rate


# -- envelope models ----------------------------------------------------------

TRAPPED_LIFETIME = 0.150
UNTRAPPED_LIFETIME = 0.013
# Probe/detector aperture radius that, for the 500 um, 10 uK cloud falling
# freely, gives a 13 ms 1/e loss of overlap.
UNTRAPPED_APERTURE = 0.80e-3
DEFAULT_DECAY = {"trapped": 0.5e-3, "untrapped": 0.7e-3, "untrapped_exp": 0.7e-3,
                 "constant": 0.5e-3, "quantum": 0.5e-3}
ENVELOPES = ("trapped", "untrapped", "untrapped_exp", "constant")


def ballistic_overlap(t, aperture_radius=UNTRAPPED_APERTURE, cloud_diameter=500e-6,
                      temperature=10e-6, species: AtomSpecies = RB85):
    """Fraction of a released Gaussian cloud inside a circular probe aperture.

    The cloud expands as sigma(t)^2 = sigma0^2 + (kT/m) t^2 and falls by
    g t^2/2 across the aperture, so the captured fraction is a noncentral
    chi-square CDF with two degrees of freedom.
    """
    t = np.asarray(t, dtype=float)
    s0 = cloud_diameter / 4
    sv2 = KB * temperature / species.mass
    s = np.sqrt(s0**2 + sv2 * t**2)
    drop = 0.5 * G_EARTH * t**2
    return ncx2.cdf((aperture_radius / s) ** 2, 2, (drop / s) ** 2)


def envelope_amplitude(kind: str, t):
    """Relative signal amplitude A(T)/A(0) at trapping time ``t``."""
    t = np.asarray(t, dtype=float)
    if kind == "trapped":
        return np.exp(-t / TRAPPED_LIFETIME)
    if kind == "untrapped":
        return ballistic_overlap(t) / ballistic_overlap(0.0)
    if kind == "untrapped_exp":
        return np.exp(-t / UNTRAPPED_LIFETIME)
    if kind == "constant":
        return np.ones_like(t)
    raise ValueError(f"unknown envelope model {kind!r}")


# -- phenomenological traces --------------------------------------------------

def synth_trace(timeline: FieldTimeline, schedule: PumpProbeSchedule, envelope="trapped",
                tau=None, snr=15.0, seed=0, amplitude=1.0, noise=True, phase_mode="fixed",
                species: AtomSpecies = RB85) -> PrecessionTrace:
    """Synthesize the shot-averaged polarimeter voltage.

    In each cycle precession starts at the end of the pump pulse t_p and

        V(t) = A(T_i) exp(-(t - t_p)/tau) sin(2 pi g int_{t_p}^t B dt' + phi0)

    inside the probe window, zero elsewhere. ``snr`` is the single-shot ratio
    of the initial amplitude A(0) to the RMS noise; averaging over
    ``schedule.averages`` shots divides the noise by sqrt(averages).

    ``phase_mode="fixed"`` starts every cycle from the same phase (the pump
    always prepares the spin along the same axis); ``"random"`` draws a new
    phase per cycle. Both are keyed on the seed.
    """
    if not snr > 0:
        raise ValueError("SNR must be positive")
    if phase_mode not in ("fixed", "random"):
        raise ValueError("phase_mode must be 'fixed' or 'random'")
    envelope_amplitude(envelope, 0.0)  # validates the name
    n_cyc, spc = schedule.cycles, schedule.samples_per_cycle
    volts = np.zeros((n_cyc, spc))
    if n_cyc:
        fs = schedule.sample_rate
        p0, nw = schedule.pump_samples, schedule.window_samples
        starts = schedule.cycle_starts()
        t_p = starts + p0 / fs
        t = starts[:, None] + (p0 + np.arange(nw))[None, :] / fs
        b = field_at(timeline, t)
        if np.any(b <= 0):
            raise ValueError("field reaches zero or changes sign; scalar model does not apply")
        schedule.check_rate(float(b.max()) * species.gyromagnetic_factor)
        g = species.gyromagnetic_factor
        phase = 2 * np.pi * g * (field_integral(timeline, t) - field_integral(timeline, t_p)[:, None])
        if phase_mode == "fixed":
            phi0 = np.full(n_cyc, 2 * np.pi * rng.uniform(rng.stream_key(seed, "phase"), 0))
        else:
            phi0 = 2 * np.pi * rng.uniform(rng.stream_key(seed, "phase"), np.arange(n_cyc))
        taus = DEFAULT_DECAY[envelope] if tau is None else tau
        taus = np.broadcast_to(np.asarray(taus, dtype=float), (n_cyc,))
        if np.any(taus <= 0):
            raise ValueError("per-cycle decay time must be positive")
        amp = amplitude * envelope_amplitude(envelope, starts)
        dt = (t - t_p[:, None])
        volts[:, p0:p0 + nw] = (amp[:, None] * np.exp(-dt / taus[:, None])
                                * np.sin(phase + phi0[:, None]))
        if noise:
            sigma = amplitude / (snr * math.sqrt(schedule.averages))
            key = rng.stream_key(seed, "trace-noise")
            volts += sigma * rng.normal(key, np.arange(n_cyc * spc)).reshape(n_cyc, spc)
    return PrecessionTrace(volts.ravel(), schedule.sample_rate, schedule, envelope, seed,
                           meta={"snr": float(snr), "amplitude": float(amplitude)})


def noise_sigma(trace: PrecessionTrace) -> float:
    """Design RMS noise of a synthesized trace."""
    m = trace.meta
    return m["amplitude"] / (m["snr"] * math.sqrt(trace.schedule.averages))


# -- quantum spin model -------------------------------------------------------

@dataclass(frozen=True)
class SpinModel:
    """Single spin F under H/hbar = w_L F_z + beta (F . e(theta))^2.

    ``larmor_hz`` is linear (w_L = 2 pi larmor_hz); ``beta`` is the tensor
    coupling in rad/s, so the secular revival time is pi/beta. The default
    beta gives a 0.5 ms revival; it is illustrative, not a measured value.
    """

    F: int = 3
    larmor_hz: float = 46674.15
    beta: float = math.pi / 0.5e-3
    theta: float = 0.0
    tau: float = 0.5e-3  # coherence decay; inf disables it

    def __post_init__(self):
        if self.F < 1:
            raise ValueError("F must be >= 1")
        if not self.tau > 0:
            raise ValueError("decay time must be positive")

    @property
    def dim(self) -> int:
        return 2 * self.F + 1


MAGIC_ANGLE = math.atan(math.sqrt(2.0))


def spin_matrices(F: int):
    """(F_x, F_y, F_z) in the |F, m> basis ordered m = F ... -F."""
    m = np.arange(F, -F - 1, -1, dtype=float)
    fz = np.diag(m)
    # <m+1|F_+|m> = sqrt(F(F+1) - m(m+1))
    off = np.sqrt(F * (F + 1) - m[1:] * (m[1:] + 1))
    fp = np.diag(off, 1).astype(complex)
    fx = 0.5 * (fp + fp.conj().T)
    fy = -0.5j * (fp - fp.conj().T)
    return fx, fy, fz.astype(complex)


def hamiltonian(model: SpinModel) -> np.ndarray:
    """H/hbar in rad/s."""
    fx, fy, fz = spin_matrices(model.F)
    proj = math.sin(model.theta) * fy + math.cos(model.theta) * fz
    return 2 * np.pi * model.larmor_hz * fz + model.beta * (proj @ proj)


def stretched_state_x(F: int) -> np.ndarray:
    fx, _, _ = spin_matrices(F)
    w, v = np.linalg.eigh(fx)
    psi = v[:, np.argmax(w)]
    return psi / np.linalg.norm(psi)


@dataclass
class SpinSeries:
    t: np.ndarray
    fx: np.ndarray  # <F_x>(t) e^{-t/tau}
    norm_drift: float
    energy_drift: float


def quantum_evolve(model: SpinModel, t_grid, norm_tol=1e-8) -> SpinSeries:
    """<F_x>(t) for the spin prepared in the stretched state along x.

    The propagator is exp(-iHt) built from one Hermitian eigendecomposition
    and applied at every requested time directly, so there is no step error
    to accumulate.
    """
    t = np.asarray(t_grid, dtype=float)
    h = hamiltonian(model)
    e, v = np.linalg.eigh(h)
    psi0 = stretched_state_x(model.F)
    c0 = v.conj().T @ psi0
    states = v @ (np.exp(-1j * np.outer(e, t)) * c0[:, None])  # (dim, nt)
    fx, _, _ = spin_matrices(model.F)
    expect = np.real(np.einsum("it,ij,jt->t", states.conj(), fx, states))
    norms = np.sum(np.abs(states) ** 2, axis=0)
    energy = np.real(np.einsum("it,ij,jt->t", states.conj(), h, states))
    norm_drift = float(np.max(np.abs(norms - 1.0))) if t.size else 0.0
    e0 = float(np.real(psi0.conj() @ h @ psi0))
    scale = max(abs(e0), float(np.max(np.abs(e))))
    energy_drift = float(np.max(np.abs(energy - e0)) / scale) if t.size else 0.0
    if norm_drift > norm_tol:
        raise ArithmeticError(f"norm drift {norm_drift:.3g} exceeds {norm_tol:.1g}")
    damp = np.exp(-t / model.tau) if math.isfinite(model.tau) else 1.0
    return SpinSeries(t, expect * damp, norm_drift, energy_drift)


def secular_fx(model: SpinModel, t):
    """Oracle: <F_x> under the secular Hamiltonian w_L F_z + beta c F_z^2.

    c = cos^2(theta) - sin^2(theta)/2 is the part of (F.e)^2 that commutes
    with F_z (up to a constant). Decay is not included.
    """
    t = np.asarray(t, dtype=float)
    F = model.F
    m = np.arange(F, -F - 1, -1, dtype=float)
    c = math.cos(model.theta) ** 2 - 0.5 * math.sin(model.theta) ** 2
    energy = 2 * np.pi * model.larmor_hz * m + model.beta * c * m**2
    psi0 = stretched_state_x(F)
    fx, _, _ = spin_matrices(F)
    out = np.zeros_like(t)
    for j in range(2 * F):
        # coherence between m_j and m_{j+1}
        amp = psi0[j].conj() * psi0[j + 1] * fx[j, j + 1]
        out += 2 * np.real(amp * np.exp(1j * (energy[j] - energy[j + 1]) * t))
    return out


def envelope_of(signal, sample_rate, larmor_hz, periods=2):
    """Oscillation amplitude by complex demodulation at ``larmor_hz``.

    The demodulated signal is averaged over a whole number of Larmor periods,
    which removes the 2*nu component. Samples closer to the ends than half a
    window repeat the nearest full-window value.
    """
    x = np.asarray(signal, dtype=float)
    n = max(1, int(round(periods * sample_rate / larmor_hz)))
    if len(x) < n:
        return np.full(len(x), 2 * np.abs(np.mean(x)) if len(x) else 0.0)
    t = np.arange(len(x)) / sample_rate
    z = x * np.exp(-2j * np.pi * larmor_hz * t)
    env = 2 * np.abs(np.convolve(z, np.ones(n) / n, mode="valid"))
    lead = (n - 1) // 2
    return np.pad(env, (lead, len(x) - len(env) - lead), mode="edge")


def revival_amplitude(signal, sample_rate, larmor_hz) -> float:
    """Largest rise of the envelope above its running minimum.

    A monotonically decaying envelope scores ~0; a collapse followed by a
    revival scores the height of the revival lobe.
    """
    env = envelope_of(signal, sample_rate, larmor_hz)
    return float(np.max(env - np.minimum.accumulate(env))) if len(env) else 0.0


def revival_time(model: SpinModel, sample_rate=20e6, t_max=None):
    """Time of the first envelope maximum after the initial collapse."""
    t_max = t_max or 1.5 * math.pi / abs(model.beta)
    t = np.arange(int(t_max * sample_rate)) / sample_rate
    s = quantum_evolve(SpinModel(model.F, model.larmor_hz, model.beta, model.theta,
                                 math.inf), t)
    env = envelope_of(s.fx, sample_rate, model.larmor_hz)
    lo = int(0.5 * math.pi / abs(model.beta) * sample_rate)
    i = lo + int(np.argmax(env[lo:]))
    if 0 < i < len(env) - 1:
        y0, y1, y2 = env[i - 1:i + 2]
        den = y0 - 2 * y1 + y2
        if den != 0:
            return (i + 0.5 * (y0 - y2) / den) / sample_rate
    return i / sample_rate


def revival_trace(model: SpinModel, schedule: PumpProbeSchedule, snr=15.0, seed=0,
                  amplitude=1.0, noise=True) -> PrecessionTrace:
    """Polarimeter voltage A <F_x>/F for each probe window plus white noise.

    Every cycle restarts the evolution from the pumped state; the trace
    envelope across cycles is constant.
    """
    if not snr > 0:
        raise ValueError("SNR must be positive")
    schedule.check_rate(model.larmor_hz)
    n_cyc, spc = schedule.cycles, schedule.samples_per_cycle
    volts = np.zeros((n_cyc, spc))
    if n_cyc:
        p0, nw = schedule.pump_samples, schedule.window_samples
        s = quantum_evolve(model, np.arange(nw) / schedule.sample_rate)
        volts[:, p0:p0 + nw] = amplitude * s.fx / model.F
        if noise:
            sigma = amplitude / (snr * math.sqrt(schedule.averages))
            key = rng.stream_key(seed, "revival-noise")
            volts += sigma * rng.normal(key, np.arange(n_cyc * spc)).reshape(n_cyc, spc)
    return PrecessionTrace(volts.ravel(), schedule.sample_rate, schedule, "quantum", seed,
                           meta={"snr": float(snr), "amplitude": float(amplitude),
                                 "theta_rad": model.theta, "beta_rad_s": model.beta})


# -- trace files --------------------------------------------------------------

_ENVELOPE_CODES = {"trapped": 0, "untrapped": 1, "untrapped_exp": 2, "constant": 3, "quantum": 4}
_HEADER = struct.Struct("<4sHHIIQddddd")
_MAGIC = b"FTR1"
assert _HEADER.size == 64


def _header_text(trace: PrecessionTrace) -> str:
    s = trace.schedule
    return (f"sample_rate_hz={s.sample_rate!r}; cycle_period_s={s.cycle_period!r}; "
            f"cycles={s.cycles}; pump_duration_s={s.pump_duration!r}; "
            f"probe_window_s={s.probe_window!r}; averages={s.averages}; "
            f"start_time_s={s.start_time!r}; envelope={trace.envelope}; seed={trace.seed}")


def write_trace_csv(path, trace: PrecessionTrace, extra_header=()) -> Path:
    """CSV with a one-line metadata header and ``t_s,voltage_v`` rows."""
    return write_csv(path, {"t_s": trace.t, "voltage_v": trace.voltage},
                     header_lines=[_header_text(trace), *extra_header])


_HEADER_KEYS = {
    "sample_rate_hz": float, "cycle_period_s": float, "cycles": int,
    "pump_duration_s": float, "probe_window_s": float, "averages": int,
    "start_time_s": float, "envelope": str, "seed": int,
}


def _parse_header(line, path, lineno):
    meta = {}
    for part in line.split(";"):
        part = part.strip()
        if not part:
            continue
        key, sep, value = part.partition("=")
        key = key.strip()
        if not sep or key not in _HEADER_KEYS:
            raise FormatError(f"bad trace header entry {part!r}", path, lineno)
        try:
            meta[key] = _HEADER_KEYS[key](value.strip())
        except ValueError:
            raise FormatError(f"bad value for {key}", path, lineno) from None
    for key in ("sample_rate_hz", "cycle_period_s", "cycles"):
        if key not in meta:
            raise FormatError(f"trace header lacks {key}", path, lineno)
    return meta


def read_trace_csv(path) -> PrecessionTrace:
    path = Path(path)
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise FormatError("missing trace header", path, 1)
    meta = _parse_header(lines[0][1:], path, 1)
    row = 1
    while row < len(lines) and lines[row].startswith("#"):
        row += 1
    if row >= len(lines) or lines[row].strip() != "t_s,voltage_v":
        raise FormatError("expected column header 't_s,voltage_v'", path, row + 1)
    volts = []
    for i in range(row + 1, len(lines)):
        parts = lines[i].split(",")
        if len(parts) != 2:
            raise FormatError("expected 2 fields", path, i + 1)
        try:
            volts.append(float(parts[1]))
        except ValueError:
            raise FormatError(f"bad number {parts[1]!r}", path, i + 1) from None
    try:
        sched = PumpProbeSchedule(
            cycle_period=meta["cycle_period_s"],
            pump_duration=meta.get("pump_duration_s", 20e-6),
            cycles=meta["cycles"], averages=meta.get("averages", 1),
            sample_rate=meta["sample_rate_hz"], probe_window=meta.get("probe_window_s"),
            start_time=meta.get("start_time_s", 0.0))
        return PrecessionTrace(np.array(volts), sched.sample_rate, sched,
                               meta.get("envelope", "trapped"), meta.get("seed", 0))
    except ValueError as exc:
        raise FormatError(str(exc), path, 1) from None


def write_trace_bin(path, trace: PrecessionTrace) -> Path:
    """Raw little-endian float64 samples after a 64-byte header.

    Header layout (little endian): magic ``FTR1`` (4 bytes), version u16,
    envelope code u16, averages u32, cycles u32, seed u64, then float64
    sample_rate_hz, cycle_period_s, pump_duration_s, probe_window_s,
    start_time_s.
    """
    s = trace.schedule
    head = _HEADER.pack(_MAGIC, 1, _ENVELOPE_CODES[trace.envelope], s.averages, s.cycles,
                        trace.seed & ((1 << 64) - 1), s.sample_rate, s.cycle_period,
                        s.pump_duration, s.probe_window, s.start_time)
    path = Path(path)
    path.write_bytes(head + trace.voltage.astype("<f8").tobytes())
    return path


def read_trace_bin(path) -> PrecessionTrace:
    data = Path(path).read_bytes()
    if len(data) < 64:
        raise FormatError("file shorter than the 64-byte header", path)
    magic, version, env, avg, cycles, seed, fs, cyc, pump, win, start = _HEADER.unpack(data[:64])
    if magic != _MAGIC or version != 1:
        raise FormatError("not a version-1 trace file", path)
    if (len(data) - 64) % 8:
        raise FormatError("payload is not a whole number of float64 samples", path)
    names = {v: k for k, v in _ENVELOPE_CODES.items()}
    sched = PumpProbeSchedule(cyc, pump, cycles, avg, fs, win, start)
    volts = np.frombuffer(data, dtype="<f8", offset=64).astype(np.float64)
    try:
        return PrecessionTrace(volts, fs, sched, names.get(env, "trapped"), seed)
    except ValueError as exc:
        raise FormatError(str(exc), path) from None
