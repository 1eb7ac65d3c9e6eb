"""Scalar magnetic field timeline and compensation waveforms.

The field is a scalar along the bias axis (Gauss), with t = 0 at the MOT coil
shutoff:

    B(t) = B0 + sum_j A_j exp(-t/tau_j) + sum_k a_k sin(2 pi f_k t + phi_k)
           + drift(t) + noise(t)

A timeline may carry several exponential terms, because applying a
compensation plan adds its own filtered-step branch with time constant tau_c.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng
from .formats import FormatError, parse_kv, format_kv

LINE_FREQUENCY = 60.0


@dataclass(frozen=True)
class Harmonic:
    frequency: float  # Hz
    amplitude: float  # G
    phase: float = 0.0  # rad

    def value(self, t):
        return self.amplitude * np.sin(2 * np.pi * self.frequency * t + self.phase)

    def integral(self, t):
        """Antiderivative, zero mean."""
        w = 2 * np.pi * self.frequency
        return -self.amplitude / w * np.cos(w * t + self.phase)


def _check_multiple(freq, line_frequency):
    ratio = freq / line_frequency
    if not (freq > 0 and abs(ratio - round(ratio)) < 1e-9 * max(1.0, ratio)):
        raise ValueError(f"{freq} Hz is not a positive multiple of the "
                         f"{line_frequency} Hz line frequency")


@dataclass(frozen=True)
class FieldTimeline:
    """Immutable description of B(t).

    ``eddies`` holds (amplitude G, tau s) pairs; the first is the chamber
    transient, later ones come from applied compensation plans. ``drift`` is a
    pair of equal-length tuples (times s, values G) interpolated linearly and
    held constant outside the knots. ``noise_density`` is white field noise in
    G/sqrt(Hz), band limited to ``noise_rate``.
    """

    bias: float = 0.107
    eddies: tuple = ()
    harmonics: tuple = ()
    drift: tuple = ((), ())
    noise_density: float = 0.0
    noise_rate: float = 1e6
    line_frequency: float = LINE_FREQUENCY
    seed: int = 0

    def __post_init__(self):
        eddies = tuple((float(a), float(tau)) for a, tau in self.eddies)
        for a, tau in eddies:
            if not tau > 0:
                raise ValueError("eddy time constant must be positive")
            if not math.isfinite(a):
                raise ValueError("eddy amplitude must be finite")
        object.__setattr__(self, "eddies", eddies)
        harms = tuple(h if isinstance(h, Harmonic) else Harmonic(*h) for h in self.harmonics)
        for h in harms:
            _check_multiple(h.frequency, self.line_frequency)
            if not math.isfinite(h.amplitude):
                raise ValueError("harmonic amplitude must be finite")
        object.__setattr__(self, "harmonics", harms)
        dt, dv = (tuple(float(x) for x in part) for part in self.drift)
        if len(dt) != len(dv):
            raise ValueError("drift times and values differ in length")
        if any(b <= a for a, b in zip(dt, dt[1:])):
            raise ValueError("drift knots must be strictly increasing")
        object.__setattr__(self, "drift", (dt, dv))
        if self.noise_density < 0 or self.noise_rate <= 0:
            raise ValueError("noise density must be >= 0 and noise rate > 0")

    @property
    def eddy_amplitude(self) -> float:
        return self.eddies[0][0] if self.eddies else 0.0

    @property
    def eddy_tau(self) -> float:
        return self.eddies[0][1] if self.eddies else 0.020

    def deterministic(self) -> "FieldTimeline":
        """The same timeline with noise switched off."""
        return replace(self, noise_density=0.0)

    def scaled(self, c: float) -> "FieldTimeline":
        """Scale every disturbance (not the bias) by ``c``."""
        dt, dv = self.drift
        return replace(
            self,
            eddies=tuple((c * a, tau) for a, tau in self.eddies),
            harmonics=tuple(replace(h, amplitude=c * h.amplitude) for h in self.harmonics),
            drift=(dt, tuple(c * v for v in dv)),
            noise_density=abs(c) * self.noise_density,
        )


def lab_like(bias=0.107, eddy_amplitude=5e-3, eddy_tau=20e-3,
               harmonic_set="full", seed=0) -> FieldTimeline:
    """Calibrated reconstruction of the uncompensated lab field.

    Amplitudes are fitted so that, with the eddy transient and the 60 Hz line
    component removed, the remaining harmonics leave a Larmor-frequency
    standard deviation near 110 Hz. They are not measured values.
    """
    harmonics = [Harmonic(60.0, 2.0e-3, 0.0)]
    if harmonic_set == "full":
        harmonics += [Harmonic(180.0, 2.7e-4, 0.0),
                      Harmonic(300.0, 1.8e-4, 0.0),
                      Harmonic(420.0, 1.25e-4, 0.0)]
    return FieldTimeline(bias=bias, eddies=((eddy_amplitude, eddy_tau),),
                         harmonics=tuple(harmonics), seed=seed)


def _check_times(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or not np.all(np.isfinite(t)):
        raise ValueError("field evaluated at negative or non-finite time")
    return t


def _drift_value(timeline, t):
    dt, dv = timeline.drift
    if not dt:
        return np.zeros_like(t)
    return np.interp(t, dt, dv)


def _drift_integral(timeline, t):
    """Integral of the drift from 0 to t (piecewise linear, clamped ends)."""
    dt, dv = timeline.drift
    if not dt:
        return np.zeros_like(t)
    knots = np.concatenate(([0.0], [x for x in dt if x > 0]))
    vals = np.interp(knots, dt, dv)
    cum = np.concatenate(([0.0], np.cumsum(0.5 * (vals[1:] + vals[:-1]) * np.diff(knots))))
    idx = np.clip(np.searchsorted(knots, t, side="right") - 1, 0, len(knots) - 1)
    v_t = np.interp(t, dt, dv)
    return cum[idx] + 0.5 * (vals[idx] + v_t) * (t - knots[idx])


def _noise_sigma(timeline):
    return timeline.noise_density * math.sqrt(timeline.noise_rate / 2.0)


def _noise_samples(timeline, index):
    key = rng.stream_key(timeline.seed, "field-noise")
    return _noise_sigma(timeline) * rng.normal(key, index)


def field_at(timeline: FieldTimeline, t):
    """Field in Gauss at time(s) ``t`` >= 0.

    Noise is held constant over each 1/noise_rate interval and is a pure
    function of (seed, interval index).
    """
    t = _check_times(t)
    b = np.full(t.shape, timeline.bias, dtype=float)
    for a, tau in timeline.eddies:
        b += a * np.exp(-t / tau)
    for h in timeline.harmonics:
        b += h.value(t)
    b += _drift_value(timeline, t)
    if timeline.noise_density > 0:
        idx = np.floor(t * timeline.noise_rate).astype(np.int64)
        b += _noise_samples(timeline, idx)
    return float(b) if b.ndim == 0 else b


def field_integral(timeline: FieldTimeline, t):
    """Integral of B from 0 to t (G s). Exact for every term, noise included."""
    t = _check_times(t)
    out = timeline.bias * t
    for a, tau in timeline.eddies:
        out = out + a * tau * (1.0 - np.exp(-t / tau))
    for h in timeline.harmonics:
        out = out + (h.integral(t) - h.integral(0.0))
    out = out + _drift_integral(timeline, t)
    if timeline.noise_density > 0:
        rate = timeline.noise_rate
        idx = np.floor(t * rate).astype(np.int64)
        n_max = int(idx.max()) + 1 if idx.size else 0
        samples = _noise_samples(timeline, np.arange(n_max))
        cum = np.concatenate(([0.0], np.cumsum(samples))) / rate
        out = out + cum[idx] + samples[np.minimum(idx, n_max - 1)] * (t - idx / rate)
    return out


@dataclass(frozen=True)
class CompensationPlan:
    """Opposing coil waveform.

    Each eddy branch is a step filtered by a single-pole low pass; it stores
    the transient amplitude it is meant to cancel, so its field is
    -A_step exp(-t/tau_c). Harmonic branches store the waveform the coil
    actually produces (already phase shifted by pi relative to the
    disturbance), so their field is a sin(2 pi f t + phi).
    """

    eddy_branches: tuple = ()
    harmonic_branches: tuple = ()
    coil_bandwidth: float = 1000.0
    line_frequency: float = LINE_FREQUENCY

    def __post_init__(self):
        eddies = tuple((float(a), float(tau)) for a, tau in self.eddy_branches)
        for a, tau in eddies:
            if not (tau > 0 and math.isfinite(a)):
                raise ValueError("eddy branch needs finite amplitude and tau_c > 0")
        object.__setattr__(self, "eddy_branches", eddies)
        harms = tuple(h if isinstance(h, Harmonic) else Harmonic(*h)
                      for h in self.harmonic_branches)
        for h in harms:
            _check_multiple(h.frequency, self.line_frequency)
            if not math.isfinite(h.amplitude):
                raise ValueError("branch amplitude must be finite")
            if h.frequency > self.coil_bandwidth:
                raise ValueError(f"{h.frequency} Hz branch exceeds the "
                                 f"{self.coil_bandwidth} Hz coil bandwidth")
        object.__setattr__(self, "harmonic_branches", harms)

    @property
    def empty(self) -> bool:
        return not self.eddy_branches and not self.harmonic_branches

    def __add__(self, other: "CompensationPlan") -> "CompensationPlan":
        """Superpose two plans (both coils driven at once)."""
        return CompensationPlan(
            eddy_branches=self.eddy_branches + other.eddy_branches,
            harmonic_branches=self.harmonic_branches + other.harmonic_branches,
            coil_bandwidth=max(self.coil_bandwidth, other.coil_bandwidth),
            line_frequency=self.line_frequency,
        )


def compensation_field(plan: CompensationPlan, t):
    t = _check_times(t)
    out = np.zeros(t.shape)
    for a, tau in plan.eddy_branches:
        out -= a * np.exp(-t / tau)
    for h in plan.harmonic_branches:
        out += h.value(t)
    return float(out) if out.ndim == 0 else out


def apply(timeline: FieldTimeline, plan: CompensationPlan) -> FieldTimeline:
    """Timeline whose field is the pointwise sum of ``timeline`` and ``plan``."""
    if plan.line_frequency != timeline.line_frequency:
        raise ValueError("plan and timeline use different line frequencies")
    return replace(
        timeline,
        eddies=timeline.eddies + tuple((-a, tau) for a, tau in plan.eddy_branches),
        harmonics=timeline.harmonics + plan.harmonic_branches,
    )


def with_trigger_offset(timeline: FieldTimeline, dt: float) -> FieldTimeline:
    """Shift the line-synchronous terms by ``dt`` (trigger jitter)."""
    harms = tuple(replace(h, phase=h.phase + 2 * np.pi * h.frequency * dt)
                  for h in timeline.harmonics)
    return replace(timeline, harmonics=harms)


def max_residual_transient(a_e, tau_e, a_c, tau_c, t_max=None, n=20001):
    """max |A_e exp(-t/tau_e) - A_c exp(-t/tau_c)| over [0, t_max] by scan."""
    t_max = t_max or 10 * max(tau_e, tau_c)
    t = np.linspace(0.0, t_max, n)
    r = a_e * np.exp(-t / tau_e) - a_c * np.exp(-t / tau_c)
    i = int(np.argmax(np.abs(r)))
    return float(abs(r[i])), float(t[i])


# -- key = value serialization ----------------------------------------------

def timeline_to_kv(timeline: FieldTimeline) -> dict:
    out = {"bias_g": timeline.bias}
    for i, (a, tau) in enumerate(timeline.eddies, start=1):
        out[f"eddy{i}_amplitude_g"] = a
        out[f"eddy{i}_tau_s"] = tau
    for i, h in enumerate(timeline.harmonics, start=1):
        out[f"harmonic{i}_frequency_hz"] = h.frequency
        out[f"harmonic{i}_amplitude_g"] = h.amplitude
        out[f"harmonic{i}_phase_rad"] = h.phase
    out["drift_times_s"] = list(timeline.drift[0])
    out["drift_values_g"] = list(timeline.drift[1])
    out["noise_density_g_per_rthz"] = timeline.noise_density
    out["noise_rate_hz"] = timeline.noise_rate
    out["line_frequency_hz"] = timeline.line_frequency
    out["seed"] = timeline.seed
    return out


def plan_to_kv(plan: CompensationPlan) -> dict:
    out = {}
    for i, (a, tau) in enumerate(plan.eddy_branches, start=1):
        out[f"eddy{i}_step_amplitude_g"] = a
        out[f"eddy{i}_tau_c_s"] = tau
    for i, h in enumerate(plan.harmonic_branches, start=1):
        out[f"harmonic{i}_frequency_hz"] = h.frequency
        out[f"harmonic{i}_amplitude_g"] = h.amplitude
        out[f"harmonic{i}_phase_rad"] = h.phase
    out["coil_bandwidth_hz"] = plan.coil_bandwidth
    out["line_frequency_hz"] = plan.line_frequency
    return out


def _indexed(d, prefix, fields, source):
    """Collect prefix{i}_<field> groups into a list ordered by i."""
    groups = {}
    for key in list(d):
        if not key.startswith(prefix):
            continue
        head, _, rest = key[len(prefix):].partition("_")
        if not head.isdigit() or rest not in fields:
            raise FormatError(f"unknown key {key!r}", source)
        groups.setdefault(int(head), {})[rest] = float(d.pop(key))
    out = []
    for i in sorted(groups):
        missing = [f for f in fields if f not in groups[i]]
        if missing:
            raise FormatError(f"{prefix}{i} is missing {', '.join(missing)}", source)
        out.append(tuple(groups[i][f] for f in fields))
    return out


def _reject_leftovers(d, source):
    if d:
        raise FormatError(f"unknown key(s): {', '.join(sorted(d))}", source)


def timeline_from_kv(mapping: dict, source=None) -> FieldTimeline:
    d = dict(mapping)
    eddies = _indexed(d, "eddy", ("amplitude_g", "tau_s"), source)
    harms = _indexed(d, "harmonic", ("frequency_hz", "amplitude_g", "phase_rad"), source)
    try:
        tl = FieldTimeline(
            bias=float(d.pop("bias_g", 0.107)),
            eddies=tuple(eddies),
            harmonics=tuple(Harmonic(*h) for h in harms),
            drift=(tuple(d.pop("drift_times_s", [])), tuple(d.pop("drift_values_g", []))),
            noise_density=float(d.pop("noise_density_g_per_rthz", 0.0)),
            noise_rate=float(d.pop("noise_rate_hz", 1e6)),
            line_frequency=float(d.pop("line_frequency_hz", LINE_FREQUENCY)),
            seed=int(d.pop("seed", 0)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(str(exc), source) from None
    _reject_leftovers(d, source)
    return tl


def plan_from_kv(mapping: dict, source=None) -> CompensationPlan:
    d = dict(mapping)
    eddies = _indexed(d, "eddy", ("step_amplitude_g", "tau_c_s"), source)
    harms = _indexed(d, "harmonic", ("frequency_hz", "amplitude_g", "phase_rad"), source)
    try:
        plan = CompensationPlan(
            eddy_branches=tuple(eddies),
            harmonic_branches=tuple(Harmonic(*h) for h in harms),
            coil_bandwidth=float(d.pop("coil_bandwidth_hz", 1000.0)),
            line_frequency=float(d.pop("line_frequency_hz", LINE_FREQUENCY)),
        )
    except ValueError as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(str(exc), source) from None
    _reject_leftovers(d, source)
    return plan


def dumps_timeline(timeline: FieldTimeline) -> str:
    return format_kv(timeline_to_kv(timeline), comments=["field timeline, t=0 at MOT coil shutoff"])


def loads_timeline(text: str, source=None) -> FieldTimeline:
    return timeline_from_kv(parse_kv(text, source), source)


def dumps_plan(plan: CompensationPlan) -> str:
    return format_kv(plan_to_kv(plan), comments=["compensation plan"])


def loads_plan(text: str, source=None) -> CompensationPlan:
    return plan_from_kv(parse_kv(text, source), source)
