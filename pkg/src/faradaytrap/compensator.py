"""Estimate the field model from a Larmor timeline and close the loop.

The model fitted to B(t) = nu(t)/g is

    B0 + A_e exp(-t/tau_e) + sum_k (s_k sin 2 pi f_k t + c_k cos 2 pi f_k t)

which is linear in everything except tau_e. For each tau_e on a log grid the
linear parameters are solved by weighted least squares; the best grid point
is refined by golden-section search in log(tau_e).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import rng
from .fieldscape import (CompensationPlan, FieldTimeline, Harmonic, apply,
                         with_trigger_offset)
from .formats import manifest_line, write_kv
from .physconst import RB85, AtomSpecies
from .spectra import (NuTimeline, field_spectrum, nu_timeline, peak_amplitude,
                      write_spectrum_csv, write_timeline_csv)
from .spinsim import PumpProbeSchedule, synth_trace

MAX_CONDITION = 1e8


class EstimationError(ValueError):
    """Not enough data to estimate the field model."""


class IllConditionedError(EstimationError):
    pass


@dataclass(frozen=True)
class FieldParams:
    bias: float  # G
    eddy_amplitude: float  # G
    eddy_tau: float  # s
    harmonics: tuple  # Harmonic, amplitude/phase of the disturbance
    sigma_bias: float = math.nan
    sigma_eddy_amplitude: float = math.nan
    sigma_eddy_tau: float = math.nan
    sigma_harmonics: tuple = ()  # (sigma amplitude G, sigma phase rad) per harmonic
    covariance: np.ndarray | None = field(default=None, repr=False, compare=False)
    columns: tuple = ()
    residual_std: float = math.nan  # G
    condition: float = math.nan
    n_windows: int = 0
    include_eddy: bool = True

    def harmonic(self, freq) -> Harmonic | None:
        for h in self.harmonics:
            if abs(h.frequency - freq) < 1e-9:
                return h
        return None


def _design(t, tau, freqs, include_eddy):
    cols = [np.ones_like(t)]
    names = ["bias"]
    if include_eddy:
        cols.append(np.exp(-t / tau))
        names.append("eddy")
    for f in freqs:
        cols += [np.sin(2 * np.pi * f * t), np.cos(2 * np.pi * f * t)]
        names += [f"sin{f:g}", f"cos{f:g}"]
    return np.column_stack(cols), names


def _solve(D, y, w):
    Dw = D * w[:, None]
    coef, *_ = np.linalg.lstsq(Dw, y * w, rcond=None)
    r = (D @ coef - y) * w
    return coef, float(r @ r)


def _degenerate(D, names, freqs) -> str:
    norms = np.linalg.norm(D, axis=0)
    _, _, vt = np.linalg.svd(D / np.where(norms > 0, norms, 1.0), full_matrices=False)
    v = np.abs(vt[-1])
    worst = names[int(np.argmax(v))]
    if worst.startswith(("sin", "cos")):
        return f"{worst[3:]} Hz harmonic"
    return worst


def estimate_params(timeline: NuTimeline, harmonics=(60.0,), include_eddy=True,
                    tau_range=(5e-3, 100e-3), n_grid=40, line_frequency=60.0,
                    species: AtomSpecies = RB85) -> FieldParams:
    """Separable least-squares fit of the field model to a timeline.

    Windows are weighted by their reported frequency uncertainty. Needs at
    least 50 valid windows spanning three line periods.
    """
    ok = timeline.valid & np.isfinite(timeline.nu) & (timeline.sigma > 0)
    n = int(ok.sum())
    if n < 50:
        raise EstimationError(f"only {n} valid windows, need at least 50")
    t = timeline.t[ok] + timeline.time_offset
    if t[-1] - t[0] < 3.0 / line_frequency:
        raise EstimationError("valid windows span less than three line periods")
    y = timeline.nu[ok] / species.gyromagnetic_factor
    sig = timeline.sigma[ok] / species.gyromagnetic_factor
    w = 1.0 / np.maximum(sig, 1e-3 * np.median(sig))
    w = w / np.sqrt(np.mean(w**2))
    freqs = tuple(float(f) for f in harmonics)

    def rss(log_tau):
        D, _ = _design(t, math.exp(log_tau), freqs, include_eddy)
        return _solve(D, y, w)[1]

    if include_eddy:
        grid = np.linspace(math.log(tau_range[0]), math.log(tau_range[1]), n_grid)
        costs = np.array([rss(g) for g in grid])
        k = int(np.argmin(costs))
        if 0 < k < n_grid - 1:
            res = minimize_scalar(rss, bracket=(grid[k - 1], grid[k], grid[k + 1]),
                                  method="golden", tol=1e-10)
        else:
            lo, hi = (grid[0], grid[1]) if k == 0 else (grid[-2], grid[-1])
            res = minimize_scalar(rss, bounds=(lo, hi), method="bounded",
                                  options={"xatol": 1e-10})
        log_tau = float(res.x) if res.fun <= costs[k] else float(grid[k])
        tau = math.exp(log_tau)
    else:
        log_tau, tau = math.log(0.02), 0.02

    D, names = _design(t, tau, freqs, include_eddy)
    norms = np.linalg.norm(D, axis=0)
    if np.any(norms == 0):
        cond = math.inf
    else:
        cond = float(np.linalg.cond(D / norms))
    if not cond <= MAX_CONDITION:
        raise IllConditionedError(f"design matrix condition {cond:.3g} exceeds "
                                  f"{MAX_CONDITION:.0e}; degenerate term: "
                                  f"{_degenerate(D, names, freqs)}")
    coef, cost = _solve(D, y, w)
    dof = max(n - D.shape[1] - int(include_eddy), 1)
    s2 = cost / dof
    Dw = D * w[:, None]
    cov = np.linalg.inv(Dw.T @ Dw) * s2

    sigma_tau = math.nan
    if include_eddy:
        h = 1e-3
        curv = (rss(log_tau + h) - 2 * cost + rss(log_tau - h)) / h**2
        if curv > 0:
            sigma_tau = tau * math.sqrt(2 * s2 / curv)

    j = 2 if include_eddy else 1
    harms, sig_h = [], []
    for i, f in enumerate(freqs):
        s, c = coef[j + 2 * i], coef[j + 2 * i + 1]
        amp = math.hypot(s, c)
        harms.append(Harmonic(f, amp, math.atan2(c, s)))
        cs = cov[j + 2 * i:j + 2 * i + 2, j + 2 * i:j + 2 * i + 2]
        if amp > 0:
            g_amp = np.array([s, c]) / amp
            g_ph = np.array([-c, s]) / amp**2
            sig_h.append((math.sqrt(g_amp @ cs @ g_amp), math.sqrt(g_ph @ cs @ g_ph)))
        else:
            sig_h.append((math.sqrt(max(cs[0, 0], cs[1, 1])), math.pi))
    resid = D @ coef - y
    return FieldParams(
        bias=float(coef[0]),
        eddy_amplitude=float(coef[1]) if include_eddy else 0.0,
        eddy_tau=tau,
        harmonics=tuple(harms),
        sigma_bias=math.sqrt(cov[0, 0]),
        sigma_eddy_amplitude=math.sqrt(cov[1, 1]) if include_eddy else math.nan,
        sigma_eddy_tau=sigma_tau,
        sigma_harmonics=tuple(sig_h),
        covariance=cov, columns=tuple(names),
        residual_std=float(np.std(resid)), condition=cond, n_windows=n,
        include_eddy=include_eddy,
    )


def make_plan(params: FieldParams, coil_bandwidth=1000.0, line_frequency=60.0,
              eddy=True, harmonics=True) -> CompensationPlan:
    """Opposing waveform for the fitted disturbance.

    The eddy branch cancels the fitted transient; each harmonic branch is the
    fitted sinusoid shifted by pi. Branches above the coil bandwidth are
    dropped with a warning.
    """
    eddy_br = ()
    if eddy and params.include_eddy and params.eddy_amplitude != 0:
        eddy_br = ((params.eddy_amplitude, params.eddy_tau),)
    harm_br = []
    if harmonics:
        dropped = []
        for h in params.harmonics:
            if h.amplitude == 0:
                continue
            if h.frequency > coil_bandwidth:
                dropped.append(h.frequency)
                continue
            harm_br.append(Harmonic(h.frequency, h.amplitude, h.phase + math.pi))
        if dropped:
            warnings.warn("dropped branches above the coil bandwidth: "
                          + ", ".join(f"{f:g} Hz" for f in dropped), stacklevel=2)
    return CompensationPlan(eddy_br, tuple(harm_br), coil_bandwidth, line_frequency)


# -- closed loop --------------------------------------------------------------

@dataclass(frozen=True)
class ClosedLoopScenario:
    """Everything a closed-loop run needs.

    ``snr`` is the single-shot SNR handed to ``synth_trace``.
    ``trigger_jitter`` is the RMS timing error (s) of the line trigger from
    run to run; 0 means phase locked. ``support_start`` restricts the
    residual statistics to t >= support_start.
    """

    truth: FieldTimeline
    schedule: PumpProbeSchedule = field(default_factory=PumpProbeSchedule)
    snr: float = 15.0 / 8.0
    envelope: str = "trapped"
    tau: float | None = None
    seed: int = 0
    harmonics: tuple = (60.0,)
    coil_bandwidth: float = 1000.0
    compensate_eddy: bool = True
    compensate_harmonics: bool = True
    trigger_jitter: float = 0.0
    support_start: float = 0.0
    decay_for_timing: float = 0.5e-3


@dataclass
class CompensationReport:
    pre_std_hz: float
    post_std_hz: list
    suppression: dict  # harmonic frequency -> pre/post peak amplitude ratio
    eddy_amplitude: float
    eddy_tau: float
    sigma_eddy_amplitude: float
    sigma_eddy_tau: float
    iterations: int
    converged: bool
    diverged: bool
    plan: CompensationPlan
    params: list = field(repr=False, default_factory=list)
    timelines: list = field(repr=False, default_factory=list)  # pre, then one per iteration
    support_start: float = 0.0

    @property
    def final_std_hz(self) -> float:
        return self.post_std_hz[-1] if self.post_std_hz else self.pre_std_hz

    def as_dict(self) -> dict:
        out = {
            "pre_std_hz": self.pre_std_hz,
            "post_std_hz": self.final_std_hz,
            "iterations": self.iterations,
            "converged": self.converged,
            "diverged": self.diverged,
            "support_start_s": self.support_start,
            "eddy_amplitude_g": self.eddy_amplitude,
            "eddy_amplitude_sigma_g": self.sigma_eddy_amplitude,
            "eddy_tau_s": self.eddy_tau,
            "eddy_tau_sigma_s": self.sigma_eddy_tau,
        }
        for k, s in enumerate(self.post_std_hz, start=1):
            out[f"iteration{k}_std_hz"] = s
        for f, s in sorted(self.suppression.items()):
            out[f"suppression_{f:g}hz"] = s
        return out


def residual_std(timeline: NuTimeline, support_start=0.0) -> float:
    sel = timeline.valid & (timeline.t >= support_start)
    return float(np.std(timeline.nu[sel])) if sel.any() else math.nan


def measure(truth: FieldTimeline, scenario: ClosedLoopScenario, run: int) -> NuTimeline:
    """Synthesize one shot-averaged trace of ``truth`` and extract nu(t)."""
    field_now = truth
    if scenario.trigger_jitter > 0:
        key = rng.stream_key(scenario.seed, "trigger-jitter")
        dt = scenario.trigger_jitter * float(rng.normal(key, run))
        field_now = with_trigger_offset(truth, dt)
    trace = synth_trace(field_now, scenario.schedule, envelope=scenario.envelope,
                        tau=scenario.tau, snr=scenario.snr,
                        seed=rng.stream_key(scenario.seed, "run", run))
    return nu_timeline(trace, decay=scenario.decay_for_timing)


def _suppression(pre: NuTimeline, post: NuTimeline, freqs) -> dict:
    f0, a0 = field_spectrum(pre)
    f1, a1 = field_spectrum(post)
    out = {}
    for f in freqs:
        # nearest bin only, so neighbouring noise bins do not count as residual
        p0 = peak_amplitude(f0, a0, f, tol=0.5 * (f0[1] - f0[0]))
        p1 = peak_amplitude(f1, a1, f, tol=0.5 * (f1[1] - f1[0]))
        out[float(f)] = p0 / p1 if p1 > 0 else math.inf
    return out


def closed_loop(scenario: ClosedLoopScenario, iterations=2, report_harmonics=None):
    """Simulate -> measure -> estimate -> compensate, ``iterations`` times.

    Each iteration adds a correction plan fitted to the latest residual.
    Stops early when the residual std improves by less than 5% between
    iterations, or aborts when it grows two iterations running.
    """
    freqs = report_harmonics or sorted({h.frequency for h in scenario.truth.harmonics}
                                       | set(scenario.harmonics))
    pre = measure(scenario.truth, scenario, 0)
    timelines = [pre]
    stds = []
    params = []
    plan = CompensationPlan(coil_bandwidth=scenario.coil_bandwidth,
                            line_frequency=scenario.truth.line_frequency)
    converged = diverged = False
    for k in range(1, iterations + 1):
        p = estimate_params(timelines[-1], scenario.harmonics,
                            line_frequency=scenario.truth.line_frequency)
        params.append(p)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            step = make_plan(p, scenario.coil_bandwidth, scenario.truth.line_frequency,
                             eddy=scenario.compensate_eddy,
                             harmonics=scenario.compensate_harmonics)
        plan = plan + step
        tl = measure(apply(scenario.truth, plan), scenario, k)
        timelines.append(tl)
        stds.append(residual_std(tl, scenario.support_start))
        if len(stds) >= 2 and abs(stds[-1] - stds[-2]) < 0.05 * stds[-2]:
            converged = True
            break
        history = [residual_std(pre, scenario.support_start)] + stds
        if len(history) >= 3 and history[-1] > history[-2] > history[-3]:
            diverged = True
            break
    first = params[0] if params else None
    return CompensationReport(
        pre_std_hz=residual_std(pre, scenario.support_start),
        post_std_hz=stds,
        suppression=_suppression(pre, timelines[-1], freqs),
        eddy_amplitude=first.eddy_amplitude if first else math.nan,
        eddy_tau=first.eddy_tau if first else math.nan,
        sigma_eddy_amplitude=first.sigma_eddy_amplitude if first else math.nan,
        sigma_eddy_tau=first.sigma_eddy_tau if first else math.nan,
        iterations=len(stds), converged=converged, diverged=diverged, plan=plan,
        params=params, timelines=timelines, support_start=scenario.support_start,
    )


def write_report(prefix, report: CompensationReport, inputs=()):
    """Key-value report plus pre/post timeline and field-spectrum CSVs."""
    paths = {"report": write_kv(f"{prefix}_report.txt", report.as_dict(),
                                comments=[manifest_line(inputs)])}
    pre, post = report.timelines[0], report.timelines[-1]
    paths["timeline_pre"] = write_timeline_csv(f"{prefix}_timeline_pre.csv", pre, inputs)
    paths["timeline_post"] = write_timeline_csv(f"{prefix}_timeline_post.csv", post, inputs)
    for tag, tl in (("pre", pre), ("post", post)):
        f, a = field_spectrum(tl)
        paths[f"spectrum_{tag}"] = write_spectrum_csv(f"{prefix}_spectrum_{tag}.csv", f, a, inputs)
    return paths
