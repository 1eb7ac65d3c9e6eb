"""Window the trace, Fourier transform, fit Lorentzians, build nu_L(t).

Also holds the time-domain damped-sine fit used as an independent check of
the Lorentzian estimator, the field spectrum of a timeline, and the 2D raster
view of a trace.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .formats import manifest_line, to_graymap, write_csv, write_pgm
from .physconst import RB85, AtomSpecies, field_from_frequency
from .spinsim import PrecessionTrace, PumpProbeSchedule

MIN_SEGMENT = 64


class GapError(ValueError):
    """Too many invalid windows to build a uniformly sampled series."""


def window_slice(trace: PrecessionTrace, schedule: PumpProbeSchedule | None = None):
    """Per-cycle probe windows (pump interval excluded), as array views."""
    schedule = schedule or trace.schedule
    v = np.asarray(trace.voltage)
    if len(v) != schedule.n_samples:
        raise ValueError(f"trace has {len(v)} samples, schedule expects {schedule.n_samples}")
    if schedule.cycles == 0:
        return []
    p0, nw = schedule.pump_samples, schedule.window_samples
    block = v.reshape(schedule.cycles, schedule.samples_per_cycle)[:, p0:p0 + nw]
    return list(block)


def power_spectrum(segment, sample_rate, zero_pad_factor=8, window="rect"):
    """|DFT|^2 of the mean-subtracted segment, zero padded by ``zero_pad_factor``.

    Returns the one-sided grid (Hz) and power. ``window="hann"`` tapers the
    segment first.
    """
    x = np.asarray(segment, dtype=float)
    if len(x) < MIN_SEGMENT:
        raise ValueError(f"segment has {len(x)} samples, need at least {MIN_SEGMENT}")
    if zero_pad_factor < 1:
        raise ValueError("zero_pad_factor must be >= 1")
    x = x - x.mean()
    if window == "hann":
        x = x * np.hanning(len(x))
    elif window != "rect":
        raise ValueError(f"unknown window {window!r}")
    n = int(zero_pad_factor * len(x))
    spec = np.fft.rfft(x, n=n)
    return np.fft.rfftfreq(n, 1.0 / sample_rate), np.abs(spec) ** 2


def two_sided_sum(power, n_fft):
    """Sum of the full two-sided |DFT|^2 from its one-sided half."""
    p = np.asarray(power)
    inner = p[1:-1] if n_fft % 2 == 0 else p[1:]
    edge = p[0] + (p[-1] if n_fft % 2 == 0 else 0.0)
    return float(edge + 2 * inner.sum())


# -- Lorentzian fit -----------------------------------------------------------

@dataclass
class SpectralFit:
    center: float = math.nan  # Hz
    half_width: float = math.nan  # Hz
    amplitude: float = math.nan
    baseline: float = math.nan
    residual_rms: float = math.nan
    covariance: np.ndarray | None = field(default=None, repr=False)
    sigma_center: float = math.nan
    window_index: int = -1
    status: str = "ok"  # ok | no_signal | not_converged | bad_fit
    iterations: int = 0
    region: np.ndarray | None = field(default=None, repr=False)

    @property
    def valid(self) -> bool:
        return self.status == "ok"


def lorentzian(nu, a, c, w, b):
    return a / (1.0 + ((nu - c) / w) ** 2) + b


def _lm(fun, jac, p0, max_iter=100, rtol=1e-8, scale=None):
    """Levenberg-Marquardt with Marquardt (diagonal) damping.

    Returns (p, converged, iterations). ``scale`` gives per-parameter sizes
    used in the relative step test when a parameter is near zero.
    """
    p = np.asarray(p0, dtype=float).copy()
    scale = np.abs(p) if scale is None else np.asarray(scale, dtype=float)
    r = fun(p)
    cost = r @ r
    lam = 1e-3
    for it in range(1, max_iter + 1):
        J = jac(p)
        A = J.T @ J
        g = J.T @ r
        diag = np.diag(A).copy()
        diag[diag == 0] = 1.0
        while True:
            try:
                dp = -np.linalg.solve(A + lam * np.diag(diag), g)
            except np.linalg.LinAlgError:
                lam *= 10
                if lam > 1e12:
                    return p, False, it
                continue
            r_new = fun(p + dp)
            cost_new = r_new @ r_new
            if np.isfinite(cost_new) and cost_new <= cost:
                break
            lam *= 10
            if lam > 1e12:
                return p, False, it
        p = p + dp
        r, cost = r_new, cost_new
        lam = max(lam / 10, 1e-12)
        if np.all(np.abs(dp) <= rtol * np.maximum(np.abs(p), scale)):
            return p, True, it
    return p, False, max_iter


def _half_width_guess(nu, power, i, base):
    half = base + 0.5 * (power[i] - base)
    lo = i
    while lo > 0 and power[lo] > half:
        lo -= 1
    hi = i
    while hi < len(power) - 1 and power[hi] > half:
        hi += 1
    step = nu[1] - nu[0]
    return max(0.5 * (nu[hi] - nu[lo]), step)


def lorentzian_fit(nu, power, window_index=-1, threshold=3.0, region=10.0,
                   max_iter=100, cov_scale=1.0, nu_range=None) -> SpectralFit:
    """Fit a/(1+((nu-c)/w)^2)+b around the strongest peak.

    The peak must reach ``threshold`` times the median power, otherwise the
    result has status ``no_signal``. The fit covers +-``region`` initial half
    widths around the peak bin. ``cov_scale`` multiplies the covariance; for
    zero-padded spectra the padding factor accounts for correlated bins.
    ``nu_range`` restricts the peak search.
    """
    nu = np.asarray(nu, dtype=float)
    power = np.asarray(power, dtype=float)
    search = np.ones(len(nu), dtype=bool)
    search[0] = False  # DC bin
    if nu_range is not None:
        search &= (nu >= nu_range[0]) & (nu <= nu_range[1])
    if not search.any():
        return SpectralFit(window_index=window_index, status="no_signal")
    med = float(np.median(power[1:]))
    i = int(np.flatnonzero(search)[np.argmax(power[search])])
    if not power[i] >= threshold * med or power[i] <= 0:
        return SpectralFit(window_index=window_index, status="no_signal")
    step = nu[1] - nu[0]
    c0 = nu[i]
    if 0 < i < len(nu) - 1:
        y0, y1, y2 = power[i - 1:i + 2]
        den = y0 - 2 * y1 + y2
        if den < 0:
            c0 = nu[i] + 0.5 * (y0 - y2) / den * step
    w0 = _half_width_guess(nu, power, i, med)
    sel = np.abs(nu - nu[i]) <= region * w0
    sel[0] = False
    if sel.sum() < 6:
        return SpectralFit(window_index=window_index, status="bad_fit")
    x, y = nu[sel], power[sel]
    # normalized coordinates: frequency in units of w0 about c0, power in peak units
    ys = power[i]
    u = (x - c0) / w0
    v = y / ys

    def fun(p):
        a, c, w, b = p
        return a / (1 + ((u - c) / w) ** 2) + b - v

    def jac(p):
        a, c, w, b = p
        q = (u - c) / w
        d = 1 + q * q
        return np.column_stack((1 / d, 2 * a * q / (w * d * d), 2 * a * q * q / (w * d * d),
                                np.ones_like(u)))

    p0 = np.array([1.0 - med / ys, 0.0, 1.0, med / ys])
    p, ok, iters = _lm(fun, jac, p0, max_iter=max_iter, scale=np.array([1.0, 1.0, 1.0, 1.0]))
    a, c, w, b = p
    w = abs(w)
    res = fun(p)
    dof = max(len(u) - 4, 1)
    s2 = float(res @ res) / dof
    J = jac(p)
    try:
        cov_n = np.linalg.inv(J.T @ J) * s2 * cov_scale
    except np.linalg.LinAlgError:
        cov_n = np.full((4, 4), np.nan)
    units = np.array([ys, w0, w0, ys])
    cov = cov_n * np.outer(units, units)
    fit = SpectralFit(
        center=c0 + c * w0, half_width=w * w0, amplitude=a * ys, baseline=b * ys,
        residual_rms=math.sqrt(float(res @ res) / len(u)) * ys, covariance=cov,
        sigma_center=math.sqrt(cov[1, 1]) if cov[1, 1] >= 0 else math.nan,
        window_index=window_index, iterations=iters, region=np.flatnonzero(sel))
    if not ok:
        fit.status = "not_converged"
    elif not (w > 0 and a > 0 and nu[1] <= fit.center <= nu[-1]):
        fit.status = "bad_fit"
    elif fit.residual_rms > 0.5 * fit.amplitude:
        fit.status = "bad_fit"
    return fit


# -- time-domain oracle -------------------------------------------------------

@dataclass
class DampedSineFit:
    amplitude: float
    tau: float  # s
    frequency: float  # Hz
    phase: float  # rad
    sigma_frequency: float
    converged: bool
    cost: float


def damped_sine(t, amplitude, tau, frequency, phase):
    return amplitude * np.exp(-t / tau) * np.sin(2 * np.pi * frequency * t + phase)


def damped_sine_fit(segment, sample_rate, guess=None) -> DampedSineFit:
    """Nonlinear least squares of A exp(-t/tau) sin(2 pi nu t + phi), t from 0.

    Without ``guess`` the frequency comes from the padded FFT peak and the
    amplitude/phase from a linear fit at that frequency.
    """
    x = np.asarray(segment, dtype=float)
    t = np.arange(len(x)) / sample_rate
    if guess is None:
        nu, p = power_spectrum(x, sample_rate, 8)
        i = 1 + int(np.argmax(p[1:]))
        f0 = nu[i]
        if 0 < i < len(p) - 1:
            y0, y1, y2 = p[i - 1:i + 2]
            den = y0 - 2 * y1 + y2
            if den < 0:
                f0 += 0.5 * (y0 - y2) / den * (nu[1] - nu[0])
        tau0 = t[-1] / 2 if len(t) > 1 else 1.0
        e = np.exp(-t / tau0)
        basis = np.column_stack((e * np.sin(2 * np.pi * f0 * t), e * np.cos(2 * np.pi * f0 * t)))
        (s, c), *_ = np.linalg.lstsq(basis, x, rcond=None)
        guess = (math.hypot(s, c), tau0, f0, math.atan2(c, s))
    a0, tau0, f0, ph0 = guess
    scale_t = t[-1] if len(t) > 1 else 1.0

    # parameters: A, log(tau), (nu - f0) * T, phase
    def fun(q):
        return damped_sine(t, q[0], math.exp(q[1]), f0 + q[2] / scale_t, q[3]) - x

    res = least_squares(fun, [a0, math.log(tau0), 0.0, ph0], method="lm",
                        xtol=1e-12, ftol=1e-12, gtol=1e-12, max_nfev=2000)
    q = res.x
    amp, tau, freq, ph = q[0], math.exp(q[1]), f0 + q[2] / scale_t, q[3]
    if amp < 0:
        amp, ph = -amp, ph + math.pi
    ph = (ph + math.pi) % (2 * math.pi) - math.pi
    dof = max(len(x) - 4, 1)
    s2 = 2 * res.cost / dof
    try:
        cov = np.linalg.inv(res.jac.T @ res.jac) * s2
        sig = math.sqrt(cov[2, 2]) / scale_t
    except np.linalg.LinAlgError:
        sig = math.nan
    return DampedSineFit(amp, tau, freq, ph, sig, bool(res.success), float(2 * res.cost))


# -- timelines ----------------------------------------------------------------

@dataclass
class NuTimeline:
    t: np.ndarray  # cycle start times, s
    nu: np.ndarray  # Hz
    sigma: np.ndarray  # Hz
    valid: np.ndarray  # bool
    fits: list = field(default_factory=list, repr=False)
    cycle_period: float = 1e-3
    # delay from cycle start to the effective measurement instant, s
    time_offset: float = 0.0

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.nu = np.asarray(self.nu, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        self.valid = np.asarray(self.valid, dtype=bool)
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("timeline times must be strictly increasing")

    def __len__(self):
        return len(self.t)

    def subset(self, mask) -> "NuTimeline":
        mask = np.asarray(mask, dtype=bool)
        return NuTimeline(self.t[mask], self.nu[mask], self.sigma[mask], self.valid[mask],
                          [f for f, m in zip(self.fits, mask) if m] if self.fits else [],
                          self.cycle_period, self.time_offset)


def _lorentz_jac(nu, a, c, w):
    q = (nu - c) / w
    d = 1 + q * q
    return np.column_stack((1 / d, 2 * a * q / (w * d * d), 2 * a * q * q / (w * d * d),
                            np.ones_like(nu)))


def propagated_center_sigma(segment, fit: SpectralFit, nu, spectrum, taper, n_fft) -> float:
    """Standard error of the fitted center from white noise on the samples.

    The fit is linearized around its optimum: a perturbation dx of the
    samples changes the power by 2 Re(conj(X) dX), and the Gauss-Newton
    update maps that onto the parameters. The noise variance is read off the
    spectrum median, far from the peak (E|X_k|^2 = sigma^2 sum taper^2 and
    the median of an exponential variable is ln 2 times its mean).
    """
    idx = fit.region
    n = len(segment)
    J = _lorentz_jac(nu[idx], fit.amplitude, fit.center, fit.half_width)
    try:
        h = np.linalg.solve(J.T @ J, J.T)[1]
    except np.linalg.LinAlgError:
        return math.nan
    k = np.arange(n)
    # d X_k / d x_m = taper_m e_km - mean_n(taper_n e_kn)
    phase = np.exp(-2j * np.pi * np.outer(idx, k) / n_fft) * taper[None, :]
    phase -= phase.mean(axis=1, keepdims=True)  # the segment mean is removed first
    grad = 2 * np.real((h * np.conj(spectrum[idx])) @ phase)
    far = np.abs(nu - fit.center) > 20 * fit.half_width
    far[0] = False
    if not far.any():
        return math.nan
    sigma2 = np.median(np.abs(spectrum[far]) ** 2) / (math.log(2) * np.sum(taper**2))
    return float(math.sqrt(sigma2 * (grad @ grad)))


def fit_window(segment, sample_rate, zero_pad_factor=8, window="rect", index=-1,
               nu_range=None) -> SpectralFit:
    """Lorentzian fit of one probe window, with a propagated center error."""
    x = np.asarray(segment, dtype=float)
    nu, p = power_spectrum(x, sample_rate, zero_pad_factor, window)
    fit = lorentzian_fit(nu, p, window_index=index, cov_scale=zero_pad_factor,
                         nu_range=nu_range)
    if fit.region is not None and np.isfinite(fit.center):
        n_fft = int(zero_pad_factor * len(x))
        taper = np.hanning(len(x)) if window == "hann" else np.ones(len(x))
        spec = np.fft.rfft((x - x.mean()) * taper, n=n_fft)
        fit.sigma_center = propagated_center_sigma(x, fit, nu, spec, taper, n_fft)
    return fit


@functools.lru_cache(maxsize=64)
def _chirp_delay(sample_rate, n, decay, zero_pad_factor, window, nu0=46674.15):
    t = np.arange(n) / sample_rate
    rate = 1e5  # Hz/s; small enough to stay in the linear regime
    env = np.exp(-t / decay) if math.isfinite(decay) else np.ones(n)
    delays = []
    for ph in np.linspace(0, 2 * np.pi, 4, endpoint=False):
        x = env * np.sin(2 * np.pi * (nu0 * t + 0.5 * rate * t * t) + ph)
        nu, p = power_spectrum(x, sample_rate, zero_pad_factor, window)
        ref = lorentzian_fit(nu, p)
        x0 = env * np.sin(2 * np.pi * nu0 * t + ph)
        nu, p = power_spectrum(x0, sample_rate, zero_pad_factor, window)
        base = lorentzian_fit(nu, p)
        delays.append((ref.center - base.center) / rate)
    return float(np.mean(delays))


def effective_delay(schedule: PumpProbeSchedule, decay=0.5e-3, zero_pad_factor=8,
                    window="rect") -> float:
    """Delay from cycle start to the instant whose frequency the fit reports.

    For a frequency that drifts linearly across the window, the Lorentzian
    center equals the instantaneous frequency at a fixed delay after the
    pump. The delay depends on the decay time and window, so it is
    calibrated by passing a weak noiseless chirp through the same estimator.
    """
    if schedule.window_samples < MIN_SEGMENT:
        return schedule.pump_duration
    return schedule.pump_duration + _chirp_delay(
        float(schedule.sample_rate), schedule.window_samples, float(decay),
        zero_pad_factor, window)


def nu_timeline(trace: PrecessionTrace, schedule: PumpProbeSchedule | None = None,
                zero_pad_factor=8, window="rect", nu_range=None, decay=0.5e-3) -> NuTimeline:
    """Lorentzian center of every probe window, with validity flags.

    Times are cycle starts; ``time_offset`` records the delay to the
    effective measurement instant for a per-cycle decay time ``decay``.
    """
    schedule = schedule or trace.schedule
    fits = [fit_window(seg, schedule.sample_rate, zero_pad_factor, window, i, nu_range)
            for i, seg in enumerate(window_slice(trace, schedule))]
    return NuTimeline(
        schedule.cycle_starts(),
        np.array([f.center for f in fits]),
        np.array([f.sigma_center for f in fits]),
        np.array([f.valid and f.sigma_center > 0 for f in fits], dtype=bool),
        fits, schedule.cycle_period,
        effective_delay(schedule, decay, zero_pad_factor, window))


def filled_field(timeline: NuTimeline, species: AtomSpecies = RB85, max_gap_fraction=0.10):
    """Field samples (G) on the uniform cycle grid, gaps linearly interpolated."""
    n = len(timeline)
    if n == 0:
        return np.zeros(0)
    dt = np.diff(timeline.t)
    if n > 1 and np.max(np.abs(dt - timeline.cycle_period)) > 1e-9 * timeline.cycle_period:
        raise ValueError("timeline is not uniformly sampled at the cycle period")
    good = timeline.valid & np.isfinite(timeline.nu)
    bad = n - int(good.sum())
    if bad > max_gap_fraction * n:
        raise GapError(f"{bad} of {n} windows invalid (limit {max_gap_fraction:.0%})")
    nu = timeline.nu.copy()
    if bad:
        warnings.warn(f"interpolating {bad} invalid window(s)", stacklevel=2)
        nu[~good] = np.interp(timeline.t[~good], timeline.t[good], nu[good])
    return field_from_frequency(np.abs(nu), species)


def field_spectrum(timeline: NuTimeline, species: AtomSpecies = RB85):
    """One-sided amplitude spectrum (G) of the field behind the timeline.

    A sinusoid of amplitude a that falls on a bin shows up as a peak of height
    a. Nyquist is 1/(2 cycle_period).
    """
    b = filled_field(timeline, species)
    n = len(b)
    if n < 2:
        return np.zeros(0), np.zeros(0)
    amp = 2 * np.abs(np.fft.rfft(b - b.mean())) / n
    return np.fft.rfftfreq(n, timeline.cycle_period), amp


def peak_amplitude(freqs, amps, target, tol=None) -> float:
    """Largest amplitude within one bin of ``target``."""
    df = freqs[1] - freqs[0]
    tol = df if tol is None else tol
    sel = np.abs(freqs - target) <= tol * (1 + 1e-9)
    return float(amps[sel].max()) if sel.any() else 0.0


# -- envelope across cycles ---------------------------------------------------

def window_amplitudes(trace: PrecessionTrace, schedule: PumpProbeSchedule | None = None,
                      decay=0.5e-3) -> np.ndarray:
    """Initial amplitude of each probe window.

    Each window is projected onto exp(-t/decay) exp(2 pi i nu t) at its FFT
    peak; the projection is normalised so a noiseless damped sine with that
    decay returns its amplitude. Noise adds a small positive bias of order
    sigma / sqrt(decay * sample_rate).
    """
    schedule = schedule or trace.schedule
    fs = schedule.sample_rate
    out = []
    for seg in window_slice(trace, schedule):
        t = np.arange(len(seg)) / fs
        nu, p = power_spectrum(seg, fs, 8)
        f0 = nu[1 + int(np.argmax(p[1:]))]
        w = np.exp(-t / decay)
        proj = np.sum(seg * w * np.exp(-2j * np.pi * f0 * t))
        out.append(2 * abs(proj) / np.sum(w * w))
    return np.array(out)


def envelope_lifetime(t, amps):
    """(1/e crossing time, fitted exponential time constant) of an amplitude series.

    Times are measured from ``t[0]``; the crossing is relative to ``amps[0]``
    and linearly interpolated (inf if never crossed). The fit is A exp(-t/tau)
    by nonlinear least squares on all points.
    """
    t = np.asarray(t, dtype=float) - t[0]
    a = np.asarray(amps, dtype=float)
    if len(a) < 3 or not a[0] > 0:
        return math.inf, math.inf
    below = np.flatnonzero(a < a[0] / math.e)
    if len(below):
        i = below[0]
        cross = t[i - 1] + (a[0] / math.e - a[i - 1]) * (t[i] - t[i - 1]) / (a[i] - a[i - 1])
    else:
        cross = math.inf
    span = t[-1] if t[-1] > 0 else 1.0
    tau0 = cross if math.isfinite(cross) else 10 * span

    def fun(q):
        return q[0] * np.exp(-t / (span * math.exp(q[1]))) - a

    res = least_squares(fun, [a[0], math.log(tau0 / span)], method="lm")
    return float(cross), float(span * math.exp(res.x[1]))


# -- raster view --------------------------------------------------------------

def rasterize(trace: PrecessionTrace, schedule: PumpProbeSchedule | None = None) -> np.ndarray:
    """matrix[row = sample within cycle, col = cycle index]."""
    schedule = schedule or trace.schedule
    if len(trace.voltage) != schedule.n_samples:
        raise ValueError("trace and schedule disagree on length")
    return np.asarray(trace.voltage).reshape(schedule.cycles, schedule.samples_per_cycle).T.copy()


def probe_rows(matrix, schedule: PumpProbeSchedule, fraction=1.0):
    p0 = schedule.pump_samples
    n = int(round(schedule.window_samples * fraction))
    return matrix[p0:p0 + n]


def row_autocorrelation(matrix) -> float:
    """Mean correlation coefficient between neighbouring columns."""
    m = np.asarray(matrix, dtype=float)
    if m.shape[1] < 2:
        return 1.0
    a, b = m[:, :-1], m[:, 1:]
    a = a - a.mean(axis=0)
    b = b - b.mean(axis=0)
    num = np.sum(a * b, axis=0)
    den = np.sqrt(np.sum(a * a, axis=0) * np.sum(b * b, axis=0))
    return float(np.mean(num / np.where(den > 0, den, 1.0)))


def stripe_spacing(matrix) -> float:
    """Mean row distance between adjacent maxima of the column-averaged signal."""
    col = np.asarray(matrix, dtype=float).mean(axis=1)
    inner = (col[1:-1] > col[:-2]) & (col[1:-1] >= col[2:]) & (col[1:-1] > 0)
    peaks = np.flatnonzero(inner) + 1
    if len(peaks) < 2:
        return math.nan
    # refine each maximum by a parabola through its neighbours
    y0, y1, y2 = col[peaks - 1], col[peaks], col[peaks + 1]
    den = y0 - 2 * y1 + y2
    off = np.where(den < 0, 0.5 * (y0 - y2) / np.where(den < 0, den, 1), 0.0)
    return float(np.mean(np.diff(peaks + off)))


def column_phases(matrix, sample_rate, nu_ref) -> np.ndarray:
    """Phase of each column demodulated at ``nu_ref`` over its rows."""
    m = np.asarray(matrix, dtype=float)
    t = np.arange(m.shape[0]) / sample_rate
    ref = np.exp(-2j * np.pi * nu_ref * t)
    return np.angle(ref @ m)


def circular_std(phases) -> float:
    r = np.abs(np.mean(np.exp(1j * np.asarray(phases))))
    return float(math.sqrt(-2 * math.log(max(r, 1e-300))))


# -- writers ------------------------------------------------------------------

def write_timeline_csv(path, timeline: NuTimeline, inputs=()):
    return write_csv(path, {"t_s": timeline.t, "nu_hz": timeline.nu,
                            "sigma_hz": timeline.sigma, "valid": timeline.valid},
                     header_lines=[manifest_line(inputs)])


def write_spectrum_csv(path, freqs, amps, inputs=()):
    return write_csv(path, {"f_hz": freqs, "amp_gauss": amps},
                     header_lines=[manifest_line(inputs)])


def write_raster(prefix, matrix, inputs=()):
    """Write ``<prefix>.pgm`` (linear min->0, max->255) and ``<prefix>.csv``."""
    m = np.asarray(matrix, dtype=float)
    pgm = write_pgm(f"{prefix}.pgm", to_graymap(m),
                    comment="rows: sample within cycle; columns: cycle index")
    csv = write_csv(f"{prefix}.csv", {f"c{j}": m[:, j] for j in range(m.shape[1])},
                    header_lines=[manifest_line(inputs),
                                  "rows: sample within cycle; columns: cycle index"])
    return pgm, csv
