"""Monte Carlo motion of atoms in the crossed dark trap with photon recoils.

Each sample is integrated with velocity Verlet in the optical potential plus
gravity. Photon scattering is a Poisson process whose rate is the sum of

* the trap-beam rate at the sample's position (from the local intensity),
* a uniform probe rate,
* optical-pumping bursts, spread uniformly over each pump pulse.

Events are generated by integrating the hazard ``rate*dt`` against an
exponential threshold, so one random number is needed per event rather than
per step. Random numbers come from a counter-based generator keyed on
``(seed, sample)``: the result does not depend on how samples are batched.

Recoil model (``kick_model="absorb_emit"``, default): absorption gives a
kick of hbar*k along the axis of the absorbing beam with random sign
(retro-reflected / counter-propagating light), spontaneous emission a kick of
hbar*k in a uniformly random direction. The mean kinetic energy gain is
therefore ``2*E_r`` per photon, of which ``(1 + 1/3)*E_r`` lands in the
absorption axis. ``kick_model="lumped"`` applies a single isotropic kick
(``E_r`` per photon).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import curve_fit

from . import rng
from .physconst import G_EARTH, HBAR, KB, RB85, AtomSpecies, recoil_energy, recoil_velocity


def scattering_rate(intensity, detuning_hz, species: AtomSpecies = RB85):
    """Photon scattering rate (photons/s) of a two-level atom.

    (Gamma/2) s / (1 + s + (2 Delta/Gamma)^2) with s = I/I_sat and
    Delta = 2*pi*detuning_hz; the far-detuned limit of the full
    Kramers-Heisenberg sum.
    """
    s = np.asarray(intensity, dtype=float) / species.saturation_intensity
    gamma = species.linewidth
    delta = 2 * np.pi * detuning_hz
    return 0.5 * gamma * s / (1 + s + (2 * delta / gamma) ** 2)


def probe_scattering_rate(power=20e-3, waist=6.0e-3, detuning_hz=2.5e9,
                          species: AtomSpecies = RB85) -> float:
    """Peak scattering rate of a Gaussian probe of the given power and 1/e^2 waist."""
    peak = 2 * power / (math.pi * waist**2)
    return float(scattering_rate(peak, detuning_hz, species))


@dataclass
class AtomEnsemble:
    positions: np.ndarray  # (N, 3), m
    velocities: np.ndarray  # (N, 3), m/s
    alive: np.ndarray  # (N,) bool
    weight: float  # atoms represented per sample
    seed: int
    t: float = 0.0
    hazard: np.ndarray | None = field(default=None, repr=False)
    threshold: np.ndarray | None = field(default=None, repr=False)
    counter: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        n = len(self.positions)
        if self.hazard is None:
            self.hazard = np.zeros(n)
        if self.counter is None:
            self.counter = np.zeros(n, dtype=np.uint64)
        if self.threshold is None:
            # first exponential thresholds drawn from the counter stream
            self.threshold = np.array([-math.log(1.0 - float(rng.uniform(sample_key(self.seed, i), 0)))
                                       for i in range(n)])
            self.counter[:] = 1

    @property
    def size(self) -> int:
        return len(self.positions)

    def copy(self) -> "AtomEnsemble":
        return AtomEnsemble(self.positions.copy(), self.velocities.copy(), self.alive.copy(),
                            self.weight, self.seed, self.t, self.hazard.copy(),
                            self.threshold.copy(), self.counter.copy())


def thermal_ensemble(n_samples=10_000, seed=0, cloud_diameter=500e-6, temperature=10e-6,
                     n_atoms=1e6, species: AtomSpecies = RB85) -> AtomEnsemble:
    """Gaussian cloud (1/e^2 diameter ``cloud_diameter``) at temperature ``temperature``."""
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0x5A17])))
    sigma_x = cloud_diameter / 4  # 1/e^2 radius = 2 sigma
    sigma_v = math.sqrt(KB * temperature / species.mass)
    pos = gen.normal(0.0, sigma_x, size=(n_samples, 3))
    vel = gen.normal(0.0, sigma_v, size=(n_samples, 3))
    return AtomEnsemble(pos, vel, np.ones(n_samples, dtype=bool), n_atoms / n_samples, seed)


@dataclass(frozen=True)
class ScatterSchedule:
    """Photon budget. Rates in photons/s; the trap rate follows local intensity."""
    probe_rate: float = 0.0
    pump_photons: float = 0.0  # mean photons per burst
    pump_duration: float = 20e-6
    cycle_period: float = 2e-3
    trap_scale: float = 1.0  # multiplies the trap-beam scattering; 0 disables it

    def __post_init__(self):
        if min(self.probe_rate, self.pump_photons, self.trap_scale) < 0:
            raise ValueError("scattering rates must be non-negative")
        if not 0 < self.pump_duration < self.cycle_period:
            raise ValueError("pump pulse must be shorter than the cycle")

    @property
    def mean_imposed_rate(self) -> float:
        """Probe plus cycle-averaged pump rate (photons/s), trap beams excluded."""
        return self.probe_rate + self.pump_photons / self.cycle_period


def sample_key(seed: int, sample: int) -> int:
    return rng.stream_key(seed, "kinetics", sample)


# --------------------------------------------------------------------------
# numba kernel


@nb.njit(cache=True)
def _hermite(r, dr, nodes_u, nodes_du):
    """Cubic Hermite value and derivative on a uniform grid; zero beyond it."""
    s = r / dr
    i = int(s)
    if i >= nodes_u.shape[0] - 1:
        return 0.0, 0.0
    t = s - i
    u0, u1 = nodes_u[i], nodes_u[i + 1]
    m0, m1 = nodes_du[i] * dr, nodes_du[i + 1] * dr
    t2 = t * t
    t3 = t2 * t
    val = (2 * t3 - 3 * t2 + 1) * u0 + (t3 - 2 * t2 + t) * m0 + (-2 * t3 + 3 * t2) * u1 + (t3 - t2) * m1
    der = ((6 * t2 - 6 * t) * u0 + (3 * t2 - 4 * t + 1) * m0 + (-6 * t2 + 6 * t) * u1
           + (3 * t2 - 2 * t) * m1) / dr
    return val, der


@nb.njit(cache=True)
def _lin(r, dr, table):
    s = r / dr
    i = int(s)
    if i >= table.shape[0] - 1:
        return 0.0
    t = s - i
    return table[i] * (1 - t) + table[i + 1] * t


@nb.njit(cache=True)
def _accel(x, y, z, dr, nu, ndu, inv_m, g, trap_on):
    ax = 0.0
    ay = 0.0
    az = -g
    if trap_on:
        r1 = math.sqrt(y * y + z * z)  # beam along x
        r2 = math.sqrt(x * x + z * z)  # beam along y
        u1, d1 = _hermite(r1, dr, nu, ndu)
        u2, d2 = _hermite(r2, dr, nu, ndu)
        if r1 > 0:
            ay -= d1 * y / r1 * inv_m
            az -= d1 * z / r1 * inv_m
        if r2 > 0:
            ax -= d2 * x / r2 * inv_m
            az -= d2 * z / r2 * inv_m
    return ax, ay, az


@nb.njit(cache=True)
def _energy(x, y, z, vx, vy, vz, dr, nu, ndu, mass, g, trap_on):
    e = 0.5 * mass * (vx * vx + vy * vy + vz * vz) + mass * g * z
    if trap_on:
        u1, d1 = _hermite(math.sqrt(y * y + z * z), dr, nu, ndu)
        u2, d2 = _hermite(math.sqrt(x * x + z * z), dr, nu, ndu)
        e += u1 + u2
    return e


@nb.njit(cache=True)
def _run(pos, vel, alive, keys, counter, hazard, threshold, t0, dt, n_steps, rec_every,
         dr, nu, ndu, rate_tab, mass, g, trap_on, trap_scale, probe_rate, pump_rate,
         pump_dur, cycle, vrec, absorb_emit, box, e_lost, check_every,
         out_alive, out_trap_rate, out_events):
    n = pos.shape[0]
    inv_m = 1.0 / mass
    n_rec = out_alive.shape[0]
    for i in range(n):
        if not alive[i]:
            continue
        x, y, z = pos[i, 0], pos[i, 1], pos[i, 2]
        vx, vy, vz = vel[i, 0], vel[i, 1], vel[i, 2]
        key = keys[i]
        c = counter[i]
        hz = hazard[i]
        th = threshold[i]
        over = 0
        ax, ay, az = _accel(x, y, z, dr, nu, ndu, inv_m, g, trap_on)
        lost_at = n_steps
        for s in range(n_steps):
            t = t0 + s * dt
            x += vx * dt + 0.5 * ax * dt * dt
            y += vy * dt + 0.5 * ay * dt * dt
            z += vz * dt + 0.5 * az * dt * dt
            bx, by, bz = _accel(x, y, z, dr, nu, ndu, inv_m, g, trap_on)
            vx += 0.5 * (ax + bx) * dt
            vy += 0.5 * (ay + by) * dt
            vz += 0.5 * (az + bz) * dt
            ax, ay, az = bx, by, bz
            # scattering hazard accumulated over this step
            r1 = 0.0
            r2 = 0.0
            if trap_on and trap_scale > 0:
                r1 = trap_scale * _lin(math.sqrt(y * y + z * z), dr, rate_tab)
                r2 = trap_scale * _lin(math.sqrt(x * x + z * z), dr, rate_tab)
            tc = t - math.floor(t / cycle) * cycle
            rp = pump_rate if tc < pump_dur else 0.0
            rate = r1 + r2 + probe_rate + rp
            if s // rec_every < n_rec:
                out_trap_rate[s // rec_every] += (r1 + r2) / rec_every
            hz += rate * dt
            while hz >= th:
                hz -= th
                u = rng.uniform_nb(key, c)
                c += np.uint64(1)
                th = -math.log(1.0 - u)
                out_events[0] += 1
                # emission: isotropic
                u1 = rng.uniform_nb(key, c)
                u2 = rng.uniform_nb(key, c + np.uint64(1))
                u3 = rng.uniform_nb(key, c + np.uint64(2))
                u4 = rng.uniform_nb(key, c + np.uint64(3))
                c += np.uint64(4)
                cth = 2.0 * u1 - 1.0
                sth = math.sqrt(max(0.0, 1.0 - cth * cth))
                ph = 2.0 * math.pi * u2
                vx += vrec * sth * math.cos(ph)
                vy += vrec * sth * math.sin(ph)
                vz += vrec * cth
                if absorb_emit:
                    sign = 1.0 if u3 < 0.5 else -1.0
                    # absorbing beam: y-axis trap beam with probability r2/rate
                    if u4 * rate < r2:
                        vy += sign * vrec
                    else:
                        vx += sign * vrec
            # losses
            if ((abs(x) > box and x * vx > 0) or (abs(y) > box and y * vy > 0)
                    or (abs(z) > box and z * vz > 0)):
                lost_at = s
                break
            if trap_on and e_lost > 0 and (s + 1) % check_every == 0:
                e = _energy(x, y, z, vx, vy, vz, dr, nu, ndu, mass, g, trap_on)
                if e > e_lost:
                    over += 1
                    if over >= 3:
                        lost_at = s
                        break
                else:
                    over = 0
        # alive bookkeeping: counted in every record slot that ends before loss
        last = lost_at // rec_every if lost_at < n_steps else n_rec
        for k in range(min(last, n_rec)):
            out_alive[k] += 1
        if lost_at < n_steps:
            alive[i] = False
        pos[i, 0], pos[i, 1], pos[i, 2] = x, y, z
        vel[i, 0], vel[i, 1], vel[i, 2] = vx, vy, vz
        counter[i] = c
        hazard[i] = hz
        threshold[i] = th


@dataclass(frozen=True)
class _Tables:
    dr: float
    u: np.ndarray
    du: np.ndarray
    rate: np.ndarray
    u_max: float
    ring_radius: float


def _tables(potential) -> _Tables:
    """Spline tables of a single beam's potential and scattering rate vs radius."""
    r = np.asarray(potential.radius)
    u = np.asarray(potential.potential_profile, dtype=float)
    spline = CubicSpline(r, u, bc_type=((1, 0.0), "natural"))
    du = spline(r, 1)
    u_nodes = spline(r)
    # the last node must be zero so the potential ends continuously
    taper = np.ones_like(r)
    taper[-4:] = np.linspace(1, 0, 4)
    rate = scattering_rate(potential.intensity, potential.detuning, potential.species)
    d = potential.ring_diameter
    ring_r = d / 2 if d else r[np.argmax(u)]
    return _Tables(float(r[1] - r[0]), u_nodes * taper, du * taper, np.asarray(rate) * taper,
                   float(u.max()), float(ring_r))


_EMPTY = np.zeros(2)


def step(ensemble: AtomEnsemble, potential, schedule: ScatterSchedule, dt=1e-6, n_steps=1,
         kick_model="absorb_emit", gravity=None, e_lost_factor=1.2, record_every=None,
         check_every=10, box_factor=3.0):
    """Advance ``ensemble`` by ``n_steps`` steps of ``dt``; returns (ensemble, diagnostics).

    ``potential=None`` means free fall. Samples leaving the box with outward
    velocity, or holding more than ``e_lost_factor * U_max`` for three
    consecutive checks, are marked lost.
    """
    if dt > 1e-6 + 1e-18:
        raise ValueError("dt must be <= 1 us to resolve pump bursts and wall bounces")
    if kick_model not in ("absorb_emit", "lumped"):
        raise ValueError(f"unknown kick model {kick_model!r}")
    ens = ensemble.copy()
    sp = RB85 if potential is None else potential.species
    if potential is None:
        tab = _Tables(1.0, _EMPTY, _EMPTY, _EMPTY, 0.0, 0.0)
        trap_on = False
        box = 1.0
        g = G_EARTH if gravity is None or gravity else 0.0
    else:
        tab = _tables(potential)
        trap_on = True
        box = box_factor * tab.ring_radius
        use_g = potential.gravity if gravity is None else gravity
        g = G_EARTH if use_g else 0.0
    rec_every = n_steps if record_every is None else max(1, int(round(record_every / dt)))
    n_rec = max(1, n_steps // rec_every)
    out_alive = np.zeros(n_rec, dtype=np.int64)
    out_trap = np.zeros(n_rec)
    out_events = np.zeros(1, dtype=np.int64)
    keys = np.array([sample_key(ens.seed, i) for i in range(ens.size)], dtype=np.uint64)
    pump_rate = schedule.pump_photons / schedule.pump_duration
    e_lost = e_lost_factor * tab.u_max if trap_on else 0.0
    _run(ens.positions, ens.velocities, ens.alive, keys, ens.counter, ens.hazard, ens.threshold,
         ens.t, dt, n_steps, rec_every, tab.dr, tab.u, tab.du, tab.rate, sp.mass, g, trap_on,
         schedule.trap_scale, schedule.probe_rate, pump_rate, schedule.pump_duration,
         schedule.cycle_period, recoil_velocity(sp), kick_model == "absorb_emit", box, e_lost,
         check_every, out_alive, out_trap, out_events)
    ens.t = ensemble.t + n_steps * dt
    diag = {"alive": out_alive, "trap_rate_sum": out_trap, "events": int(out_events[0]),
            "record_dt": rec_every * dt}
    return ens, diag


def total_energy(ensemble: AtomEnsemble, potential, gravity=None) -> np.ndarray:
    """Per-sample kinetic + optical + gravitational energy (J)."""
    sp = potential.species
    p, v = ensemble.positions, ensemble.velocities
    g = G_EARTH if (potential.gravity if gravity is None else gravity) else 0.0
    tab = _tables(potential)
    out = np.empty(ensemble.size)
    for i in range(ensemble.size):
        out[i] = _energy(p[i, 0], p[i, 1], p[i, 2], v[i, 0], v[i, 1], v[i, 2], tab.dr, tab.u,
                         tab.du, sp.mass, g, True)
    return out


def heating_per_photon(kick_model="absorb_emit", species: AtomSpecies = RB85):
    """Mean kinetic energy gain per scattered photon: (total, along absorption axis)."""
    er = recoil_energy(species)
    if kick_model == "absorb_emit":
        return 2 * er, (1 + 1 / 3) * er
    return er, er / 3


@dataclass
class SurvivalResult:
    t: np.ndarray  # s, end of each record interval
    fraction: np.ndarray
    stderr: np.ndarray
    lifetime: float  # s, from the exponential fit
    lifetime_err: float
    amplitude: float
    mean_trap_rate: float  # photons/s per trapped atom
    events: int
    fit_start: float

    @property
    def mean_trap_rate_hz(self) -> float:
        """Trap-beam scattering rate expressed as gamma/2pi (Hz)."""
        return self.mean_trap_rate / (2 * np.pi)

    def one_over_e_time(self) -> float:
        """First time at which the surviving fraction drops below 1/e of its start."""
        below = np.nonzero(self.fraction < math.exp(-1))[0]
        if len(below) == 0:
            return math.inf
        i = below[0]
        if i == 0:
            return float(self.t[0])
        t0, t1 = self.t[i - 1], self.t[i]
        f0, f1 = self.fraction[i - 1], self.fraction[i]
        return float(t0 + (math.exp(-1) - f0) * (t1 - t0) / (f1 - f0))


def fit_lifetime(t, fraction, t_start=0.0):
    """Least-squares fit of A exp(-t/tau) on t >= t_start. Returns (tau, dtau, A)."""
    t = np.asarray(t)
    f = np.asarray(fraction)
    sel = (t >= t_start) & (f > 0)
    if sel.sum() < 3 or np.ptp(f[sel]) == 0:
        return math.inf, math.inf, float(f[sel][0]) if sel.any() else 0.0
    ts, fs = t[sel], f[sel]
    slope, icept = np.polyfit(ts, np.log(fs), 1)
    tau0 = -1 / slope if slope < 0 else 10 * ts[-1]
    try:
        popt, pcov = curve_fit(lambda tt, a, tau: a * np.exp(-tt / tau), ts, fs,
                               p0=(math.exp(icept), tau0), maxfev=10_000)
    except RuntimeError:
        return float(tau0), math.inf, float(math.exp(icept))
    return float(popt[1]), float(math.sqrt(abs(pcov[1, 1]))), float(popt[0])


def survival_curve(ensemble: AtomEnsemble, potential, schedule: ScatterSchedule, t_total,
                   dt=1e-6, record_every=1e-3, fit_start=20e-3, **kwargs) -> SurvivalResult:
    """Fraction of samples remaining versus time, with an exponential lifetime fit.

    The fit starts at ``fit_start`` so that samples loaded outside the walls,
    which leave within a few ms, do not bias the lifetime.
    """
    n_steps = int(round(t_total / dt))
    n0 = int(ensemble.alive.sum())
    _, diag = step(ensemble, potential, schedule, dt, n_steps, record_every=record_every,
                   **kwargs)
    alive = diag["alive"].astype(float)
    t = ensemble.t + diag["record_dt"] * (np.arange(len(alive)) + 1)
    frac = alive / n0
    stderr = np.sqrt(np.clip(frac * (1 - frac), 0, None) / n0)
    tau, dtau, amp = fit_lifetime(t, frac, fit_start)
    # trap_rate_sum holds the per-interval average of sum over alive samples
    with np.errstate(invalid="ignore", divide="ignore"):
        per_atom = np.where(alive > 0, diag["trap_rate_sum"] / np.maximum(alive, 1), 0.0)
    mean_rate = float(np.average(per_atom, weights=alive)) if alive.sum() else 0.0
    return SurvivalResult(t, frac, stderr, tau, dtau, amp, mean_rate, diag["events"], fit_start)


def faraday_weight(ensemble: AtomEnsemble, aperture_radius=0.25e-3, center=(0.0, 0.0)) -> float:
    """Fraction of samples alive and inside the detection aperture.

    The probe runs along x; the aperture is a disc of ``aperture_radius`` in
    the (y, z) plane, imaged from the trap centre.
    """
    p = ensemble.positions
    rho = np.hypot(p[:, 1] - center[0], p[:, 2] - center[1])
    return float(np.count_nonzero(ensemble.alive & (rho <= aperture_radius)) / ensemble.size)


def weight_curve(ensemble: AtomEnsemble, potential, schedule: ScatterSchedule, t_total,
                 interval=1e-3, dt=1e-6, aperture_radius=0.25e-3, **kwargs):
    """faraday_weight sampled every ``interval``; returns (t, weight)."""
    ens = ensemble
    steps = int(round(interval / dt))
    ts, ws = [0.0], [faraday_weight(ens, aperture_radius)]
    for _ in range(int(round(t_total / interval))):
        ens, _ = step(ens, potential, schedule, dt, steps, **kwargs)
        ts.append(ens.t)
        ws.append(faraday_weight(ens, aperture_radius))
    return np.array(ts), np.array(ws)


def boil_time(trap_depth, scattering_rate_total, species: AtomSpecies = RB85) -> float:
    """Back-of-envelope boil time U / (gamma_tot E_r), in seconds."""
    if scattering_rate_total <= 0:
        return math.inf
    return trap_depth / (scattering_rate_total * recoil_energy(species))
