"""Hollow-beam synthesis and the crossed dark-trap potential.

A collimated Gaussian beam picks up the SLM phase ``n*phi`` (vortex of charge
``n``) plus a thin-lens term of focal length ``f`` and is propagated to an
operating plane a few centimetres before the focus. Two copies of the
resulting ring, with perpendicular axes, form a box-like repulsive trap.

Propagation uses the angular-spectrum method. The lens is handled with the
Fresnel scaling identity: a field with curvature ``1/f`` propagated a distance
``z`` equals the flat field propagated ``z/M`` and demagnified by
``M = 1 - z/f``. That keeps the ~0.5 mm ring well sampled on the same grid
that holds the 1.7 mm input waist.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import map_coordinates

from . import formats
from .atomkinetics import scattering_rate
from .physconst import C, G_EARTH, HBAR, RB85, AtomSpecies, DomainError, recoil_energy


class AliasingError(RuntimeError):
    """The sampled field cannot be propagated without wrap-around artefacts."""


def trap_wavelength(detuning_hz, species: AtomSpecies = RB85) -> float:
    """Wavelength of light ``detuning_hz`` above the D2 resonance."""
    return C / (C / species.wavelength_d2 + detuning_hz)


@dataclass(frozen=True)
class BeamSpec:
    charge: int = 8
    waist: float = 1.71e-3
    focal_length: float = 0.200
    power: float = 0.150
    detuning: float = 25e9  # Hz above F=3 -> F'=4
    z_off: float | None = None  # operating plane relative to the focus, m
    wavelength: float | None = None  # derived from detuning when None
    grid_n: int = 1024
    grid_span_waists: float = 10.0
    target_ring_diameter: float = 0.48e-3
    scan_range: tuple = (-0.060, -0.005)
    scan_step: float = 1e-3
    species: AtomSpecies = field(default=RB85, repr=False)

    def __post_init__(self):
        if self.charge < 0:
            raise DomainError("charge must be >= 0")
        for name in ("waist", "focal_length", "power"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        if not self.detuning > 0:
            raise DomainError("only blue detuning (repulsive traps) is modelled")
        if self.grid_span_waists < 6:
            raise DomainError("grid must span at least 6 input waists")

    @property
    def lam(self) -> float:
        if self.wavelength is not None:
            return self.wavelength
        return trap_wavelength(self.detuning, self.species)

    @property
    def pitch(self) -> float:
        return self.grid_span_waists * self.waist / self.grid_n


@dataclass(frozen=True)
class FieldGrid:
    """Complex amplitude (sqrt(W)/m) on a square grid centred on the axis."""
    field: np.ndarray
    pitch: float
    z: float = 0.0
    wavelength: float = RB85.wavelength_d2

    @property
    def n(self) -> int:
        return self.field.shape[0]

    @property
    def extent(self) -> float:
        return self.n * self.pitch

    @property
    def axis(self) -> np.ndarray:
        return (np.arange(self.n) - self.n // 2) * self.pitch

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.field) ** 2

    def power(self) -> float:
        return float(np.sum(np.abs(self.field) ** 2) * self.pitch**2)


def slm_phase(rho, phi, spec: BeamSpec, wrap=True):
    """Vortex plus thin-lens phase applied by the SLM, in radians.

    Uses the converging-lens form ``n*phi - pi*rho**2/(lambda*f)``; the lens
    term vanishes for ``f = inf``.
    """
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise DomainError("phase is singular on axis (rho must be > 0)")
    lens = 0.0 if math.isinf(spec.focal_length) else np.pi * rho**2 / (spec.lam * spec.focal_length)
    psi = spec.charge * np.asarray(phi, dtype=float) - lens
    return np.mod(psi, 2 * np.pi) if wrap else psi


def slm_mask(spec: BeamSpec, pixels=512, pixel_pitch=15e-6) -> np.ndarray:
    """8-bit phase mask (0..2pi -> 0..255). The on-axis pixel gets phase 0."""
    coords = (np.arange(pixels) - pixels // 2) * pixel_pitch
    xx, yy = np.meshgrid(coords, coords)
    rho = np.hypot(xx, yy)
    phase = np.zeros_like(rho)
    off = rho > 0
    phase[off] = slm_phase(rho[off], np.arctan2(yy[off], xx[off]), spec)
    return (np.floor(phase / (2 * np.pi) * 256) % 256).astype(np.uint8)


def mask_checksum(mask: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(mask).tobytes()).hexdigest()


def export_mask(path, spec: BeamSpec, **kwargs):
    return formats.write_pgm(path, slm_mask(spec, **kwargs),
                             comment=f"SLM phase mask, charge {spec.charge}, 0..2pi -> 0..255")


def input_field(spec: BeamSpec) -> FieldGrid:
    """Collimated Gaussian carrying the vortex phase, normalised to ``spec.power``.

    The lens term is not applied here; see :func:`synthesize_beam`.
    """
    n, dx = spec.grid_n, spec.pitch
    x = (np.arange(n) - n // 2) * dx
    xx, yy = np.meshgrid(x, x)
    rho2 = xx**2 + yy**2
    amp = math.sqrt(2 * spec.power / (math.pi * spec.waist**2)) * np.exp(-rho2 / spec.waist**2)
    e = amp * np.exp(1j * spec.charge * np.arctan2(yy, xx))
    return FieldGrid(e.astype(np.complex128), dx, 0.0, spec.lam)


def _check_sampling(grid: FieldGrid, tol=1e-2):
    spec = np.abs(np.fft.fft2(grid.field)) ** 2
    total = spec.sum()
    if total == 0:
        return
    f = np.fft.fftfreq(grid.n)  # cycles per pixel
    ff = np.maximum.outer(np.abs(f), np.abs(f))
    if spec[ff > 0.45].sum() / total > tol:
        raise AliasingError("field has significant content at the grid Nyquist "
                            "frequency (phase step >= pi per pixel); refine the grid")
    edge = max(1, grid.n // 32)
    inten = grid.intensity
    border = inten.sum() - inten[edge:-edge, edge:-edge].sum()
    if border / inten.sum() > tol:
        raise AliasingError("field reaches the grid boundary; enlarge the grid extent")


def transfer_function(n, pitch, wavelength, z, band_limit=False):
    k = 2 * np.pi / wavelength
    f = np.fft.fftfreq(n, pitch)
    fx, fy = np.meshgrid(f, f)
    f2 = fx**2 + fy**2
    kz2 = k**2 - (2 * np.pi) ** 2 * f2
    prop = kz2 >= 0
    kz = np.sqrt(np.abs(kz2))
    h = np.where(prop, np.exp(1j * z * kz), np.exp(-abs(z) * kz))
    if band_limit and z != 0:
        # drop components whose walk-off over z exceeds half the grid; they
        # would re-enter through the periodic boundary
        extent = n * pitch
        f_lim = 1.0 / (wavelength * math.sqrt((2 * z / extent) ** 2 + 1))
        h = np.where(np.sqrt(f2) <= f_lim, h, 0.0)
    return h


def propagate(grid: FieldGrid, z: float, band_limit=False, check=True) -> FieldGrid:
    """Angular-spectrum propagation over a distance ``z`` (may be negative).

    Without ``band_limit`` the propagator is unitary for propagating waves, so
    power is conserved to rounding. ``band_limit`` removes components that
    would wrap around the periodic grid; it is lossy by construction.
    """
    if check:
        _check_sampling(grid)
    h = transfer_function(grid.n, grid.pitch, grid.wavelength, z, band_limit)
    out = np.fft.ifft2(np.fft.fft2(grid.field) * h)
    return FieldGrid(out, grid.pitch, grid.z + z, grid.wavelength)


def synthesize_beam(spec: BeamSpec, z_off: float | None = None) -> FieldGrid:
    """Field at ``z_off`` from the focal plane (negative: before the focus)."""
    z_off = spec.z_off if z_off is None else z_off
    if z_off is None:
        z_off = find_operating_plane(spec)
    f = spec.focal_length
    z = f + z_off
    mag = 1.0 - z / f
    if mag == 0:
        raise DomainError("the focal plane itself is not supported by the scaled propagator")
    flat = propagate(input_field(spec), z / mag, band_limit=True)
    k = 2 * np.pi / spec.lam
    x = flat.axis * abs(mag)
    xx, yy = np.meshgrid(x, x)
    curvature = np.exp(1j * k * (xx**2 + yy**2) / (2 * (z - f)))
    e = flat.field
    if mag < 0:
        e = e[::-1, ::-1]  # image inversion past the focus
        if spec.grid_n % 2 == 0:
            e = np.roll(e, (1, 1), axis=(0, 1))
    return FieldGrid(e * curvature / abs(mag), flat.pitch * abs(mag), z_off, spec.lam)


def _parabolic_peak(values, i):
    if 0 < i < len(values) - 1:
        a, b, c = values[i - 1], values[i], values[i + 1]
        denom = a - 2 * b + c
        if denom != 0:
            return i + 0.5 * (a - c) / denom
    return float(i)


def ring_diameter(intensity: np.ndarray, pitch: float) -> float | None:
    """Distance between opposing maxima along the x and y lines through the centre.

    Returns None when the beam has no dark core (maximum at the centre).
    """
    n = intensity.shape[0]
    c = n // 2
    peak = intensity.max()
    if intensity[c, c] >= 0.5 * peak:
        return None
    diameters = []
    for line in (intensity[c, :], intensity[:, c]):
        right = line[c:]
        left = line[c::-1]
        ir = _parabolic_peak(right, int(np.argmax(right)))
        il = _parabolic_peak(left, int(np.argmax(left)))
        diameters.append((ir + il) * pitch)
    return float(np.mean(diameters))


def radial_profile(intensity: np.ndarray, pitch: float, n_bins=None):
    """Azimuthally averaged intensity on uniform radius bins starting at 0."""
    n = intensity.shape[0]
    x = (np.arange(n) - n // 2) * pitch
    xx, yy = np.meshgrid(x, x)
    r = np.hypot(xx, yy).ravel()
    n_bins = n_bins or n // 2
    idx = np.minimum(np.rint(r / pitch).astype(int), n_bins)
    sums = np.bincount(idx, weights=intensity.ravel(), minlength=n_bins + 1)[:n_bins]
    counts = np.bincount(idx, minlength=n_bins + 1)[:n_bins]
    prof = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
    return np.arange(n_bins) * pitch, prof


def azimuthal_ripple(intensity: np.ndarray, pitch: float, radius: float, samples=720) -> float:
    """Relative standard deviation of the intensity around a circle."""
    n = intensity.shape[0]
    th = np.linspace(0, 2 * np.pi, samples, endpoint=False)
    rows = n // 2 + radius * np.sin(th) / pitch
    cols = n // 2 + radius * np.cos(th) / pitch
    vals = map_coordinates(intensity, [rows, cols], order=3)
    return float(vals.std() / vals.mean())


def scan_operating_plane(spec: BeamSpec, offsets=None):
    """Ring diameter and peak intensity for each trial offset from the focus."""
    if offsets is None:
        lo, hi = spec.scan_range
        offsets = np.arange(lo, hi + 0.5 * spec.scan_step, spec.scan_step)
    src = input_field(spec)
    _check_sampling(src)
    spectrum = np.fft.fft2(src.field)
    f = spec.focal_length
    rows = []
    for off in offsets:
        z = f + off
        mag = 1.0 - z / f
        h = transfer_function(src.n, src.pitch, src.wavelength, z / mag, band_limit=True)
        inten = np.abs(np.fft.ifft2(spectrum * h)) ** 2 / mag**2
        d = ring_diameter(inten, src.pitch * abs(mag))
        rows.append((float(off), d, float(inten.max())))
    return rows


def find_operating_plane(spec: BeamSpec, mode="diameter") -> float:
    """Pick ``z_off`` on the scan grid.

    ``mode="diameter"`` picks the plane whose ring diameter is closest to
    ``spec.target_ring_diameter``; ``mode="intensity"`` the plane of maximal
    peak intensity.
    """
    rows = scan_operating_plane(spec)
    if mode == "intensity":
        return max(rows, key=lambda r: r[2])[0]
    with_ring = [r for r in rows if r[1] is not None]
    if not with_ring:
        raise DomainError("beam has no dark core; a ring diameter cannot be targeted")
    return min(with_ring, key=lambda r: abs(r[1] - spec.target_ring_diameter))[0]


def dipole_potential(intensity, detuning_hz, species: AtomSpecies = RB85):
    """Far-detuned two-level light shift in joules (positive for blue detuning).

    U = hbar Gamma^2 I / (8 Delta I_sat), Delta = 2*pi*detuning_hz.
    """
    if not detuning_hz > 0:
        raise DomainError("detuning must be positive (blue)")
    gamma = species.linewidth
    return HBAR * gamma**2 * np.asarray(intensity) / (8 * 2 * np.pi * detuning_hz
                                                       * species.saturation_intensity)


@dataclass(frozen=True)
class TrapPotential:
    """Two identical hollow beams, one along x and one along y.

    Each beam is taken as translation invariant along its own axis over the
    ~1 mm trap region, so the potential is
    ``U(x, y, z) = V(sqrt(y^2+z^2)) + V(sqrt(x^2+z^2)) + m g z``
    with ``V`` the radial profile of a single beam.
    """
    radius: np.ndarray  # uniform grid starting at 0, m
    intensity: np.ndarray  # W/m^2
    detuning: float
    ring_diameter: float | None
    gravity: bool = True
    species: AtomSpecies = field(default=RB85, repr=False)
    slice_intensity: np.ndarray | None = field(default=None, repr=False)
    slice_pitch: float = 0.0

    @property
    def peak_intensity(self) -> float:
        return float(self.intensity.max())

    @property
    def u_max(self) -> float:
        return float(dipole_potential(self.peak_intensity, self.detuning, self.species))

    @property
    def potential_profile(self) -> np.ndarray:
        return dipole_potential(self.intensity, self.detuning, self.species)

    @property
    def r_max(self) -> float:
        return float(self.radius[-1])

    def beam_intensity(self, r):
        return np.interp(r, self.radius, self.intensity, right=0.0)

    def beam_potential(self, r):
        return np.interp(r, self.radius, self.potential_profile, right=0.0)

    def potential(self, x, y, z, include_gravity=None):
        x, y, z = (np.asarray(v, dtype=float) for v in (x, y, z))
        u = self.beam_potential(np.hypot(y, z)) + self.beam_potential(np.hypot(x, z))
        g = self.gravity if include_gravity is None else include_gravity
        if g:
            u = u + self.species.mass * G_EARTH * z
        return u

    def local_intensity(self, x, y, z):
        """Summed intensity of both beams at a point (for scattering rates)."""
        return self.beam_intensity(np.hypot(y, z)) + self.beam_intensity(np.hypot(x, z))


def crossed_trap(spec: BeamSpec, gravity=True, beam: FieldGrid | None = None) -> TrapPotential:
    beam = synthesize_beam(spec) if beam is None else beam
    inten = beam.intensity
    r, prof = radial_profile(inten, beam.pitch)
    prof = np.clip(prof, 0.0, None)
    return TrapPotential(r, prof, spec.detuning, ring_diameter(inten, beam.pitch),
                         gravity, spec.species, inten, beam.pitch)


@dataclass(frozen=True)
class TrapReport:
    u_max: float  # J
    u_max_hbar_gamma: float
    u_max_recoil: float
    ring_diameter: float | None  # m
    peak_intensity: float  # W/m^2
    peak_scattering_rate: float  # photons/s
    gravity_span_hbar_gamma: float | None  # m g d_ring / (hbar Gamma)

    def as_dict(self) -> dict:
        d = {
            "u_max_j": self.u_max,
            "u_max_hbar_gamma": self.u_max_hbar_gamma,
            "u_max_recoil": self.u_max_recoil,
            "peak_intensity_w_per_m2": self.peak_intensity,
            "peak_intensity_mw_per_cm2": self.peak_intensity / 10.0,
            "peak_scattering_rate_per_s": self.peak_scattering_rate,
            "peak_scattering_rate_over_2pi_hz": self.peak_scattering_rate / (2 * np.pi),
        }
        if self.ring_diameter is not None:
            d["ring_diameter_m"] = self.ring_diameter
            d["gravity_span_hbar_gamma"] = self.gravity_span_hbar_gamma
        return d


def trap_report(potential: TrapPotential) -> TrapReport:
    sp = potential.species
    u = potential.u_max
    hg = HBAR * sp.linewidth
    d = potential.ring_diameter
    return TrapReport(
        u_max=u,
        u_max_hbar_gamma=u / hg,
        u_max_recoil=u / recoil_energy(sp),
        ring_diameter=d,
        peak_intensity=potential.peak_intensity,
        peak_scattering_rate=float(scattering_rate(potential.peak_intensity,
                                                   potential.detuning, sp)),
        gravity_span_hbar_gamma=None if d is None else sp.mass * G_EARTH * d / hg,
    )


def export_slices(prefix, potential: TrapPotential):
    """Write the single-beam intensity slice and the z=0 potential slice (P5 + CSV)."""
    paths = []
    if potential.slice_intensity is not None:
        inten = potential.slice_intensity
        n = inten.shape[0]
        ax = (np.arange(n) - n // 2) * potential.slice_pitch
        paths.append(formats.write_pgm(f"{prefix}_intensity.pgm", formats.to_graymap(inten),
                                       comment="beam intensity, W/m^2, linear"))
        paths.append(formats.write_xyz_csv(f"{prefix}_intensity.csv", ax, ax, inten,
                                           "intensity_w_per_m2", "W/m^2"))
    half = 1.5 * (potential.ring_diameter or 2 * potential.r_max / 3)
    ax = np.linspace(-half, half, 201)
    xx, yy = np.meshgrid(ax, ax)
    u = potential.potential(xx, yy, np.zeros_like(xx), include_gravity=False)
    paths.append(formats.write_pgm(f"{prefix}_potential_z0.pgm", formats.to_graymap(u),
                                   comment="trap potential at z=0, J, linear"))
    paths.append(formats.write_xyz_csv(f"{prefix}_potential_z0.csv", ax, ax, u,
                                       "potential_j", "J"))
    return paths
