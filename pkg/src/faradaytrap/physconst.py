"""Physical constants, unit conventions and field <-> frequency conversions.

Every numeric physical constant used by the package lives here. Public
interfaces work in linear frequency (Hz); angular quantities appear only
inside formulas and are marked with a leading ``2*pi``.

Magnetic fields are carried in Gauss throughout, because that is the unit the
gyromagnetic factor is quoted in. Everything else is SI.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

# CODATA 2018 exact / recommended values
C = 299792458.0
H = 6.62607015e-34
HBAR = H / (2 * math.pi)
KB = 1.380649e-23
AMU = 1.66053906660e-27
G_EARTH = 9.80665
GAUSS = 1e-4  # tesla per gauss


class DomainError(ValueError):
    """An argument lies outside the domain of a physical formula."""


@dataclass(frozen=True)
class AtomSpecies:
    name: str
    mass: float  # kg
    wavelength_d2: float  # m
    linewidth: float  # Gamma, rad/s
    saturation_intensity: float  # W/m^2
    gyromagnetic_factor: float  # Hz/G, linear convention
    hyperfine_f: int

    def __post_init__(self):
        for field in ("mass", "wavelength_d2", "linewidth", "saturation_intensity",
                      "gyromagnetic_factor"):
            if not getattr(self, field) > 0:
                raise DomainError(f"{field} must be strictly positive")
        if self.hyperfine_f < 0:
            raise DomainError("hyperfine_f must be non-negative")

    @property
    def k(self) -> float:
        return 2 * math.pi / self.wavelength_d2


# 85Rb D2 line. Mass, wavelength and linewidth are standard reference values
# (D. Steck, "Rubidium 85 D Line Data"); the gyromagnetic factor and I_sat are
# the values used by the experiment this package models.
RB85 = AtomSpecies(
    name="85Rb",
    mass=84.911789738 * AMU,
    wavelength_d2=780.241368271e-9,
    linewidth=2 * math.pi * 6.066e6,
    saturation_intensity=1.6e-3 / 1e-4,  # 1.6 mW/cm^2
    gyromagnetic_factor=466741.5,
    hyperfine_f=3,
)

_CONSTANT_ROWS = [
    ("c", C, "m/s", "CODATA 2018 (exact)"),
    ("h", H, "J s", "CODATA 2018 (exact)"),
    ("hbar", HBAR, "J s", "CODATA 2018 (exact)"),
    ("k_B", KB, "J/K", "CODATA 2018 (exact)"),
    ("amu", AMU, "kg", "CODATA 2018"),
    ("g_earth", G_EARTH, "m/s^2", "standard gravity"),
    ("rb85.mass", RB85.mass, "kg", "Steck, Rb85 D line data"),
    ("rb85.wavelength_d2", RB85.wavelength_d2, "m", "Steck, Rb85 D line data"),
    ("rb85.linewidth", RB85.linewidth, "rad/s", "2*pi*6.066 MHz, standard value (assumed)"),
    ("rb85.saturation_intensity", RB85.saturation_intensity, "W/m^2", "experiment: 1.6 mW/cm^2"),
    ("rb85.gyromagnetic_factor", RB85.gyromagnetic_factor, "Hz/G", "experiment: 466.7415 kHz/G"),
    ("rb85.hyperfine_f", float(RB85.hyperfine_f), "1", "F=3 ground state"),
]


def constants_table() -> list[tuple[str, float, str, str]]:
    """Rows of (key, value, unit, source) for every exported constant."""
    return list(_CONSTANT_ROWS)


def constants_csv() -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["key", "value", "unit", "source"])
    for key, value, unit, source in _CONSTANT_ROWS:
        writer.writerow([key, repr(value), unit, source])
    return buf.getvalue()


# Factor that converts a value in the given unit into the internal unit of its
# dimension (SI, except magnetic field which is Gauss).
_UNITS = {
    "G": ("field", 1.0),
    "mG": ("field", 1e-3),
    "uG": ("field", 1e-6),
    "µG": ("field", 1e-6),
    "T": ("field", 1e4),
    "nT": ("field", 1e-5),
    "pT": ("field", 1e-8),
    "W/m^2": ("intensity", 1.0),
    "mW/cm^2": ("intensity", 10.0),
    "m": ("length", 1.0),
    "mm": ("length", 1e-3),
    "um": ("length", 1e-6),
    "nm": ("length", 1e-9),
    "s": ("time", 1.0),
    "ms": ("time", 1e-3),
    "us": ("time", 1e-6),
    "Hz": ("frequency", 1.0),
    "kHz": ("frequency", 1e3),
    "MHz": ("frequency", 1e6),
    "GHz": ("frequency", 1e9),
    "W": ("power", 1.0),
    "mW": ("power", 1e-3),
    "K": ("temperature", 1.0),
    "uK": ("temperature", 1e-6),
}


def to_internal(value, unit: str):
    """Convert ``value`` expressed in ``unit`` to the internal unit."""
    try:
        return value * _UNITS[unit][1]
    except KeyError:
        raise DomainError(f"unsupported unit {unit!r}") from None


def from_internal(value, unit: str):
    try:
        return value / _UNITS[unit][1]
    except KeyError:
        raise DomainError(f"unsupported unit {unit!r}") from None


def unit_dimension(unit: str) -> str:
    return _UNITS[unit][0]


def larmor_frequency(field_gauss, species: AtomSpecies = RB85):
    """Larmor frequency in Hz for a field magnitude in Gauss.

    The sign of ``field_gauss`` only sets the precession sense, so the
    magnitude is returned.
    """
    b = np.asarray(field_gauss, dtype=float)
    if not np.all(np.isfinite(b)):
        raise DomainError("field must be finite")
    nu = np.abs(b) * species.gyromagnetic_factor
    return float(nu) if nu.ndim == 0 else nu


def field_from_frequency(nu_hz, species: AtomSpecies = RB85):
    nu = np.asarray(nu_hz, dtype=float)
    if not np.all(np.isfinite(nu)) or np.any(nu < 0):
        raise DomainError("Larmor frequency must be finite and non-negative")
    b = nu / species.gyromagnetic_factor
    return float(b) if b.ndim == 0 else b


def recoil_energy(species: AtomSpecies = RB85) -> float:
    """Single-photon recoil energy hbar^2 k^2 / 2m in joules."""
    return HBAR**2 * species.k**2 / (2 * species.mass)


def recoil_velocity(species: AtomSpecies = RB85) -> float:
    return HBAR * species.k / species.mass


def shot_noise_limit(n_atoms, coherence_time, measurement_time,
                     species: AtomSpecies = RB85) -> float:
    """Atom shot-noise limited field resolution in Gauss.

    delta_B = (1/g) / sqrt(N tau T_m) with g in the linear Hz/G convention.
    This form reproduces ~2 uG for N=1e6, tau=0.7 ms, T_m=2 ms; inserting an
    extra 2*pi (angular convention) would not.
    """
    if not (n_atoms >= 1 and coherence_time > 0 and measurement_time > 0):
        raise DomainError("need N >= 1, tau > 0 and T_m > 0")
    return 1.0 / (species.gyromagnetic_factor
                  * math.sqrt(n_atoms * coherence_time * measurement_time))
