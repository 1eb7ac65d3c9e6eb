import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from faradaytrap import physconst as pc


def test_rb85_fixed_values():
    assert pc.RB85.gyromagnetic_factor == 466741.5
    assert pc.RB85.saturation_intensity == pytest.approx(16.0)  # 1.6 mW/cm^2
    assert pc.RB85.hyperfine_f == 3


@pytest.mark.parametrize("field", ["mass", "linewidth", "saturation_intensity"])
def test_species_rejects_nonpositive(field):
    kw = dict(name="x", mass=1.0, wavelength_d2=1.0, linewidth=1.0, saturation_intensity=1.0,
              gyromagnetic_factor=1.0, hyperfine_f=1)
    kw[field] = 0.0
    with pytest.raises(pc.DomainError):
        pc.AtomSpecies(**kw)


def test_larmor_examples():
    assert pc.larmor_frequency(0.0) == 0.0
    assert pc.larmor_frequency(0.100) == pytest.approx(46674.15, rel=1e-12)
    assert pc.larmor_frequency(-0.100) == pytest.approx(46674.15, rel=1e-12)
    # 230 uG -> 107.35 Hz, which the source rounds to "110 Hz"
    assert pc.larmor_frequency(230e-6) == pytest.approx(107.35, abs=0.01)
    with pytest.raises(pc.DomainError):
        pc.larmor_frequency(math.inf)


def test_field_from_frequency_examples():
    assert pc.field_from_frequency(0.0) == 0.0
    assert pc.field_from_frequency(45.0) == pytest.approx(96.41e-6, rel=1e-3)
    assert pc.field_from_frequency(466741.5) == 1.0
    with pytest.raises(pc.DomainError):
        pc.field_from_frequency(-1.0)


@given(st.floats(1e-6, 10.0))
def test_conversions_are_inverse(b):
    assert pc.field_from_frequency(pc.larmor_frequency(b)) == pytest.approx(b, rel=1e-12)


def test_recoil_energy():
    er = pc.recoil_energy()
    # oracle: h k^2 / (4 pi m) in Hz
    k = 2 * math.pi / pc.RB85.wavelength_d2
    assert er / pc.H == pytest.approx(pc.HBAR * k**2 / (4 * math.pi * pc.RB85.mass), rel=1e-12)
    assert er / pc.H == pytest.approx(3.86e3, rel=0.01)
    heavy = pc.AtomSpecies("heavy", 2 * pc.RB85.mass, pc.RB85.wavelength_d2, pc.RB85.linewidth,
                           pc.RB85.saturation_intensity, pc.RB85.gyromagnetic_factor, 3)
    assert pc.recoil_energy(heavy) == pytest.approx(er / 2, rel=1e-14)
    assert pc.KB * 10e-6 / er == pytest.approx(54, rel=0.03)


def test_shot_noise_limit():
    assert 1.5e-6 <= pc.shot_noise_limit(1e6, 0.7e-3, 2e-3) <= 2.5e-6
    assert 4.5e-6 <= pc.shot_noise_limit(1e5, 0.7e-3, 2e-3) <= 7.5e-6
    with pytest.raises(pc.DomainError):
        pc.shot_noise_limit(0, 1e-3, 1e-3)
    with pytest.raises(pc.DomainError):
        pc.shot_noise_limit(10, 0.0, 1e-3)


@given(st.floats(1, 1e9), st.floats(1e-5, 1.0), st.floats(1e-5, 1.0))
def test_shot_noise_scaling(n, tau, tm):
    assert pc.shot_noise_limit(4 * n, tau, tm) == pytest.approx(pc.shot_noise_limit(n, tau, tm) / 2,
                                                                rel=1e-14)


@given(st.sampled_from(["G", "mG", "uG", "nT", "mW/cm^2", "nm", "ms", "kHz"]),
       st.floats(1e-9, 1e9))
def test_unit_round_trip(unit, value):
    assert pc.from_internal(pc.to_internal(value, unit), unit) == pytest.approx(value, rel=1e-12)


def test_unit_table_examples():
    assert pc.to_internal(10, "nT") == pytest.approx(100e-6)
    assert pc.to_internal(8.2e4, "mW/cm^2") == pytest.approx(8.2e5)
    with pytest.raises(pc.DomainError):
        pc.to_internal(1.0, "furlong")


def test_constants_table_is_machine_readable():
    rows = list(csv.DictReader(io.StringIO(pc.constants_csv())))
    keys = {r["key"] for r in rows}
    assert {"hbar", "rb85.gyromagnetic_factor", "rb85.linewidth"} <= keys
    g = next(r for r in rows if r["key"] == "rb85.gyromagnetic_factor")
    assert float(g["value"]) == pc.RB85.gyromagnetic_factor
    assert len(pc.constants_table()) == len(rows)


def test_constants_defined_once():
    import pathlib
    import re
    src = pathlib.Path(pc.__file__).parent
    pattern = re.compile(r"(1\.054571|6\.62607|466741\.5|9\.80665|1\.380649)")
    owners = {p.name for p in src.glob("*.py") if pattern.search(p.read_text())}
    assert owners == {"physconst.py"}


def test_vectorized():
    b = np.array([0.0, 0.1, 1.0])
    np.testing.assert_allclose(pc.larmor_frequency(b), b * 466741.5)
