import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from faradaytrap import beamforge as bf
from faradaytrap import formats
from faradaytrap.atomkinetics import scattering_rate
from faradaytrap.physconst import HBAR, RB85, DomainError

# sha256 of the 512x512 default mask, frozen when the mask convention was fixed
GOLDEN_MASK_SHA256 = "4be85af8ba257c9277fcb5b88317b19422fceb80b857fef64dfbbb37f97b567d"


def test_slm_phase_examples():
    flat = bf.BeamSpec(charge=0, focal_length=math.inf)
    rho = np.array([1e-4, 1e-3])
    np.testing.assert_array_equal(bf.slm_phase(rho, np.array([0.3, 2.0]), flat), [0.0, 0.0])
    vortex = bf.BeamSpec(charge=8, focal_length=math.inf)
    ph = bf.slm_phase(1e-3, np.pi / 4, vortex)
    assert math.cos(ph) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(DomainError):
        bf.slm_phase(0.0, 0.0, vortex)


def test_mask_golden_checksum_and_axis_pixel():
    mask = bf.slm_mask(bf.BeamSpec())
    assert mask.shape == (512, 512) and mask.dtype == np.uint8
    assert mask[256, 256] == 0
    assert bf.mask_checksum(mask) == GOLDEN_MASK_SHA256


def test_mask_export_is_p5(tmp_path):
    p = bf.export_mask(tmp_path / "m.pgm", bf.BeamSpec(), pixels=64)
    np.testing.assert_array_equal(formats.read_pgm(p), bf.slm_mask(bf.BeamSpec(), pixels=64))


def test_spec_validation():
    with pytest.raises(DomainError):
        bf.BeamSpec(charge=-1)
    with pytest.raises(DomainError):
        bf.BeamSpec(detuning=-1e9)
    with pytest.raises(DomainError):
        bf.BeamSpec(grid_span_waists=4)


def _gaussian_grid(n=256, span=40, waist=50e-6):
    spec = bf.BeamSpec(charge=0, waist=waist, grid_n=n, grid_span_waists=span)
    return bf.input_field(spec)


def test_propagate_round_trip_unitary():
    g = _gaussian_grid()
    back = bf.propagate(bf.propagate(g, 0.02), -0.02)
    rms = np.sqrt(np.mean(np.abs(back.field - g.field) ** 2)) / np.sqrt(np.mean(np.abs(g.field) ** 2))
    assert rms < 1e-8


@settings(max_examples=10, deadline=None)
@given(st.floats(-0.05, 0.05))
def test_propagate_conserves_power(z):
    g = _gaussian_grid(128, 40)
    out = bf.propagate(g, z)
    assert out.power() == pytest.approx(g.power(), rel=1e-6)


def test_gaussian_width_matches_analytic():
    w0 = 50e-6
    g = _gaussian_grid(512, 40, w0)
    zr = math.pi * w0**2 / g.wavelength
    z = 3 * zr
    out = bf.propagate(g, z)
    x = out.axis
    inten = out.intensity
    px = inten.sum(axis=0)
    w = 2 * math.sqrt(np.sum(px * x**2) / px.sum())
    assert w == pytest.approx(w0 * math.sqrt(1 + (z / zr) ** 2), rel=0.01)


def test_aliasing_is_an_error():
    coarse = bf.BeamSpec(charge=8, grid_n=64)
    with pytest.raises(bf.AliasingError):
        bf.propagate(bf.input_field(coarse), 0.1)
    tight = bf.FieldGrid(np.ones((64, 64), complex), 1e-6)
    with pytest.raises(bf.AliasingError):
        bf.propagate(tight, 1e-3)


def test_dipole_potential_scaling():
    i = 8.2e5  # 8.2e4 mW/cm^2
    u = bf.dipole_potential(i, 25e9)
    assert u / (HBAR * RB85.linewidth) == pytest.approx(1.55, abs=0.02)
    assert bf.dipole_potential(0.0, 25e9) == 0.0
    assert bf.dipole_potential(2 * i, 25e9) == pytest.approx(2 * u, rel=1e-14)
    assert bf.dipole_potential(i, 50e9) == pytest.approx(u / 2, rel=1e-14)
    with pytest.raises(DomainError):
        bf.dipole_potential(i, 0.0)


@given(st.floats(0, 1e7), st.floats(0, 1e7))
def test_dipole_potential_linear(a, b):
    lhs = bf.dipole_potential(a + b, 25e9)
    rhs = bf.dipole_potential(a, 25e9) + bf.dipole_potential(b, 25e9)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-40)


def test_operating_plane_ring(default_spec, default_beam):
    assert default_spec.z_off == pytest.approx(-0.026, abs=0.003)
    inten = default_beam.intensity
    d = bf.ring_diameter(inten, default_beam.pitch)
    assert d == pytest.approx(0.48e-3, rel=0.10)
    c = inten.shape[0] // 2
    assert inten[c, c] / inten.max() < 1e-4
    assert bf.azimuthal_ripple(inten, default_beam.pitch, d / 2) < 0.01


def test_synthesized_power_close_to_input(default_spec, default_beam):
    # the band limit discards a little wide-angle light
    assert default_beam.power() == pytest.approx(default_spec.power, rel=0.03)
    assert default_beam.power() <= default_spec.power * (1 + 1e-9)


def test_trap_geometry(default_trap):
    u_center = default_trap.potential(0.0, 0.0, 0.0, include_gravity=False)
    assert u_center / default_trap.u_max < 1e-3
    assert np.all(default_trap.potential_profile >= 0)
    rep = bf.trap_report(default_trap)
    assert rep.ring_diameter == pytest.approx(0.48e-3, rel=0.10)
    assert rep.gravity_span_hbar_gamma == pytest.approx(1 / 6, rel=0.20)
    assert 2000 <= rep.u_max_recoil <= 4000
    assert rep.u_max_hbar_gamma == pytest.approx(2.0, rel=0.35)
    assert rep.peak_scattering_rate / (2 * np.pi) == pytest.approx(3e3, rel=0.35)
    assert rep.peak_scattering_rate == pytest.approx(
        scattering_rate(rep.peak_intensity, default_trap.detuning), rel=1e-12)
    d = rep.as_dict()
    assert {"ring_diameter_m", "gravity_span_hbar_gamma", "u_max_recoil"} <= set(d)


def test_trap_gravity_toggle(default_trap):
    z = 1e-4
    with_g = default_trap.potential(0.0, 0.0, z)
    without = default_trap.potential(0.0, 0.0, z, include_gravity=False)
    assert with_g - without == pytest.approx(RB85.mass * 9.80665 * z, rel=1e-12)


def test_gaussian_beam_has_no_ring():
    spec = bf.BeamSpec(charge=0, z_off=-0.026, grid_n=256)
    trap = bf.crossed_trap(spec)
    rep = bf.trap_report(trap)
    assert rep.ring_diameter is None
    d = rep.as_dict()
    assert "ring_diameter_m" not in d and "gravity_span_hbar_gamma" not in d
    with pytest.raises(DomainError):
        bf.find_operating_plane(replace(spec, z_off=None, scan_range=(-0.03, -0.028)))


def test_export_slices(tmp_path, default_trap):
    paths = bf.export_slices(str(tmp_path / "trap"), default_trap)
    names = sorted(p.name for p in paths)
    assert names == ["trap_intensity.csv", "trap_intensity.pgm", "trap_potential_z0.csv",
                     "trap_potential_z0.pgm"]
    img = formats.read_pgm(tmp_path / "trap_potential_z0.pgm")
    assert img.shape == (201, 201) and img.max() == 255
    head, cols, data = formats.read_csv(tmp_path / "trap_potential_z0.csv")
    assert cols == ["x_m", "y_m", "potential_j"] and "units" in head[0]
