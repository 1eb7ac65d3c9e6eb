import pytest

from faradaytrap import beamforge as bf


@pytest.fixture(scope="session")
def default_spec():
    spec = bf.BeamSpec()
    return bf.BeamSpec(z_off=bf.find_operating_plane(spec))


@pytest.fixture(scope="session")
def default_beam(default_spec):
    return bf.synthesize_beam(default_spec)


@pytest.fixture(scope="session")
def default_trap(default_spec, default_beam):
    return bf.crossed_trap(default_spec, beam=default_beam)


ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """report(n, ok, detail): record and print one PASS/FAIL line, then assert."""
    def report(n, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
        print(line)
        ACCEPTANCE[n] = line
        assert ok, line
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
