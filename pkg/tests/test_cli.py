import re

import pytest

from faradaytrap import cli
from faradaytrap.formats import read_kv

Z_OFF = "-0.026"  # skips the operating-plane scan


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def artifacts(out):
    return re.findall(r"^ARTIFACT (\S+) (.+)$", out, re.M)


def outputs(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "manifest.txt"}


def test_synth_writes_trace_and_manifest(tmp_path, capsys):
    code, out, err = run(capsys, "synth", "--out", tmp_path, "--schedule-cycles", 5)
    assert code == 0 and err == ""
    arts = artifacts(out)
    assert {"scenario", "trace", "manifest"} <= {k for k, _ in arts}
    mf = read_kv(tmp_path / "manifest.txt")
    for key in ("command", "preset", "scenario_sha256", "version_numpy", "artifacts",
                "wall_time_s"):
        assert key in mf
    assert mf["command"] == "synth"
    assert any(k.startswith("seed_") for k in mf)
    for _, path in arts:
        assert (tmp_path / path.split("/")[-1]).exists()


def test_synth_reruns_are_bit_identical(tmp_path, capsys):
    for d in ("a", "b"):
        code, *_ = run(capsys, "synth", "--out", tmp_path / d, "--schedule-cycles", 4,
                       "--trace-envelopes", "trapped,untrapped", "--seed", 7)
        assert code == 0
    assert outputs(tmp_path / "a") == outputs(tmp_path / "b")
    run(capsys, "synth", "--out", tmp_path / "c", "--schedule-cycles", 4,
        "--trace-envelopes", "trapped,untrapped", "--seed", 8)
    assert outputs(tmp_path / "a") != outputs(tmp_path / "c")


def test_analyze_round_trip_and_binary(tmp_path, capsys):
    means = []
    for fmt in ("csv", "bin"):
        d = tmp_path / fmt
        code, out, _ = run(capsys, "synth", "--out", d, "--schedule-cycles", 60,
                           "--trace-format", fmt)
        trace = next(p for k, p in artifacts(out) if k == "trace")
        code, out, err = run(capsys, "analyze", trace, "--out", d / "an")
        assert code == 0, err
        summary = read_kv(next(p for k, p in artifacts(out) if k == "summary"))
        means.append(summary["nu_mean_hz"])
    assert means[0] == means[1]  # both formats carry the same samples
    assert abs(means[0] - 466741.5 * 0.107) < 466741.5 * 5e-3


def test_compensate_and_spin_are_reproducible(tmp_path, capsys):
    for cmd, extra in (("compensate", ["--preset", "fig4_60hz", "--comp-iterations", 1]),
                       ("spin", ["--spin-cycles", 2])):
        for d in ("a", "b"):
            code, _, err = run(capsys, cmd, "--out", tmp_path / cmd / d, *extra)
            assert code == 0, err
        assert outputs(tmp_path / cmd / "a") == outputs(tmp_path / cmd / "b")


def test_beam_and_boil_small(tmp_path, capsys):
    code, out, err = run(capsys, "beam", "--out", tmp_path / "beam", "--beam-z-off-m", Z_OFF)
    assert code == 0, err
    rep = read_kv(tmp_path / "beam" / "trap_report.txt")
    assert abs(rep["ring_diameter_m"] - 0.48e-3) < 0.048e-3
    assert rep["z_off_mode"] == "fixed" or rep["z_off_m"] == float(Z_OFF)
    code, out, err = run(capsys, "boil", "--out", tmp_path / "boil", "--beam-z-off-m", Z_OFF,
                         "--boil-samples", 50, "--boil-duration-s", 0.02,
                         "--boil-reference-samples", 20, "--boil-reference-duration-s", 0.01)
    assert code == 0, err
    assert any("survival" in p for _, p in artifacts(out))


def test_help_lists_units(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["synth", "--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    assert "--field-bias-g" in text and "--schedule-cycle-period-s" in text


def test_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("field_bias_g = 0.1\nfield_bias_gauss = 0.2\n")
    code, _, err = run(capsys, "synth", "--scenario", bad, "--out", tmp_path / "o")
    assert code == 2 and err.startswith("ERROR 2 config:")
    code, _, err = run(capsys, "synth", "--scenario", tmp_path / "missing.txt", "--out", tmp_path)
    assert code in (2, 4) and err.startswith("ERROR")
    code, _, err = run(capsys, "analyze", tmp_path / "missing.csv", "--out", tmp_path / "x")
    assert code == 4 and err.startswith("ERROR 4")
    code, _, err = run(capsys, "beam", "--out", tmp_path / "b", "--beam-grid-n", 64,
                       "--beam-z-off-m", Z_OFF)
    assert code == 2 and "aliasing" in err
    code, _, err = run(capsys, "synth", "--out", tmp_path / "s", "--schedule-sample-rate-hz", 1e5,
                       "--schedule-cycles", 2)
    assert code == 2


def test_unknown_flag_exits_2(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["synth", "--no-such-flag", "1"])
    assert exc.value.code == 2
    assert "ERROR 2 usage" in capsys.readouterr().err


def test_corrupt_trace_reports_line(tmp_path, capsys):
    run(capsys, "synth", "--out", tmp_path, "--schedule-cycles", 2)
    trace = next(tmp_path.glob("trace_*.csv"))
    lines = trace.read_text().splitlines()
    lines[10] = "0.1,x"
    trace.write_text("\n".join(lines) + "\n")
    code, _, err = run(capsys, "analyze", trace, "--out", tmp_path / "an")
    assert code == 4 and ":11:" in err


def test_resolve_layers(tmp_path):
    f = tmp_path / "s.txt"
    f.write_text("schedule_cycles = 7\nseed = 3\n")
    s = cli.resolve("fig2_trapped", f, {"seed": 5})
    assert s["schedule_cycles"] == 7 and s["seed"] == 5 and s["trace_envelopes"] == ["trapped"]
    with pytest.raises(cli.ConfigError):
        cli.resolve("fig99")
    with pytest.raises(cli.ConfigError):
        cli.resolve(overrides={"field_harmonic_set": "some"})
    assert cli.scenario_hash(s) == cli.scenario_hash(dict(reversed(list(s.items()))))
