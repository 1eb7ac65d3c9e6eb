"""Scenario-driven command line front end.

Every run is described by one flat ``key = value`` scenario whose keys carry
their unit as a suffix (``_s``, ``_hz``, ``_g``, ``_m``, ...). A scenario is
the defaults below, overlaid by an optional preset, then an optional file,
then command-line flags. Unknown keys are errors.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 I/O error.
Failures print one ``ERROR <code> <kind>: <message>`` line on stderr; every
file written is echoed as ``ARTIFACT <kind> <path>`` on stdout.
"""

from __future__ import annotations

import argparse
import hashlib
import math
import platform
import sys
import time
import warnings
from dataclasses import dataclass, replace
from importlib import metadata
from pathlib import Path

import numpy as np

from . import atomkinetics as ak
from . import beamforge as bf
from . import compensator as comp
from . import fieldscape as fsc
from . import rng
from . import spectra as sp
from . import spinsim as ss
from .formats import FormatError, format_kv, manifest_line, parse_kv, parse_kv_value, write_csv, write_kv
from .physconst import DomainError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Key:
    default: object
    help: str
    choices: tuple = ()


AUTO = "auto"

# name -> Key. The suffix is the unit.
KEYS = {
    "seed": Key(0, "root seed; every random stream is a labelled substream of it"),
    # beam
    "beam_charge": Key(8, "SLM vortex charge n (0 gives a plain focused Gaussian)"),
    "beam_waist_m": Key(1.71e-3, "input 1/e^2 intensity radius, m"),
    "beam_focal_length_m": Key(0.200, "SLM lens focal length, m"),
    "beam_power_w": Key(0.150, "power per trap beam, W"),
    "beam_detuning_hz": Key(25e9, "blue detuning above F=3 -> F'=4, Hz"),
    "beam_z_off_m": Key(AUTO, "operating plane relative to the focus, m, or 'auto' for the scan"),
    "beam_z_off_mode": Key("diameter", "how 'auto' picks the plane", ("diameter", "intensity")),
    "beam_grid_n": Key(1024, "propagation grid points per side"),
    "beam_grid_span_waists": Key(10.0, "grid side length in input waists"),
    "beam_target_ring_diameter_m": Key(0.48e-3, "ring diameter the 'diameter' scan aims at, m"),
    "beam_scan_min_m": Key(-0.060, "scan start (relative to the focus), m"),
    "beam_scan_max_m": Key(-0.005, "scan end (relative to the focus), m"),
    "beam_scan_step_m": Key(1e-3, "scan step, m"),
    "beam_gravity": Key(True, "include gravity in the trap potential"),
    "beam_mask_pixels": Key(512, "SLM mask side, pixels"),
    "beam_mask_pixel_pitch_m": Key(15e-6, "SLM pixel pitch, m"),
    # field truth
    "field_bias_g": Key(0.107, "static bias field, G"),
    "field_eddy_amplitude_g": Key(5e-3, "eddy-current transient amplitude at t=0, G"),
    "field_eddy_tau_s": Key(20e-3, "eddy-current time constant, s"),
    "field_harmonic_set": Key("full", "line harmonics present: none, 60 Hz only, or 60/180/300/420 Hz",
                              ("none", "60", "full")),
    "field_noise_density_g_per_rthz": Key(0.0, "white field noise density, G/sqrt(Hz)"),
    "field_noise_rate_hz": Key(1e6, "update rate of the piecewise-constant field noise, Hz"),
    "field_line_frequency_hz": Key(60.0, "mains frequency, Hz"),
    # pump/probe schedule
    "schedule_cycle_period_s": Key(1e-3, "pump/probe cycle period, s"),
    "schedule_pump_duration_s": Key(20e-6, "pump pulse length, s"),
    "schedule_probe_window_s": Key(AUTO, "probe window, s, or 'auto' for the whole gap after the pump"),
    "schedule_cycles": Key(200, "number of cycles per trace"),
    "schedule_averages": Key(64, "shots averaged per trace"),
    "schedule_sample_rate_hz": Key(1e6, "digitizer sample rate, Hz"),
    "schedule_start_time_s": Key(0.0, "trapping time of the first cycle, s"),
    # trace synthesis
    "trace_envelopes": Key(["trapped", "untrapped"], "envelope models to synthesize (list)"),
    "trace_snr": Key(15.0 / 8.0, "single-shot SNR, A(0) over RMS noise (64 averages: x8)"),
    "trace_tau_s": Key(AUTO, "per-cycle spin decay time, s, or 'auto' for the envelope default"),
    "trace_phase_mode": Key("fixed", "initial precession phase per cycle", ("fixed", "random")),
    "trace_loads": Key(1, "independent trap loads stacked one cycle each (needs schedule_cycles=1)"),
    "trace_format": Key("csv", "trace file format", ("csv", "bin")),
    # analysis
    "analysis_zero_pad_factor": Key(8, "FFT zero padding factor"),
    "analysis_window": Key("rect", "taper applied before the FFT", ("rect", "hann")),
    "analysis_nu_min_hz": Key(0.0, "lower edge of the Larmor search band, Hz (0: none)"),
    "analysis_nu_max_hz": Key(0.0, "upper edge of the Larmor search band, Hz (0: none)"),
    "analysis_decay_s": Key(0.5e-3, "per-cycle decay assumed for timing and amplitudes, s"),
    "analysis_harmonics_hz": Key([60.0, 180.0, 300.0, 420.0], "field-spectrum peaks to report, Hz"),
    "analysis_raster": Key(True, "write the 2D raster image of the trace"),
    # compensation
    "comp_iterations": Key(2, "closed-loop iterations (0: measure only)"),
    "comp_harmonics_hz": Key([60.0], "harmonics fitted and cancelled, Hz"),
    "comp_eddy": Key(True, "cancel the eddy transient"),
    "comp_line": Key(True, "cancel the fitted harmonics"),
    "comp_coil_bandwidth_hz": Key(1000.0, "compensation coil bandwidth, Hz"),
    "comp_trigger_jitter_s": Key(0.0, "RMS line-trigger timing jitter between runs, s"),
    "comp_support_start_s": Key(0.0, "residual statistics use t >= this, s"),
    # boil-off Monte Carlo
    "boil_samples": Key(10_000, "Monte Carlo samples"),
    "boil_duration_s": Key(0.5, "simulated time, s"),
    "boil_dt_s": Key(1e-6, "integrator step, s"),
    "boil_record_every_s": Key(1e-3, "survival sampling interval, s"),
    "boil_fit_start_s": Key(20e-3, "lifetime fit uses t >= this, s"),
    "boil_probe_rate_per_s": Key(500.0, "probe scattering rate, photons/s"),
    "boil_pump_photons": Key(10.0, "mean photons per pump burst"),
    "boil_pump_duration_s": Key(20e-6, "pump burst length, s"),
    "boil_cycle_period_s": Key(2e-3, "pump repetition period, s"),
    "boil_trap_scale": Key(1.0, "multiplier on trap-beam scattering (0: off)"),
    "boil_trap_on": Key(True, "trap beams on (false: free fall through the aperture)"),
    "boil_kick_model": Key("absorb_emit", "recoil model", ("absorb_emit", "lumped")),
    "boil_cloud_diameter_m": Key(500e-6, "initial cloud 1/e^2 diameter, m"),
    "boil_temperature_k": Key(10e-6, "initial cloud temperature, K"),
    "boil_aperture_radius_m": Key(0.25e-3, "detection aperture radius for the free-fall weight, m"),
    "boil_reference_samples": Key(1000, "samples in the trap-only reference run (0: skip)"),
    "boil_reference_duration_s": Key(0.05, "duration of the trap-only reference run, s"),
    # spin revivals
    "spin_f": Key(3, "hyperfine spin F"),
    "spin_larmor_hz": Key(46674.15, "Larmor frequency, Hz"),
    "spin_beta_rad_per_s": Key(math.pi / 0.5e-3, "tensor light-shift strength beta, rad/s"),
    "spin_thetas_deg": Key([0.0, math.degrees(ss.MAGIC_ANGLE)], "probe angles to the field, deg"),
    "spin_tau_s": Key(0.5e-3, "spin decay time, s"),
    "spin_snr": Key(15.0, "single-shot SNR of the revival traces"),
    "spin_cycles": Key(4, "cycles per revival trace"),
}

COMMAND_GROUPS = {
    "beam": ("seed", "beam_"),
    "synth": ("seed", "field_", "schedule_", "trace_"),
    "analyze": ("analysis_",),
    "compensate": ("seed", "field_", "schedule_", "trace_snr", "trace_tau_s",
                   "analysis_decay_s", "comp_"),
    "boil": ("seed", "beam_", "boil_"),
    "spin": ("seed", "schedule_", "spin_"),
}

PRESETS = {
    "fig2_trapped": {"trace_envelopes": ["trapped"], "schedule_cycles": 200},
    "fig2_untrapped": {"trace_envelopes": ["untrapped"], "schedule_cycles": 40},
    "fig4_uncompensated": {"comp_iterations": 0, "field_harmonic_set": "full"},
    "fig4_60hz": {"field_harmonic_set": "full", "comp_harmonics_hz": [60.0]},
    "fig4_full": {"field_harmonic_set": "full",
                  "comp_harmonics_hz": [60.0, 180.0, 300.0, 420.0]},
    "fig6_noisefloor": {"trace_envelopes": ["trapped"], "schedule_cycles": 1,
                        "schedule_start_time_s": 0.1, "trace_loads": 256},
    "fig7_boil": {"boil_samples": 10_000, "boil_duration_s": 0.5},
    "fig8_revivals": {"spin_thetas_deg": [0.0, math.degrees(ss.MAGIC_ANGLE)]},
}


# -- scenario -----------------------------------------------------------------

def _check_value(name, value):
    key = KEYS[name]
    d = key.default
    if isinstance(d, str) and d == AUTO:
        if value == AUTO:
            return value
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        raise ConfigError(f"{name}: expected a number or 'auto', got {value!r}")
    if isinstance(d, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name}: expected true or false, got {value!r}")
        return value
    if isinstance(d, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
        return value
    if isinstance(d, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: expected a number, got {value!r}")
        return float(value)
    if isinstance(d, list):
        if not isinstance(value, list):
            raise ConfigError(f"{name}: expected a list [a, b, ...], got {value!r}")
        if d and isinstance(d[0], float):
            if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value):
                raise ConfigError(f"{name}: list entries must be numbers")
            return [float(v) for v in value]
        return [str(v) for v in value]
    if key.choices and value not in key.choices:
        raise ConfigError(f"{name}: expected one of {', '.join(key.choices)}, got {value!r}")
    if not isinstance(value, str):
        raise ConfigError(f"{name}: expected text, got {value!r}")
    return value


def resolve(preset=None, path=None, overrides=None) -> dict:
    """Defaults, then the preset, then the file, then explicit overrides."""
    scen = {k: (list(v.default) if isinstance(v.default, list) else v.default)
            for k, v in KEYS.items()}
    layers = []
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; known: {', '.join(PRESETS)}")
        layers.append(PRESETS[preset])
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read scenario {path}: {exc.strerror}") from None
        try:
            layers.append(parse_kv(text, source=path))
        except FormatError as exc:
            raise ConfigError(str(exc)) from None
    layers.append(overrides or {})
    for layer in layers:
        for name, value in layer.items():
            if name not in KEYS:
                raise ConfigError(f"unknown scenario key {name!r}")
            scen[name] = _check_value(name, value)
    return scen


def scenario_text(scen: dict) -> str:
    return format_kv(dict(sorted(scen.items())))


def scenario_hash(scen: dict) -> str:
    return hashlib.sha256(scenario_text(scen).encode()).hexdigest()


def _auto(value):
    return None if value == AUTO else value


def beam_spec(s) -> bf.BeamSpec:
    return bf.BeamSpec(
        charge=s["beam_charge"], waist=s["beam_waist_m"], focal_length=s["beam_focal_length_m"],
        power=s["beam_power_w"], detuning=s["beam_detuning_hz"], z_off=_auto(s["beam_z_off_m"]),
        grid_n=s["beam_grid_n"], grid_span_waists=s["beam_grid_span_waists"],
        target_ring_diameter=s["beam_target_ring_diameter_m"],
        scan_range=(s["beam_scan_min_m"], s["beam_scan_max_m"]), scan_step=s["beam_scan_step_m"])


def field_truth(s) -> fsc.FieldTimeline:
    hs = s["field_harmonic_set"]
    base = fsc.lab_like(s["field_bias_g"], s["field_eddy_amplitude_g"], s["field_eddy_tau_s"],
                          "full" if hs == "full" else "60",
                          seed=rng.stream_key(s["seed"], "field"))
    lf = s["field_line_frequency_hz"]
    harms = () if hs == "none" else tuple(
        replace(h, frequency=h.frequency / fsc.LINE_FREQUENCY * lf) for h in base.harmonics)
    return replace(base, harmonics=harms, line_frequency=lf,
                   noise_density=s["field_noise_density_g_per_rthz"],
                   noise_rate=s["field_noise_rate_hz"])


def schedule(s, **changes) -> ss.PumpProbeSchedule:
    kw = dict(cycle_period=s["schedule_cycle_period_s"],
              pump_duration=s["schedule_pump_duration_s"],
              probe_window=_auto(s["schedule_probe_window_s"]),
              cycles=s["schedule_cycles"], averages=s["schedule_averages"],
              sample_rate=s["schedule_sample_rate_hz"],
              start_time=s["schedule_start_time_s"])
    kw.update(changes)
    return ss.PumpProbeSchedule(**kw)


# -- run bookkeeping ----------------------------------------------------------

class Run:
    """Output directory, artifact echo and manifest for one subcommand."""

    def __init__(self, command, out, scen, preset, scenario_path):
        self.command = command
        self.out = Path(out)
        self.scen = scen
        self.preset = preset
        self.scenario_path = scenario_path
        self.artifacts = []
        self.t0 = time.perf_counter()
        try:
            self.out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OSError(exc.errno, f"cannot create output directory {self.out}: {exc.strerror}")
        self.scenario_file = self.out / "scenario.txt"
        self.scenario_file.write_text(scenario_text(scen))
        self.add("scenario", self.scenario_file)

    @property
    def inputs(self):
        return (self.scenario_file,)

    def path(self, name) -> Path:
        return self.out / name

    def add(self, kind, path):
        path = Path(path)
        self.artifacts.append((kind, path))
        print(f"ARTIFACT {kind} {path}", flush=True)
        return path

    def finish(self, seeds: dict):
        versions = {"faradaytrap": _version("artifact"), "python": platform.python_version(),
                    "numpy": np.__version__, "scipy": _version("scipy"),
                    "numba": _version("numba")}
        mf = {"command": self.command, "preset": self.preset or "none",
              "scenario_file": str(self.scenario_file),
              "scenario_sha256": scenario_hash(self.scen)}
        mf.update({f"version_{k}": v for k, v in versions.items()})
        mf.update({f"seed_{k}": int(v) for k, v in seeds.items()})
        mf["artifacts"] = ";".join(f"{k}:{p.name}" for k, p in self.artifacts)
        mf["wall_time_s"] = round(time.perf_counter() - self.t0, 3)
        path = write_kv(self.out / "manifest.txt", mf,
                        comments=["run manifest; wall_time_s is the only non-reproducible entry"])
        self.add("manifest", path)


def _version(dist):
    try:
        return metadata.version(dist)
    except metadata.PackageNotFoundError:
        return "unknown"


# -- subcommands --------------------------------------------------------------

def cmd_beam(s, run: Run):
    spec = beam_spec(s)
    mode = s["beam_z_off_mode"]
    z_off = spec.z_off
    if z_off is None:
        if spec.charge == 0 and mode == "diameter":
            mode = "intensity"  # no dark core to size
        z_off = bf.find_operating_plane(spec, mode)
    spec = replace(spec, z_off=z_off)
    mask = bf.slm_mask(spec, s["beam_mask_pixels"], s["beam_mask_pixel_pitch_m"])
    run.add("mask", bf.export_mask(run.path("slm_mask.pgm"), spec,
                                   pixels=s["beam_mask_pixels"],
                                   pixel_pitch=s["beam_mask_pixel_pitch_m"]))
    trap = bf.crossed_trap(spec, gravity=s["beam_gravity"])
    for p in bf.export_slices(str(run.path("trap")), trap):
        run.add("slice", p)
    report = {"z_off_m": z_off, "z_off_mode": mode if spec.z_off is not None else "given",
              "mask_sha256": bf.mask_checksum(mask)}
    report.update(bf.trap_report(trap).as_dict())
    run.add("report", write_kv(run.path("trap_report.txt"), report,
                               comments=[manifest_line(run.inputs)]))
    return {"root": s["seed"]}


def _synth_one(s, truth, sched, envelope, seed):
    kw = dict(envelope=envelope, tau=_auto(s["trace_tau_s"]), snr=s["trace_snr"],
              phase_mode=s["trace_phase_mode"])
    loads = s["trace_loads"]
    if loads < 1:
        raise ConfigError("trace_loads must be >= 1")
    if loads == 1:
        return ss.synth_trace(truth, sched, seed=seed, **kw)
    if sched.cycles != 1:
        raise ConfigError("stacking loads needs schedule_cycles = 1")
    parts = [ss.synth_trace(truth, sched, seed=rng.stream_key(seed, "load", k), **kw)
             for k in range(loads)]
    stacked = replace(sched, cycles=loads)
    return ss.PrecessionTrace(np.concatenate([p.voltage for p in parts]), sched.sample_rate,
                              stacked, envelope, seed, meta=dict(parts[0].meta, loads=loads))


def cmd_synth(s, run: Run):
    truth = field_truth(s)
    sched = schedule(s)
    seeds = {"root": s["seed"]}
    summary = {"loads": s["trace_loads"], "snr_single_shot": s["trace_snr"],
               "snr_averaged": s["trace_snr"] * math.sqrt(sched.averages)}
    run.add("field", write_kv(run.path("field_truth.txt"), fsc.timeline_to_kv(truth),
                              comments=[manifest_line(run.inputs)]))
    for env in s["trace_envelopes"]:
        if env not in ss.ENVELOPES:
            raise ConfigError(f"trace_envelopes: unknown envelope {env!r}")
        seed = rng.stream_key(s["seed"], "synth", env)
        seeds[f"synth_{env}"] = seed
        trace = _synth_one(s, truth, sched, env, seed)
        if s["trace_format"] == "csv":
            extra = [f"loads={s['trace_loads']} (each cycle an independent load)"] \
                if s["trace_loads"] > 1 else []
            run.add("trace", ss.write_trace_csv(run.path(f"trace_{env}.csv"), trace, extra))
        else:
            run.add("trace", ss.write_trace_bin(run.path(f"trace_{env}.ftr"), trace))
        if sched.cycles >= 3 and s["trace_loads"] == 1:
            decay = ss.DEFAULT_DECAY[env] if s["trace_tau_s"] == AUTO else s["trace_tau_s"]
            amps = sp.window_amplitudes(trace, decay=decay)
            starts = sched.cycle_starts()
            cross, fit = sp.envelope_lifetime(starts, amps)
            truth_amp = ss.envelope_amplitude(env, starts)
            tcross, tfit = sp.envelope_lifetime(starts, truth_amp)
            summary[f"{env}_one_over_e_s"] = cross
            summary[f"{env}_exp_fit_tau_s"] = fit
            summary[f"{env}_truth_one_over_e_s"] = tcross
            rel = starts - starts[0]
            if rel[-1] >= 25e-3:
                i = int(np.searchsorted(rel, 25e-3))
                summary[f"{env}_relative_amplitude_25ms"] = float(amps[i] / amps[0])
            run.add("envelope", write_csv(run.path(f"envelope_{env}.csv"),
                                          {"t_s": starts, "amplitude_v": amps,
                                           "truth_v": truth_amp},
                                          header_lines=[manifest_line(run.inputs)]))
    run.add("summary", write_kv(run.path("synth_summary.txt"), summary,
                                comments=[manifest_line(run.inputs)]))
    return seeds


def read_trace(path) -> ss.PrecessionTrace:
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == b"FTR1":
        return ss.read_trace_bin(path)
    return ss.read_trace_csv(path)


def cmd_analyze(s, run: Run, trace_path):
    trace = read_trace(trace_path)
    sched = trace.schedule
    lo, hi = s["analysis_nu_min_hz"], s["analysis_nu_max_hz"]
    nu_range = None if lo == 0 and hi == 0 else (lo, hi if hi > 0 else math.inf)
    inputs = (*run.inputs, Path(trace_path))
    tl = sp.nu_timeline(trace, zero_pad_factor=s["analysis_zero_pad_factor"],
                        window=s["analysis_window"], nu_range=nu_range,
                        decay=s["analysis_decay_s"])
    run.add("timeline", sp.write_timeline_csv(run.path("timeline.csv"), tl, inputs))
    good = tl.valid
    summary = {"trace": Path(trace_path).name, "windows": len(tl), "valid_windows": int(good.sum()),
               "time_offset_s": tl.time_offset}
    if good.any():
        summary.update({"nu_mean_hz": float(np.mean(tl.nu[good])),
                        "nu_std_hz": float(np.std(tl.nu[good])),
                        "sigma_median_hz": float(np.median(tl.sigma[good]))})
    if s["analysis_raster"] and sched.cycles > 0:
        for p in sp.write_raster(str(run.path("raster")), sp.rasterize(trace), inputs):
            run.add("raster", p)
    if len(tl) >= 2:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            f, a = sp.field_spectrum(tl)
        summary["interpolated_windows"] = len(tl) - int(good.sum())
        run.add("spectrum", sp.write_spectrum_csv(run.path("field_spectrum.csv"), f, a, inputs))
        for h in s["analysis_harmonics_hz"]:
            if h <= f[-1]:
                summary[f"peak_{h:g}hz_g"] = sp.peak_amplitude(f, a, h)
    run.add("summary", write_kv(run.path("analysis_summary.txt"), summary,
                                comments=[manifest_line(inputs)]))
    return {"trace": trace.seed}


def cmd_compensate(s, run: Run):
    truth = field_truth(s)
    scen = comp.ClosedLoopScenario(
        truth=truth, schedule=schedule(s), snr=s["trace_snr"], envelope="trapped",
        tau=_auto(s["trace_tau_s"]), seed=rng.stream_key(s["seed"], "compensate"),
        harmonics=tuple(s["comp_harmonics_hz"]), coil_bandwidth=s["comp_coil_bandwidth_hz"],
        compensate_eddy=s["comp_eddy"], compensate_harmonics=s["comp_line"],
        trigger_jitter=s["comp_trigger_jitter_s"], support_start=s["comp_support_start_s"],
        decay_for_timing=s["analysis_decay_s"])
    report = comp.closed_loop(scen, iterations=s["comp_iterations"])
    for kind, p in comp.write_report(str(run.path("compensation")), report, run.inputs).items():
        run.add(kind, p)
    run.add("plan", write_kv(run.path("compensation_plan.txt"), fsc.plan_to_kv(report.plan),
                             comments=[manifest_line(run.inputs)]))
    run.add("field", write_kv(run.path("field_truth.txt"), fsc.timeline_to_kv(truth),
                              comments=[manifest_line(run.inputs)]))
    return {"root": s["seed"], "compensate": scen.seed}


def _scatter_schedule(s, imposed=True):
    return ak.ScatterSchedule(
        probe_rate=s["boil_probe_rate_per_s"] if imposed else 0.0,
        pump_photons=s["boil_pump_photons"] if imposed else 0.0,
        pump_duration=s["boil_pump_duration_s"], cycle_period=s["boil_cycle_period_s"],
        trap_scale=s["boil_trap_scale"])


def cmd_boil(s, run: Run):
    seed = rng.stream_key(s["seed"], "boil")
    ens = ak.thermal_ensemble(s["boil_samples"], seed, s["boil_cloud_diameter_m"],
                              s["boil_temperature_k"])
    sched = _scatter_schedule(s)
    dt = s["boil_dt_s"]
    summary = {"samples": s["boil_samples"], "kick_model": s["boil_kick_model"],
               "imposed_rate_per_s": sched.mean_imposed_rate}
    seeds = {"root": s["seed"], "boil": seed}
    if not s["boil_trap_on"]:
        t, w = ak.weight_curve(ens, None, sched, s["boil_duration_s"],
                               interval=s["boil_record_every_s"], dt=dt,
                               aperture_radius=s["boil_aperture_radius_m"],
                               kick_model=s["boil_kick_model"])
        rel = w / w[0] if w[0] > 0 else w
        run.add("weight", write_csv(run.path("aperture_weight.csv"),
                                    {"t_s": t, "weight": w, "relative": rel},
                                    header_lines=[manifest_line(run.inputs)]))
        below = np.flatnonzero(rel < 0.05)
        summary["trap_on"] = False
        summary["time_below_5pct_s"] = float(t[below[0]]) if len(below) else math.inf
        cross, _ = sp.envelope_lifetime(t, rel) if len(t) >= 3 else (math.inf, math.inf)
        summary["one_over_e_s"] = cross
    else:
        spec = beam_spec(s)
        trap = bf.crossed_trap(spec, gravity=s["beam_gravity"])
        rep = bf.trap_report(trap)
        res = ak.survival_curve(ens, trap, sched, s["boil_duration_s"], dt=dt,
                                record_every=s["boil_record_every_s"],
                                fit_start=s["boil_fit_start_s"],
                                kick_model=s["boil_kick_model"])
        run.add("survival", write_csv(run.path("survival.csv"),
                                      {"t_s": res.t, "fraction": res.fraction,
                                       "stderr": res.stderr},
                                      header_lines=[manifest_line(run.inputs)]))
        summary.update({
            "trap_on": True, "u_max_j": rep.u_max, "u_max_recoil": rep.u_max_recoil,
            "lifetime_s": res.lifetime, "lifetime_err_s": res.lifetime_err,
            "one_over_e_s": res.one_over_e_time(), "final_fraction": float(res.fraction[-1]),
            "scatter_events": res.events,
            "mean_trap_rate_over_2pi_hz": res.mean_trap_rate_hz,
            "boil_time_estimate_s": ak.boil_time(
                rep.u_max, sched.mean_imposed_rate + res.mean_trap_rate),
        })
        n_ref = s["boil_reference_samples"]
        if n_ref > 0:
            ref_seed = rng.stream_key(s["seed"], "boil-reference")
            seeds["boil_reference"] = ref_seed
            ref = ak.survival_curve(
                ak.thermal_ensemble(n_ref, ref_seed, s["boil_cloud_diameter_m"],
                                    s["boil_temperature_k"]),
                trap, _scatter_schedule(s, imposed=False), s["boil_reference_duration_s"],
                dt=dt, record_every=s["boil_record_every_s"],
                fit_start=min(s["boil_fit_start_s"], s["boil_reference_duration_s"] / 2),
                kick_model=s["boil_kick_model"])
            summary["reference_trap_rate_over_2pi_hz"] = ref.mean_trap_rate_hz
            summary["reference_final_fraction"] = float(ref.fraction[-1])
    run.add("summary", write_kv(run.path("boil_summary.txt"), summary,
                                comments=[manifest_line(run.inputs)]))
    return seeds


def cmd_spin(s, run: Run):
    sched = schedule(s, cycles=s["spin_cycles"], start_time=0.0)
    fs = sched.sample_rate
    summary = {"beta_rad_per_s": s["spin_beta_rad_per_s"],
               "revival_time_secular_s": math.pi / abs(s["spin_beta_rad_per_s"])
               if s["spin_beta_rad_per_s"] else math.inf}
    seeds = {"root": s["seed"]}
    for theta_deg in s["spin_thetas_deg"]:
        model = ss.SpinModel(s["spin_f"], s["spin_larmor_hz"], s["spin_beta_rad_per_s"],
                             math.radians(theta_deg), s["spin_tau_s"])
        tag = f"{theta_deg:.1f}deg"
        seed = rng.stream_key(s["seed"], "spin", tag)
        seeds[f"spin_{tag}"] = seed
        trace = ss.revival_trace(model, sched, snr=s["spin_snr"], seed=seed)
        run.add("trace", ss.write_trace_csv(run.path(f"revival_{tag}.csv"), trace,
                                            [f"theta_deg={theta_deg!r}"]))
        t = np.arange(sched.window_samples) / fs
        clean = ss.quantum_evolve(model, t)
        windows = sp.window_slice(trace)
        mean = np.mean(windows, axis=0) if windows else clean.fx / model.F
        summary[f"revival_{tag}_measured"] = ss.revival_amplitude(mean, fs, model.larmor_hz)
        summary[f"revival_{tag}_noiseless"] = ss.revival_amplitude(clean.fx / model.F, fs,
                                                                   model.larmor_hz)
        summary[f"norm_drift_{tag}"] = clean.norm_drift
    summary["noise_sigma_v"] = 1.0 / (s["spin_snr"] * math.sqrt(sched.averages))
    run.add("summary", write_kv(run.path("spin_summary.txt"), summary,
                                comments=[manifest_line(run.inputs)]))
    return seeds


COMMANDS = {
    "beam": (cmd_beam, "hollow-beam mask, intensity and potential slices, trap report"),
    "synth": (cmd_synth, "synthesize trapped/untrapped Faraday traces"),
    "analyze": (cmd_analyze, "nu_L(t) timeline, field spectrum and raster of a trace file"),
    "compensate": (cmd_compensate, "closed-loop eddy and line-harmonic compensation"),
    "boil": (cmd_boil, "Monte Carlo survival under photon scattering"),
    "spin": (cmd_spin, "collapse/revival traces versus probe angle"),
}


# -- argument parsing ---------------------------------------------------------

def _flag(name):
    return "--" + name.replace("_", "-")


def _keys_for(command):
    groups = COMMAND_GROUPS[command]
    return [k for k in KEYS if any(k == g or (g.endswith("_") and k.startswith(g))
                                   for g in groups)]


def _scalar(key: Key):
    return not isinstance(key.default, list)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _fail(EXIT_CONFIG, "usage", message)
        sys.exit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="faradaytrap",
        description="Cold-atom Faraday magnetometer in a hollow-beam dark trap: "
                    "runs from preset or scenario files.",
        epilog="exit codes: 0 success, 2 config error, 3 numerical failure, 4 I/O error. "
               "Presets: " + ", ".join(PRESETS))
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, (_, text) in COMMANDS.items():
        p = sub.add_parser(name, help=text, description=text,
                           formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        if name == "analyze":
            p.add_argument("trace", help="trace file (.csv or binary FTR1)")
        p.add_argument("--scenario", metavar="PATH", help="scenario key = value file")
        p.add_argument("--preset", choices=sorted(PRESETS), help="built-in scenario")
        p.add_argument("--out", metavar="DIR", default=f"out/{name}",
                       help="output directory (created if missing)")
        opts = p.add_argument_group("scenario keys (override file and preset; units in the name)")
        for key in _keys_for(name):
            k = KEYS[key]
            if not _scalar(k):
                opts.add_argument(_flag(key), dest=key, metavar="[A,B,...]",
                                  default=argparse.SUPPRESS,
                                  help=f"{k.help} (default: {k.default})")
                continue
            meta = "|".join(k.choices) if k.choices else (
                "true|false" if isinstance(k.default, bool) else "VALUE")
            opts.add_argument(_flag(key), dest=key, metavar=meta, default=argparse.SUPPRESS,
                              help=f"{k.help} (default: {k.default})")
    return parser


def _overrides(ns) -> dict:
    out = {}
    for key in KEYS:
        if hasattr(ns, key):
            text = getattr(ns, key)
            if isinstance(KEYS[key].default, list) and not text.startswith("["):
                text = f"[{text}]"
            out[key] = parse_kv_value(text)
    return out


def _fail(code, kind, message):
    msg = " ".join(str(message).split())
    print(f"ERROR {code} {kind}: {msg}", file=sys.stderr, flush=True)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    cmd, _ = COMMANDS[ns.command]
    try:
        scen = resolve(ns.preset, ns.scenario, _overrides(ns))
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", exc)
    try:
        run = Run(ns.command, ns.out, scen, ns.preset, ns.scenario)
        with np.errstate(divide="ignore", invalid="ignore"):
            if ns.command == "analyze":
                seeds = cmd(scen, run, ns.trace)
            else:
                seeds = cmd(scen, run)
        run.finish(seeds)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", exc)
    except FormatError as exc:
        return _fail(EXIT_IO, "format", exc)
    except OSError as exc:
        return _fail(EXIT_IO, "io", exc)
    except (bf.AliasingError, ss.AliasingError) as exc:
        return _fail(EXIT_CONFIG, "aliasing", exc)
    except (comp.EstimationError, sp.GapError, np.linalg.LinAlgError, ArithmeticError) as exc:
        return _fail(EXIT_NUMERIC, "numerical", exc)
    except (DomainError, ValueError) as exc:
        return _fail(EXIT_CONFIG, "config", exc)
    except RuntimeError as exc:
        return _fail(EXIT_NUMERIC, "numerical", exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
