"""Command-line harness: scenario synthesis, extraction, sweeps, comparisons,
and latency benchmarking.

Configuration comes from embedded defaults, optionally a JSON file
(--config), and dotted-key overrides (--set sibf.g=0.98).  Exit codes:
0 success, 2 usage/config error, 3 numeric-failure threshold exceeded.
"""

import argparse
import copy
import csv
import json
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import baselines, io, metrics
from .core import SibfConfig, extract_batch, run_per_frame
from .models import SourceModel
from .stft import StftConfig, band_limit, combine_magnitude_phase, istft, stft_multi
from .synth import ScenarioSpec, generate_scenario

DEFAULTS = {
    "method": "sibf",            # sibf | ive_constrained | mmse
    "stft": {"fft_size": 1024, "hop_size": 256, "window": "sqrt_hann"},
    "band": {"lo_hz": 62.5, "hi_hz": 7812.5},
    "scenario": {
        "n_mics": 4, "n_sources": 2, "duration": 3.0, "sample_rate": 16000,
        "snr_db": 5.0, "bg_multiplier": 1.0, "noise_kind": "white",
        "diffuse_level_db": -20.0, "mixing": "anechoic", "mic_spacing": 0.05,
        "azimuths_deg": None, "ref_mic": 0, "source_band": None,
        "reference_degradation": None, "seed": 0,
    },
    "sibf": {
        "mode": "batch", "scaling": "swf", "ref_mic": 0, "g": 0.99,
        "t_b": None, "k_aux": None, "pm_iterations": 2,
        "diag_load": 1e-6, "inverse_refresh": 1000,
        "model": {"kind": "tv_gg", "rho": 1.0, "beta": 0.25, "nu": 1.0,
                  "alpha": 100.0, "epsilon": 1e-9, "y_floor": 1e-12},
    },
    "sweep": {"rho": [0.5, 1.0, 1.5, 2.0], "beta": [0.125, 0.25, 0.5, 1.0],
              "epsilon": [1e-9]},
    "bench": {"modes": ["batch", "windowed", "fifo", "rls"]},
    "io": {"wav_format": "float32", "max_failed_bin_fraction": 0.5},
}


class UsageError(Exception):
    """Configuration or input-file problem; maps to exit code 2."""


class NumericFailure(Exception):
    """Too many failed bins; maps to exit code 3."""


# ---------------------------------------------------------------- config

def _merge(base, update):
    out = copy.deepcopy(base)
    for key, val in update.items():
        if key not in out:
            raise UsageError(f"unknown config key: {key!r}")
        if isinstance(out[key], dict) and isinstance(val, dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


def _apply_override(cfg, expr):
    if "=" not in expr:
        raise UsageError(f"override must look like key.path=value, got {expr!r}")
    dotted, raw = expr.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = cfg
    keys = dotted.strip().split(".")
    for key in keys[:-1]:
        if key not in node or not isinstance(node[key], dict):
            raise UsageError(f"unknown config section: {dotted!r}")
        node = node[key]
    if keys[-1] not in node:
        raise UsageError(f"unknown config key: {dotted!r}")
    node[keys[-1]] = value


def load_config(path=None, overrides=()):
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path) as fh:
                cfg = _merge(cfg, json.load(fh))
        except FileNotFoundError as exc:
            raise UsageError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file is not valid JSON: {exc}") from exc
    for expr in overrides:
        _apply_override(cfg, expr)
    return cfg


def _tupled(value):
    return tuple(value) if isinstance(value, list) else value


def scenario_from_config(cfg):
    sc = dict(cfg["scenario"])
    sc["azimuths_deg"] = _tupled(sc["azimuths_deg"])
    sc["source_band"] = _tupled(sc["source_band"])
    sc["reference_degradation"] = _tupled(sc["reference_degradation"])
    try:
        return ScenarioSpec(**sc)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad scenario config: {exc}") from exc


def stft_from_config(cfg):
    try:
        return StftConfig(**cfg["stft"])
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad stft config: {exc}") from exc


def sibf_from_config(cfg, **overrides):
    section = dict(cfg["sibf"])
    model_cfg = section.pop("model")
    try:
        model = SourceModel(**model_cfg)
        return SibfConfig(model=model, **{**section, **overrides})
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad sibf config: {exc}") from exc


# ---------------------------------------------------------------- scenarios

def write_scenario(bundle, out_dir, wav_format="float32"):
    """Emit the scenario files and manifest; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = bundle.spec
    rate = bundle.sample_rate
    files = {"obs": [], "target": "target_mic.wav",
             "interference": "interference_mic.wav",
             "reference_wav": "reference.wav", "reference_mag": "reference.mag"}
    for k in range(spec.n_mics):
        name = f"obs_ch{k}.wav"
        io.write_wav(out / name, bundle.obs_time[k], rate, wav_format)
        files["obs"].append(name)
    io.write_wav(out / files["target"], bundle.target_time, rate, wav_format)
    io.write_wav(out / files["interference"], bundle.itf_time, rate, wav_format)
    ref_wave = istft(
        combine_magnitude_phase(bundle.reference, bundle.x[spec.ref_mic]),
        bundle.stft_config, length=bundle.obs_time.shape[1])
    io.write_wav(out / files["reference_wav"], ref_wave, rate, wav_format)
    io.write_magnitude(out / files["reference_mag"], bundle.reference)
    manifest = {
        "kind": "scenario",
        "sample_rate": rate,
        "stft": {"fft_size": bundle.stft_config.fft_size,
                 "hop_size": bundle.stft_config.hop_size,
                 "window": bundle.stft_config.window},
        "scenario": asdict(spec),
        "files": files,
        "snr_measured_db": bundle.snr_measured_db(),
        "mixing_condition": bundle.mixing_condition,
    }
    path = out / "manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2)
    return path


def load_scenario_dir(scenario_dir):
    """Rebuild the deterministic bundle described by a scenario manifest."""
    mpath = Path(scenario_dir) / "manifest.json"
    try:
        with open(mpath) as fh:
            manifest = json.load(fh)
    except FileNotFoundError as exc:
        raise UsageError(f"no manifest in {scenario_dir}") from exc
    sc = {k: _tupled(v) for k, v in manifest["scenario"].items()}
    spec = ScenarioSpec(**sc)
    stft_cfg = StftConfig(**manifest["stft"])
    return generate_scenario(spec, stft_cfg)


def _scenario_dirs(args):
    dirs = []
    for entry in args.scenarios:
        p = Path(entry)
        if (p / "manifest.json").exists():
            dirs.append(p)
        elif p.is_dir():
            dirs.extend(sorted(d for d in p.iterdir() if (d / "manifest.json").exists()))
        else:
            raise UsageError(f"not a scenario directory: {entry}")
    if not dirs:
        raise UsageError("no scenarios found")
    return dirs


# ---------------------------------------------------------------- pipeline

def run_method(bundle, cfg, method=None, sibf_cfg=None):
    """Run one extraction method on an in-memory bundle.

    Returns a dict with the scaled spectrogram, the time-domain output
    (band-limited), timing figures, and the method labels.
    """
    method = method or cfg["method"]
    sibf_cfg = sibf_cfg or sibf_from_config(cfg)
    x, r = bundle.x, bundle.reference
    stft_cfg = bundle.stft_config
    n_samples = bundle.obs_time.shape[1]
    duration = n_samples / bundle.sample_rate
    oracle = bundle.x_tgt if sibf_cfg.scaling == "ideal" else None

    start = time.perf_counter()
    init_seconds = 0.0
    n_failed = 0
    if method == "sibf":
        if sibf_cfg.mode == "batch":
            res = extract_batch(x, r, sibf_cfg, oracle_target=oracle)
            y_scaled = res.y_scaled
            n_failed = res.filt.n_failed
        else:
            res = run_per_frame(x, r, sibf_cfg, oracle_target=oracle)
            y_scaled = res.y_scaled
            init_seconds = res.init_seconds
            n_failed = res.n_failed
        model_label = sibf_cfg.model.kind
    elif method == "ive_constrained":
        if sibf_cfg.mode not in ("batch", "rls"):
            raise UsageError("ive_constrained supports batch and rls modes only")
        y_scaled = baselines.ive_constrained_extract(
            x, r, mode=sibf_cfg.mode, ref_mic=sibf_cfg.ref_mic, g=sibf_cfg.g,
            t_b=sibf_cfg.t_b, k_aux=sibf_cfg.k_aux,
            pm_iterations=sibf_cfg.pm_iterations)
        model_label = "ive_tv_laplacian"
    elif method == "mmse":
        if sibf_cfg.mode == "batch":
            y_scaled, _ = baselines.mmse_extract_batch(x, r, sibf_cfg.ref_mic)
        elif sibf_cfg.mode == "rls":
            y_scaled, _ = baselines.mmse_extract_online(
                x, r, sibf_cfg.ref_mic, g=sibf_cfg.g,
                t_b=sibf_cfg.resolved_t_b)
        else:
            raise UsageError("mmse supports batch and rls modes only")
        model_label = "-"
    else:
        raise UsageError(f"unknown method: {method!r}")
    elapsed = time.perf_counter() - start

    limited = band_limit(y_scaled, cfg["band"]["lo_hz"], cfg["band"]["hi_hz"],
                         bundle.sample_rate, stft_cfg.fft_size)
    wave = istft(limited, stft_cfg, length=n_samples)
    total_bins = y_scaled.shape[0] * y_scaled.shape[1]
    frac = n_failed / total_bins if total_bins else 0.0
    if frac > cfg["io"]["max_failed_bin_fraction"]:
        raise NumericFailure(
            f"{n_failed} failed bin-frames ({frac:.1%}) exceed the threshold")
    return {
        "method": method, "model": model_label, "mode": sibf_cfg.mode,
        "scaling": sibf_cfg.scaling if method == "sibf" else "swf",
        "spectrogram": y_scaled, "wave": wave,
        "rtf": elapsed / duration, "init_seconds": init_seconds,
        "elapsed": elapsed, "duration": duration, "n_failed": n_failed,
    }


def _report_for(bundle, result, utterance_id):
    obs = bundle.obs_time[bundle.spec.ref_mic]
    sdr_obs = metrics.si_sdr(obs, bundle.target_time)
    sdr_out = metrics.si_sdr(result["wave"], bundle.target_time)
    return metrics.MetricReport(
        utterance_id=utterance_id, method=result["method"], model=result["model"],
        mode=result["mode"], scaling=result["scaling"],
        sdr_obs=sdr_obs, sdr_out=sdr_out, rtf=result["rtf"])


# ---------------------------------------------------------------- commands

def cmd_simulate(args):
    cfg = load_config(args.config, args.set)
    spec = scenario_from_config(cfg)
    stft_cfg = stft_from_config(cfg)
    count = args.count
    base_out = Path(args.out)
    for i in range(count):
        spec_i = spec if count == 1 else ScenarioSpec(
            **{**asdict(spec), "seed": spec.seed + i})
        bundle = generate_scenario(spec_i, stft_cfg)
        out_dir = base_out if count == 1 else base_out / f"scenario_{i:03d}"
        path = write_scenario(bundle, out_dir, cfg["io"]["wav_format"])
        print(f"wrote {path}")
    return 0


def _bundle_from_args(args, cfg):
    if args.scenario is not None:
        return load_scenario_dir(args.scenario)
    if not args.obs or args.reference is None:
        raise UsageError("need --scenario, or --obs files with --reference")
    signals, rate = io.read_observation(list(args.obs))
    stft_cfg = stft_from_config(cfg)
    x = stft_multi(signals, stft_cfg)
    r = io.read_magnitude(args.reference)
    if r.shape != x.shape[1:]:
        raise UsageError(f"reference shape {r.shape} does not match "
                         f"observation spectrogram {x.shape[1:]}")
    # minimal stand-in bundle: no oracle decomposition available
    from .synth import OracleBundle, ScenarioSpec as _Spec
    spec = _Spec(n_mics=signals.shape[0], n_sources=1, sample_rate=rate,
                 duration=signals.shape[1] / rate,
                 ref_mic=cfg["sibf"]["ref_mic"], diffuse_level_db=None)
    return OracleBundle(
        spec=spec, stft_config=stft_cfg, x=x, x_tgt=None, x_itf=None,
        reference=r, reference_clean=r, obs_time=signals,
        target_time=None, itf_time=None, mixing_condition=float("nan"))


def cmd_extract(args):
    cfg = load_config(args.config, args.set)
    bundle = _bundle_from_args(args, cfg)
    sibf_cfg = sibf_from_config(cfg)
    if sibf_cfg.scaling == "ideal" and bundle.x_tgt is None:
        raise UsageError("ideal scaling requires oracle scenario data")
    result = run_method(bundle, cfg, sibf_cfg=sibf_cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_wav(out / "enhanced.wav", result["wave"], bundle.sample_rate,
                 cfg["io"]["wav_format"])
    ref_wave = istft(
        combine_magnitude_phase(bundle.reference, bundle.x[bundle.spec.ref_mic]),
        bundle.stft_config, length=bundle.obs_time.shape[1])
    io.write_wav(out / "reference.wav", ref_wave, bundle.sample_rate,
                 cfg["io"]["wav_format"])
    if bundle.target_time is not None:
        rep = _report_for(bundle, result, utterance_id=args.scenario or "input")
        metrics.write_report(out / "metrics.csv", [rep])
        print(f"sdr_obs={rep.sdr_obs:.2f} dB  sdr_out={rep.sdr_out:.2f} dB  "
              f"delta={rep.delta_sdr:.2f} dB  rtf={rep.rtf:.3f}")
    else:
        print(f"rtf={result['rtf']:.3f} (no ground truth; metrics skipped)")
    print(f"wrote {out / 'enhanced.wav'}")
    return 0


def cmd_compare(args):
    cfg = load_config(args.config, args.set)
    dirs = _scenario_dirs(args)
    rows = []
    for d in dirs:
        bundle = load_scenario_dir(d)
        uid = d.name
        obs = bundle.obs_time[bundle.spec.ref_mic]
        sdr_obs = metrics.si_sdr(obs, bundle.target_time)
        ref_wave = istft(
            combine_magnitude_phase(bundle.reference, bundle.x[bundle.spec.ref_mic]),
            bundle.stft_config, length=obs.size)
        rows.append(metrics.MetricReport(
            utterance_id=uid, method="observation", model="-", mode="-",
            scaling="-", sdr_obs=sdr_obs, sdr_out=sdr_obs))
        rows.append(metrics.MetricReport(
            utterance_id=uid, method="reference", model="-", mode="batch",
            scaling="-", sdr_obs=sdr_obs,
            sdr_out=metrics.si_sdr(ref_wave, bundle.target_time)))
        for method in ("sibf", "ive_constrained", "mmse"):
            result = run_method(bundle, cfg, method=method)
            rows.append(_report_for(bundle, result, uid))
    rows.sort(key=lambda rep: (rep.utterance_id, rep.method))
    metrics.write_report(args.out, rows)
    print(f"wrote {args.out} ({len(rows)} rows)")
    return 0


def cmd_sweep(args):
    cfg = load_config(args.config, args.set)
    dirs = _scenario_dirs(args)
    bundles = [load_scenario_dir(d) for d in dirs]
    grid = cfg["sweep"]
    out_rows = []
    for rho in grid["rho"]:
        for beta in grid["beta"]:
            for eps in grid["epsilon"]:
                cell_cfg = copy.deepcopy(cfg)
                cell_cfg["sibf"]["model"].update(
                    {"kind": "tv_gg", "rho": rho, "beta": beta, "epsilon": eps})
                deltas, errors = [], 0
                for d, bundle in zip(dirs, bundles):
                    try:
                        result = run_method(bundle, cell_cfg, method="sibf")
                        rep = _report_for(bundle, result, d.name)
                        deltas.append(rep.delta_sdr)
                    except Exception:
                        errors += 1
                out_rows.append({
                    "rho": rho, "beta": beta, "epsilon": eps,
                    "iterative": rho != 2.0,
                    "mean_delta_sdr": float(np.mean(deltas)) if deltas else float("nan"),
                    "n_scenarios": len(deltas), "n_errors": errors,
                })
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(out_rows[0].keys()))
        writer.writeheader()
        writer.writerows(out_rows)
    print(f"wrote {args.out} ({len(out_rows)} cells)")
    return 0


def cmd_bench(args):
    cfg = load_config(args.config, args.set)
    dirs = _scenario_dirs(args)
    bundles = [load_scenario_dir(d) for d in dirs]
    rows = []
    for mode in cfg["bench"]["modes"]:
        per_utt = []
        for bundle in bundles:
            sibf_cfg = sibf_from_config(cfg, mode=mode)
            result = run_method(bundle, cfg, method="sibf", sibf_cfg=sibf_cfg)
            t_seg = result["duration"]
            t_b_s = (0.0 if mode == "batch" else
                     min(sibf_cfg.resolved_t_b, bundle.x.shape[2])
                     * bundle.stft_config.hop_size / bundle.sample_rate)
            lat = metrics.latency_model(t_b_s, result["init_seconds"],
                                        result["rtf"], t_seg, mode=mode)
            per_utt.append((result["rtf"], result["init_seconds"], lat))
        rtfs = [p[0] for p in per_utt]
        inits = [p[1] for p in per_utt]
        rows.append({
            "mode": mode,
            "t_b_frames": "-" if mode == "batch" else sibf_from_config(cfg, mode=mode).resolved_t_b,
            "t_init_mean": float(np.mean(inits)),
            "rtf_mean": float(np.mean(rtfs)),
            "l_begin_mean": float(np.mean([p[2].l_begin for p in per_utt])),
            "l_end_mean": float(np.mean([p[2].l_end for p in per_utt])),
            "l_begin_worst": float(np.max([p[2].l_begin for p in per_utt])),
            "l_end_worst": float(np.max([p[2].l_end for p in per_utt])),
        })
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {args.out} ({len(rows)} modes)")
    return 0


def cmd_print_config(args):
    cfg = load_config(args.config, args.set)
    json.dump(cfg, sys.stdout, indent=2)
    print()
    return 0


# ---------------------------------------------------------------- entry

def build_parser():
    parser = argparse.ArgumentParser(
        prog="sibf",
        description="Similarity-and-independence-aware beamformer harness")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="JSON config file")
    common.add_argument("--set", action="append", default=[],
                        metavar="KEY.PATH=VALUE", help="config override")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=lambda **kw: argparse.ArgumentParser(
                                    parents=[common], **kw))

    p = sub.add_parser("simulate", help="generate synthetic scenario files")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=1,
                   help="number of scenarios (seeds increment)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("extract", help="run one extraction")
    p.add_argument("--scenario", default=None, help="scenario directory")
    p.add_argument("--obs", nargs="*", default=None, help="observation WAV file(s)")
    p.add_argument("--reference", default=None, help="magnitude reference file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("compare", help="compare methods on a scenario set")
    p.add_argument("scenarios", nargs="+")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="hyperparameter grid of mean delta-SDR")
    p.add_argument("scenarios", nargs="+")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="latency/RTF benchmark across algorithms")
    p.add_argument("scenarios", nargs="+")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("print-config", help="print the merged configuration")
    p.set_defaults(func=cmd_print_config)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
