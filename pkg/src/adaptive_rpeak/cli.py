"""Command-line entry point: ``rpeak <command> ...``.

Commands
--------
detect      run a bench on ECG files, write peaks and a JSON report
eval        score peak files (or the committed fixtures) against annotations
energy      energy of detection reports, or the three-bench comparison
dist build  RR-ratio thresholds from annotated peaks, leave-one-out
synth       render a synthetic record and its ground truth
plotdata    columnar CSV series from a report, for external plotting
fixtures    regenerate, verify or fetch segment corpora

Outputs go to ``--out``, else ``$RPEAK_OUT``, else the working directory.
Every command computes everything first and then writes each file through
a temporary name, so a failing run leaves no partial outputs behind.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .adaptive import PipelineConfig, run_bench
from .bayeslope import BayeSlopeParams
from .corpus import (
    fetch_open_dataset,
    fixture_thresholds,
    fixtures_dir,
    load_fixtures,
    prepare_fixtures,
    read_manifest,
)
from .energy import (
    CostModel,
    PowerProfile,
    calibrate,
    compare_benches,
    default_cost_model,
    load_config,
    savings_vs_bayeslope,
    simulate,
    trace_from_decisions,
)
from .error_detector import build_thresholds, load_thresholds, rr_ratios, save_thresholds
from .errors import ConfigurationError, RPeakError, UnitError
from .evaluation import DEFAULT_TOL_MS, ScoreTable, score_region
from .hysteresis import HysteresisParams
from .preprocess import PreprocessConfig, preprocess_signal
from .schedule import BENCHES, WindowDecision
from .signal_io import SynthesisSpec, WindowGeometry, load_ecg, load_peaks, synthesize_ecg

log = logging.getLogger("adaptive_rpeak")

OUT_ENV = "RPEAK_OUT"


# ---------------------------------------------------------------------------
# output helpers


def out_dir(arg):
    path = Path(arg or os.environ.get(OUT_ENV) or ".")
    path.mkdir(parents=True, exist_ok=True)
    return path


def atomic_write(path, text):
    """Write `text` to `path` through a temporary file in the same directory."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_all(files):
    """Write ``{path: text}`` once everything has been computed."""
    return [atomic_write(p, t) for p, t in files.items()]


def _json(obj):
    def default(o):
        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, Path):
            return str(o)
        raise TypeError(f"cannot serialize {type(o).__name__}")

    return json.dumps(obj, indent=2, default=default, allow_nan=True) + "\n"


def _peaks_text(indices, fs):
    return "\n".join([f"fs={fs}"] + [str(int(i)) for i in indices]) + "\n"


# ---------------------------------------------------------------------------
# configuration


def _known_keys():
    keys = set()
    for cls in (PreprocessConfig, HysteresisParams, BayeSlopeParams):
        keys |= {f.name for f in dataclasses.fields(cls)}
    return keys


def load_pipeline_config(path, fs):
    """Pipeline configuration from a flat JSON object of stage keys."""
    if path is None:
        return PipelineConfig.for_fs(fs)
    with open(path) as fh:
        mapping = json.load(fh)
    if not isinstance(mapping, dict):
        raise ConfigurationError(f"{path}: expected a JSON object of configuration keys")
    unknown = set(mapping) - _known_keys()
    if unknown:
        raise ConfigurationError(f"{path}: unknown configuration keys {sorted(unknown)}")
    mapping.pop("fs", None)
    return PipelineConfig.from_mapping(mapping, fs=fs)


# ---------------------------------------------------------------------------
# detect


def _detect_one(job):
    path, fmt, bench, thr, config_path = job
    rec = load_ecg(path, fmt)
    cfg = load_pipeline_config(config_path, rec.fs)
    try:
        report = run_bench(rec, bench, thr, cfg)
    except RPeakError as exc:
        raise type(exc)(f"{path}: {exc}") from exc
    trace = trace_from_decisions(report)
    return rec.label, report.to_dict(), trace.to_dict()


def cmd_detect(args):
    if args.bench == "adaptive" and args.thr is None:
        raise ConfigurationError("the adaptive bench needs --thr (an RR-ratio threshold file)")
    thr = None
    if args.thr is not None:
        if not Path(args.thr).exists():
            raise ConfigurationError(f"threshold file {args.thr} does not exist")
        thr = load_thresholds(args.thr)
    for p in args.inputs:
        if not Path(p).exists():
            raise ConfigurationError(f"input {p} does not exist")
    jobs = [(p, args.format, args.bench, thr, args.config) for p in args.inputs]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_detect_one, jobs))
    else:
        results = [_detect_one(j) for j in jobs]

    dest = out_dir(args.out)
    files = {}
    for label, report, trace in results:
        stem = dest / f"{label}.{args.bench}"
        files[Path(f"{stem}.peaks")] = _peaks_text(report["peaks"], report["fs"])
        files[Path(f"{stem}.report.json")] = _json({**report, "activity_trace": trace})
    for path in write_all(files):
        log.info("wrote %s", path)
    for label, report, _ in results:
        print(f"{label}\t{args.bench}\tpeaks={len(report['peaks'])}\ttrigger_fraction={report['trigger_fraction']:.3f}")
    return 0


# ---------------------------------------------------------------------------
# eval


def _read_detection(path):
    """``(detector, label, indices, fs)`` from a peak file or a JSON report."""
    path = Path(path)
    if path.suffix == ".json":
        rep = json.loads(path.read_text())
        return rep["bench"], rep.get("label") or path.name.split(".")[0], np.asarray(rep["peaks"]), rep["fs"]
    peaks, fs = load_peaks(path)
    parts = path.name.split(".")
    detector = parts[1] if len(parts) > 2 else "detector"
    return detector, parts[0], peaks.indices, fs


def _segment_classes(manifest):
    if manifest is None:
        return {}
    return {e.id: e.segment_class for e in read_manifest(manifest)}


def _scoring_bounds(n_samples, fs, full):
    if full:
        return 0, n_samples
    w = WindowGeometry.from_fs(fs).warmup
    return w, n_samples - w


def cmd_eval(args):
    table = ScoreTable()
    if args.fixtures:
        thr = fixture_thresholds()
        for e in load_fixtures():
            rec, ann = e.load()
            lo, hi = _scoring_bounds(len(rec), rec.fs, args.full)
            for bench in args.benches:
                rep = run_bench(rec, bench, thr)
                table.add(bench, e.segment_class, score_region(rep.peaks.indices, ann.indices, rec.fs, lo, hi, args.tol))
    else:
        if not args.ann or not args.det:
            raise ConfigurationError("eval needs --ann and --det files (or --fixtures)")
        classes = _segment_classes(args.manifest)
        annotations = {}
        for p in args.ann:
            peaks, fs = load_peaks(p)
            annotations[Path(p).name.split(".")[0]] = (peaks.indices, fs)
        for p in args.det:
            detector, label, det, fs = _read_detection(p)
            if label not in annotations:
                raise ConfigurationError(f"{p}: no annotation file for segment {label!r}")
            ann, ann_fs = annotations[label]
            fs = fs or ann_fs or args.fs
            if ann_fs is not None and fs != ann_fs:
                raise UnitError(f"{p}: detections at {fs} Hz but annotations at {ann_fs} Hz")
            if fs is None:
                raise UnitError(f"{p}: sampling rate unknown; pass --fs")
            n = args.n_samples or (int(max(det.max(initial=0), ann.max(initial=0))) + 1)
            lo, hi = _scoring_bounds(n, fs, args.full or not args.n_samples)
            table.add(detector, classes.get(label, "all"), score_region(det, ann, fs, lo, hi, args.tol))
    if not table.rows:
        raise ConfigurationError("nothing to score")
    print(table.render())
    if args.out or os.environ.get(OUT_ENV):
        path = out_dir(args.out) / "eval.json"
        write_all({path: _json({"tol_ms": args.tol, "rows": table.records()})})
    return 0


# ---------------------------------------------------------------------------
# energy


def _energy_models(args):
    prof = load_config(args.power, PowerProfile) if args.power else PowerProfile()
    if args.cost:
        cost = load_config(args.cost, CostModel)
    elif args.power:
        cost = calibrate(prof=prof)
    else:
        cost = default_cost_model()
    return prof, cost


def _decisions_from_report(rep):
    return [WindowDecision(**d) for d in rep["decisions"]]


def cmd_energy(args):
    prof, cost = _energy_models(args)
    out = {"power_profile": prof.to_dict(), "cost_model": cost.to_dict(),
           "cycle_counts": "calibration artifacts" if cost.calibrated else "user supplied"}
    lines = []
    if args.bench_compare:
        fs = args.fs
        n = int(round(args.duration * fs))
        flags = set(int(k) for k in args.error_windows.split(",") if k.strip()) if args.error_windows else set()
        res = compare_benches(n, fs, cost, prof, flags)
        out["benches"] = {b: r.to_dict() for b, r in res.items()}
        out["adaptive_savings_pct"] = savings_vs_bayeslope(res["adaptive"], res["bayeslope"])
        for b, r in res.items():
            lines.append(f"{b:<12}{r.total_mj:9.3f} mJ")
        lines.append(f"adaptive saves {out['adaptive_savings_pct']:.1f}% vs bayeslope")
    for p in args.reports:
        rep = json.loads(Path(p).read_text())
        decisions = _decisions_from_report(rep)
        trace = trace_from_decisions(decisions, cost, prof, bench=rep["bench"], fs=rep["fs"])
        er = simulate(trace, prof)
        out.setdefault("reports", {})[str(p)] = {**er.to_dict(), "trigger_fraction": rep["trigger_fraction"]}
        lines.append(f"{rep.get('label', p)}\t{rep['bench']}\t{er.total_mj:.3f} mJ\ttrigger_fraction={rep['trigger_fraction']:.3f}")
    if not lines:
        raise ConfigurationError("energy needs report files or --bench-compare")
    print("\n".join(lines))
    if args.out or os.environ.get(OUT_ENV):
        write_all({out_dir(args.out) / "energy.json": _json(out)})
    return 0


# ---------------------------------------------------------------------------
# dist build


def cmd_dist(args):
    subjects = {}
    if args.manifest:
        for e in read_manifest(args.manifest):
            subjects[e.id] = rr_ratios(load_peaks(e.annotation_path)[0])
    for p in args.ann or ():
        subjects[Path(p).name.split(".")[0]] = rr_ratios(load_peaks(p)[0])
    if not subjects:
        raise ConfigurationError("dist build needs --manifest or --ann files")
    if args.exclude is not None and args.exclude not in subjects:
        raise ConfigurationError(f"excluded subject {args.exclude!r} is not in the pool")
    thr = build_thresholds(subjects, exclude=args.exclude)
    path = out_dir(args.out) / (args.name or "thresholds.txt")
    with tempfile.TemporaryDirectory() as tmp:
        save_thresholds(thr, Path(tmp) / "thr.txt")
        text = (Path(tmp) / "thr.txt").read_text()
    write_all({path: text})
    print(f"p_low={thr.p_low:.6g}\tp_high={thr.p_high:.6g}\tsource_count={thr.source_count}\t-> {path}")
    return 0


# ---------------------------------------------------------------------------
# synth


def _parse_ramp(text):
    a, sep, b = text.partition(":")
    if not sep:
        raise ConfigurationError(f"--hr-ramp expects START:END bpm, got {text!r}")
    return float(a), float(b)


def _parse_step(text):
    value, sep, at = text.partition("@")
    if not sep:
        raise ConfigurationError(f"--amp-step expects GAIN@TIMEs, got {text!r}")
    return float(value), float(at.rstrip("s"))


def synthesis_spec(args):
    if args.hr_ramp:
        a, b = _parse_ramp(args.hr_ramp)
        hr = ((0.0, a), (args.duration, b))
    else:
        hr = ((0.0, args.hr),)
    amp = [(0.0, 1.0)]
    for step in args.amp_step or ():
        gain, t = _parse_step(step)
        amp += [(t, amp[-1][1]), (t, gain)]
    gains = tuple(float(g) for g in args.beat_gains.split(":")) if args.beat_gains else (1.0,)
    bursts = []
    for b in args.noise_burst or ():
        t0, t1, sd = (float(v) for v in b.split(":"))
        bursts.append((t0, t1, sd))
    return SynthesisSpec(
        args.duration, hr, tuple(amp), t_wave_gain=args.t_gain, noise_sd=args.noise, seed=args.seed,
        fs=args.fs, beat_gains=gains, noise_bursts=tuple(bursts),
    )


def cmd_synth(args):
    rec, ann = synthesize_ecg(synthesis_spec(args))
    dest = out_dir(args.out)
    body = "\n".join(repr(float(v)) for v in rec.samples)
    files = {
        dest / f"{args.name}.csv": f"fs={rec.fs}\n{body}\n",
        dest / f"{args.name}.peaks": _peaks_text(ann.indices, rec.fs),
    }
    write_all(files)
    print(f"{args.name}: {len(rec)} samples at {rec.fs} Hz, {len(ann)} beats -> {dest}")
    return 0


# ---------------------------------------------------------------------------
# plotdata


def cmd_plotdata(args):
    rep = json.loads(Path(args.report).read_text())
    fs = rep["fs"]
    dest = out_dir(args.out)
    label = rep.get("label") or Path(args.report).name.split(".")[0]
    stem = f"{label}.{rep['bench']}"
    rows = ["window,t_start_s,t_stop_s,partial,checked,error_flag,bs_window_count,source"]
    for d in rep["decisions"]:
        rows.append(
            f"{d['window_index']},{d['start'] / fs:.4f},{d['stop'] / fs:.4f},{int(d['partial'])},"
            f"{int(d['checked'])},{int(d['error_flag'])},{d['bs_window_count']},{d['peaks_source']}"
        )
    files = {dest / f"{stem}.windows.csv": "\n".join(rows) + "\n"}
    sources = rep.get("sources") or [rep["bench"]] * len(rep["peaks"])
    prows = ["index,t_s,source"] + [f"{i},{i / fs:.4f},{s}" for i, s in zip(rep["peaks"], sources)]
    files[dest / f"{stem}.peaks.csv"] = "\n".join(prows) + "\n"
    if args.inputs:
        rec = load_ecg(args.inputs, args.format)
        if rec.fs != fs:
            raise UnitError(f"{args.inputs}: record at {rec.fs} Hz but report at {fs} Hz")
        cfg = load_pipeline_config(args.config, fs)
        relen = preprocess_signal(rec.samples, cfg.preprocess)
        srows = ["t_s,ecg_uv,relen"] + [
            f"{k / fs:.4f},{x:.6g},{r:.6g}" for k, (x, r) in enumerate(zip(rec.samples, relen))
        ]
        files[dest / f"{stem}.signal.csv"] = "\n".join(srows) + "\n"
    write_all(files)
    print(f"{stem}: trigger_fraction={rep['trigger_fraction']:.3f} -> {dest}")
    return 0


# ---------------------------------------------------------------------------
# fixtures


def cmd_fixtures(args):
    if args.fetch:
        entries = fetch_open_dataset(args.fetch, args.dest or out_dir(args.out), timeout=args.timeout)
        print(f"fetched and verified {len(entries)} segments")
        return 0
    if args.regenerate:
        entries = prepare_fixtures(args.dest)
        print(f"wrote {len(entries)} fixtures to {args.dest or fixtures_dir()}")
        return 0
    entries = load_fixtures(verify=True, directory=args.dest)
    for e in entries:
        print(f"{e.id}\t{e.segment_class}\tok")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_out(p):
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or the working directory)")


def build_parser():
    parser = argparse.ArgumentParser(prog="rpeak", description="Adaptive R-peak detection and energy modeling.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="run a detection bench")
    p.add_argument("--bench", choices=BENCHES, default="adaptive")
    p.add_argument("--in", dest="inputs", nargs="+", required=True, help="ECG files")
    p.add_argument("--format", choices=("csv", "wfdb_text"), default="csv")
    p.add_argument("--thr", help="RR-ratio threshold file (required for the adaptive bench)")
    p.add_argument("--config", help="JSON object of stage configuration keys")
    p.add_argument("--jobs", type=int, default=1, help="records processed in parallel")
    _add_out(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="score detections against annotations")
    p.add_argument("--det", nargs="+", help="peak files (<segment>.<detector>.peaks) or JSON reports")
    p.add_argument("--ann", nargs="+", help="annotation files (<segment>.peaks)")
    p.add_argument("--manifest", help="segment manifest supplying intensity classes")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL_MS, help="matching tolerance in ms")
    p.add_argument("--fs", type=int, help="sampling rate when the files carry none")
    p.add_argument("--n-samples", type=int, help="record length; enables the warm-up exclusion")
    p.add_argument("--full", action="store_true", help="score the whole record, warm-up included")
    p.add_argument("--fixtures", action="store_true", help="run and score the benches on the committed fixtures")
    p.add_argument("--benches", nargs="+", choices=BENCHES, default=list(BENCHES))
    _add_out(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("energy", help="energy of reports or of the three benches")
    p.add_argument("reports", nargs="*", help="JSON reports written by detect")
    p.add_argument("--bench-compare", action="store_true")
    p.add_argument("--power", help="power profile JSON")
    p.add_argument("--cost", help="cost model JSON (default: calibrated)")
    p.add_argument("--duration", type=float, default=25.0, help="record length for --bench-compare, in s")
    p.add_argument("--fs", type=int, default=250)
    p.add_argument("--error-windows", help="comma-separated flagged windows for the adaptive bench")
    _add_out(p)
    p.set_defaults(func=cmd_energy)

    p = sub.add_parser("dist", help="RR-ratio distribution tools")
    dsub = p.add_subparsers(dest="dist_command", required=True)
    b = dsub.add_parser("build", help="tail thresholds from pooled RR ratios")
    b.add_argument("--manifest", help="segment manifest; annotations sit next to the records")
    b.add_argument("--ann", nargs="+", help="annotation files, one subject each")
    b.add_argument("--exclude", help="subject left out of the pool")
    b.add_argument("--name", help="output file name (default thresholds.txt)")
    _add_out(b)
    b.set_defaults(func=cmd_dist)

    p = sub.add_parser("synth", help="synthetic ECG with ground truth")
    p.add_argument("--duration", type=float, default=30.0)
    p.add_argument("--hr", type=float, default=75.0, help="constant heart rate, bpm")
    p.add_argument("--hr-ramp", help="linear ramp START:END bpm over the record")
    p.add_argument("--amp-step", action="append", help="amplitude step GAIN@Ts (repeatable)")
    p.add_argument("--beat-gains", help="per-beat gain cycle, e.g. 1:0.1")
    p.add_argument("--t-gain", type=float, default=1.0, help="T-wave gain relative to R")
    p.add_argument("--noise", type=float, default=0.0, help="white noise sd, µV")
    p.add_argument("--noise-burst", action="append", help="extra noise T0:T1:SD (repeatable)")
    p.add_argument("--fs", type=int, default=250)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--name", default="synth")
    _add_out(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("plotdata", help="CSV series from a report")
    p.add_argument("report")
    p.add_argument("--in", dest="inputs", help="the record, to also export ECG and RelEn")
    p.add_argument("--format", choices=("csv", "wfdb_text"), default="csv")
    p.add_argument("--config")
    _add_out(p)
    p.set_defaults(func=cmd_plotdata)

    p = sub.add_parser("fixtures", help="verify, regenerate or fetch segment corpora")
    p.add_argument("--dest", help="corpus directory (default: the packaged fixtures)")
    p.add_argument("--regenerate", action="store_true")
    p.add_argument("--fetch", metavar="URL", help="manifest URL of a remote corpus")
    p.add_argument("--timeout", type=float, default=60.0)
    _add_out(p)
    p.set_defaults(func=cmd_fixtures)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (RPeakError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"rpeak {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
