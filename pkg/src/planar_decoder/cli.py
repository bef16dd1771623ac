"""Command-line driver for DEM generation, sampling, decoding and analysis."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import ExperimentReport, ReportRow, estimate_threshold, fit_lambda, read_report_csv
from .calibration import CorrelationAccumulator, Skeleton, correct_boundaries, heatmap_csv, report_from_accumulator
from .circuit import NOISE_TABLES, NoiseSpec, attach_noise, build_repetition_circuit, extract_dem, sample_syndromes
from .decoder import build_context, decode_batch
from .dem import DetectorErrorModel, SyndromeBatch, parse_dem, subsample, subsample_offsets, write_dem
from .errors import DemError, InsufficientDataError, NoCrossingError, NonPhysicalEstimateError
from .ising import log_partition
from .matching import MwpmDecoder, decode_mwpm_batch
from .syndromes import FORMATS, iter_b8_chunks, read_batch, write_batch

EXIT_OK, EXIT_FAIL, EXIT_VALIDATION, EXIT_UNSATISFIABLE = 0, 1, 2, 3
UNSATISFIABLE_LIMIT = 0.01
DECODERS = ("planar", "mwpm")
BENCH_EXPONENT_LIMIT = 2.0
REFERENCE_EXPONENT = 0.82


class CliError(Exception):
    """Validation failure reported with exit code 2."""


def _threads(args) -> int:
    if args.threads is not None:
        n = args.threads
    else:
        raw = os.environ.get("PLANAR_THREADS", "1")
        try:
            n = int(raw)
        except ValueError as exc:
            raise CliError(f"PLANAR_THREADS must be an integer, got {raw!r}") from exc
    if n < 1:
        raise CliError("thread count must be at least 1")
    return n


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _format_of(path: str, given: str | None) -> str:
    if given:
        return given
    return "b8" if str(path).endswith(".b8") else "01"


def _noisy(args):
    if args.code != "rep":
        raise CliError(f"unsupported code {args.code!r}; only 'rep' is available")
    return attach_noise(build_repetition_circuit(args.d, args.r), NoiseSpec(args.noise, args.p))


def _write(path: str | None, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _load_dem(path: str) -> DetectorErrorModel:
    return parse_dem(Path(path).read_text())


def _shape_of(model: DetectorErrorModel) -> tuple[int, int]:
    """``(d, r)`` of a repetition DEM from its detector coordinates."""
    if not model.has_coords or not model.detector_count:
        return 0, 0
    c = model.coord_array()
    return len(set(c[:, 0].tolist())) + 1, int(round(c[:, 1].max()))


def _decoder(name: str, model: DetectorErrorModel):
    if name == "planar":
        ctx = build_context(model)
        return lambda batch, threads: _planar_batch(ctx, batch, threads)
    dec = MwpmDecoder(model)
    return lambda batch, threads: _mwpm_batch(dec, batch, threads)


def _planar_batch(ctx, batch, threads):
    res = decode_batch(ctx, batch, threads=threads)
    return res.predictions, ~res.satisfiable


def _mwpm_batch(dec, batch, threads):
    res = decode_mwpm_batch(dec, batch, threads=threads)
    return res.predictions, ~res.satisfiable


def _batches(args, model: DetectorErrorModel):
    fmt = _format_of(args.input, args.format)
    if fmt == "b8":
        if args.obs_in is None and model.observable_count:
            raise CliError("b8 input needs --obs-in for observable flips")
        yield from iter_b8_chunks(
            args.input, model.detector_count, chunk_shots=args.chunk,
            observables_path=args.obs_in, observable_count=model.observable_count,
        )
    else:
        yield read_batch(args.input, model.detector_count, model.observable_count, fmt="01")


# ---------------------------------------------------------------------------
# Subcommands


def cmd_gen_dem(args) -> int:
    _write(args.out, write_dem(extract_dem(_noisy(args))))
    return EXIT_OK


def cmd_sample(args) -> int:
    noisy = _noisy(args)
    batch = sample_syndromes(noisy, args.shots, args.seed, threads=_threads(args))
    fmt = _format_of(args.out, args.format)
    if fmt == "b8" and args.obs_out is None:
        raise CliError("b8 output needs --obs-out for observable flips")
    write_batch(batch, args.out, fmt=fmt, observables_path=args.obs_out)
    if args.dem_out:
        Path(args.dem_out).write_text(write_dem(extract_dem(noisy)))
    return EXIT_OK


def cmd_decode(args) -> int:
    model = _load_dem(args.dem)
    threads = _threads(args)
    run = _decoder(args.decoder, model)
    shots = failures = bad = 0
    have_truth = True
    preds = []
    for batch in _batches(args, model):
        p, unsat = run(batch, threads)
        shots += batch.shots
        bad += int(np.count_nonzero(unsat))
        if batch.observables is None or not batch.observables.shape[1]:
            have_truth = False
        else:
            failures += int(np.count_nonzero((p != batch.observables[:, 0]) | unsat))
        if args.predictions:
            preds.append(p)
    if args.predictions:
        bits = np.concatenate(preds)[:, None] if preds else np.zeros((0, 1), dtype=bool)
        Path(args.predictions).write_text("".join("1\n" if b else "0\n" for b in bits[:, 0]))
    d, r = _shape_of(model)
    summary = {"decoder": args.decoder, "shots": shots, "unsatisfiable": bad}
    if have_truth and shots:
        report = ExperimentReport(seed=args.seed)
        report.add(ReportRow(args.decoder, d, r, None, shots, failures, Path(args.input).name, args.seed))
        _write(args.out, report.to_csv())
    else:
        _write(args.out, json.dumps(summary, sort_keys=True) + "\n")
    if shots and bad > UNSATISFIABLE_LIMIT * shots:
        print(f"{bad} of {shots} shots have unsatisfiable syndromes", file=sys.stderr)
        return EXIT_UNSATISFIABLE
    return EXIT_OK


def paired_comparison(planar_fail: np.ndarray, mwpm_fail: np.ndarray) -> dict:
    """Failure counts and the standard deviation of their paired difference."""
    n = len(planar_fail)
    only_p = int(np.count_nonzero(planar_fail & ~mwpm_fail))
    only_m = int(np.count_nonzero(mwpm_fail & ~planar_fail))
    diff = only_p - only_m
    var = only_p + only_m - (diff**2 / n if n else 0.0)
    sigma = math.sqrt(max(var, 0.0))
    fp, fm = int(planar_fail.sum()), int(mwpm_fail.sum())
    return {
        "shots": n,
        "planar_failures": fp,
        "mwpm_failures": fm,
        "only_planar": only_p,
        "only_mwpm": only_m,
        "sigma_paired": sigma,
        "planar_not_worse": bool(fp <= fm + 2 * sigma),
    }


def run_compare(model: DetectorErrorModel, batch: SyndromeBatch, threads: int = 1) -> dict:
    truth = batch.observables[:, 0]
    res = decode_batch(build_context(model), batch, threads=threads)
    pf = (res.predictions != truth) | ~res.satisfiable
    mres = decode_mwpm_batch(MwpmDecoder(model), batch, threads=threads)
    mf = (mres.predictions != truth) | ~mres.satisfiable
    return paired_comparison(pf, mf)


def cmd_compare(args) -> int:
    threads = _threads(args)
    if args.dem:
        if not args.input:
            raise CliError("--dem needs --in")
        model = _load_dem(args.dem)
        parts = list(_batches(args, model))
        batch = SyndromeBatch(
            np.vstack([b.detectors for b in parts]), np.vstack([b.observables for b in parts])
        )
        d, r = _shape_of(model)
        p = None
    else:
        noisy = _noisy(args)
        model = extract_dem(noisy)
        batch = sample_syndromes(noisy, args.shots, args.seed, threads=threads)
        d, r, p = args.d, args.r, args.p
    if batch.observables is None or not batch.observables.shape[1]:
        raise CliError("compare needs observable flips")
    out = run_compare(model, batch, threads)
    report = ExperimentReport(seed=args.seed)
    report.add(ReportRow("planar", d, r, p, out["shots"], out["planar_failures"], seed=args.seed))
    report.add(ReportRow("mwpm", d, r, p, out["shots"], out["mwpm_failures"], seed=args.seed))
    report.fits["paired"] = out
    _write(args.out, report.to_csv())
    if args.json:
        Path(args.json).write_text(report.to_json())
    return EXIT_OK


def cmd_calibrate(args) -> int:
    model = _load_dem(args.dem)
    acc = CorrelationAccumulator(Skeleton.from_model(model), heatmap=bool(args.heatmap))
    for batch in _batches(args, model):
        acc.update(batch)
    report = report_from_accumulator(acc)
    try:
        fixed = correct_boundaries(report, policy=args.policy, empirical=args.empirical)
    except NonPhysicalEstimateError as exc:
        raise CliError(str(exc)) from exc
    _write(args.out, write_dem(fixed.model))
    if args.log:
        Path(args.log).write_text(fixed.log_json())
    if args.heatmap:
        Path(args.heatmap).write_text(heatmap_csv(report))
    groups = len(report.pairs) + len(report.boundaries)
    if groups and len(fixed.corrections) > 0.1 * groups:
        print(f"warning: {len(fixed.corrections)} of {groups} estimates were corrected", file=sys.stderr)
    return EXIT_OK


def cmd_subsample(args) -> int:
    model = _load_dem(args.dem)
    parts = list(_batches(args, model))
    det = np.vstack([b.detectors for b in parts])
    obs = None if parts[0].observables is None else np.vstack([b.observables for b in parts])
    batch = SyndromeBatch(det, obs)
    source, _ = _shape_of(model)
    offsets = [args.offset] if args.offset is not None else subsample_offsets(source, args.target_d)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    windows = []
    for k in offsets:
        sub_batch, sub_model = subsample(batch, model, args.target_d, k)
        stem = f"d{args.target_d}_offset{k}"
        (out / f"{stem}.dem").write_text(write_dem(sub_model))
        write_batch(sub_batch, out / f"{stem}.01", fmt="01")
        windows.append({"offset": k, "dem": f"{stem}.dem", "shots": f"{stem}.01", "data_qubits": [k, k + args.target_d - 1]})
    # windows sharing data qubits see the same physical errors, so their failures are correlated
    overlapping = len(offsets) > 1 and min(np.diff(sorted(offsets))) < args.target_d
    manifest = {
        "source_distance": source, "target_distance": args.target_d, "shots": batch.shots,
        "windows": windows, "overlapping": bool(overlapping),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return EXIT_OK


def sweep(noise, distances, ps, shots, seed, decoder="planar", threads=1, rounds=None) -> list[ReportRow]:
    """Sample and decode every ``(d, p)`` point with ``r = d`` unless ``rounds`` is given."""
    rows = []
    for d in distances:
        r = rounds or d
        for p in ps:
            noisy = attach_noise(build_repetition_circuit(d, r), NoiseSpec(noise, p))
            batch = sample_syndromes(noisy, shots, seed, threads=threads)
            pred, unsat = _decoder(decoder, extract_dem(noisy))(batch, threads)
            fails = int(np.count_nonzero((pred != batch.observables[:, 0]) | unsat))
            rows.append(ReportRow(decoder, d, r, p, shots, fails, seed=seed))
    return rows


def cmd_threshold(args) -> int:
    if args.report:
        rows = [r for r in read_report_csv(Path(args.report).read_text()) if r.decoder == args.decoder]
    else:
        rows = sweep(args.noise, _ints(args.distances), _floats(args.ps), args.shots, args.seed, args.decoder, _threads(args))
    report = ExperimentReport(rows=rows, seed=args.seed)
    try:
        report.fits["threshold"] = estimate_threshold(rows, metric=args.metric)
    except NoCrossingError as exc:
        report.fits["threshold"] = {"error": str(exc)}
    if args.out:
        Path(args.out).write_text(report.to_csv())
    _write(args.json, report.to_json())
    return EXIT_FAIL if isinstance(report.fits["threshold"], dict) else EXIT_OK


def cmd_lambda(args) -> int:
    rows = [r for r in read_report_csv(Path(args.report).read_text()) if r.decoder == args.decoder]
    try:
        fit = fit_lambda(rows)
    except InsufficientDataError as exc:
        raise CliError(str(exc)) from exc
    report = ExperimentReport(rows=rows, seed=None)
    report.fits["lambda"] = fit
    _write(args.out, report.to_json())
    return EXIT_OK


def bench_log_partition(distances, repeats: int = 3) -> tuple[list[tuple[int, float]], float]:
    """Median ``log_partition`` time against spin count; returns points and fitted exponent."""
    points = []
    for d in distances:
        model = extract_dem(attach_noise(build_repetition_circuit(d, d), NoiseSpec("depolarizing", 0.01)))
        ctx = build_context(model)
        inst = ctx.dual_instances(np.zeros(ctx.edge_count, dtype=bool))
        spins = sum(i.spin_count for i in inst)
        for i in inst:
            log_partition(i)  # builds cached structures
        times = []
        for _ in range(repeats):
            t = time.perf_counter()
            for i in inst:
                log_partition(i)
            times.append(time.perf_counter() - t)
        points.append((spins, float(np.median(times))))
    n = np.log([p[0] for p in points])
    t = np.log([p[1] for p in points])
    slope = float(np.polyfit(n, t, 1)[0])
    return points, slope


def cmd_bench(args) -> int:
    points, slope = bench_log_partition(_ints(args.distances), args.repeats)
    body = {
        "points": [{"spins": s, "seconds": t} for s, t in points],
        "exponent": slope,
        "reference_exponent": REFERENCE_EXPONENT,
        "limit": BENCH_EXPONENT_LIMIT,
    }
    _write(args.out, json.dumps(body, indent=2) + "\n")
    if not slope < BENCH_EXPONENT_LIMIT:
        print(f"runtime exponent {slope:.2f} is not below {BENCH_EXPONENT_LIMIT}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def _add_circuit(p, shots=False):
    p.add_argument("--code", default="rep", choices=["rep"])
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--noise", choices=sorted(NOISE_TABLES), default="depolarizing")
    p.add_argument("--p", type=float, required=True)
    if shots:
        p.add_argument("--shots", type=int, default=10000)


def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None, help="defaults to $PLANAR_THREADS or 1")


def _add_input(p, required=True):
    p.add_argument("--in", dest="input", required=required)
    p.add_argument("--format", choices=FORMATS, default=None, help="inferred from the extension")
    p.add_argument("--obs-in", default=None, help="observable flips for b8 input")
    p.add_argument("--chunk", type=int, default=4096, help="shots per streamed b8 chunk")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="planar-decoder", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-dem", help="write the DEM of a noisy repetition-code circuit")
    _add_circuit(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_gen_dem)

    p = sub.add_parser("sample", help="sample detector and observable bits")
    _add_circuit(p, shots=True)
    _add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=FORMATS, default=None)
    p.add_argument("--obs-out", default=None)
    p.add_argument("--dem-out", default=None)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("decode", help="decode shots against a DEM")
    p.add_argument("--dem", required=True)
    _add_input(p)
    _add_common(p)
    p.add_argument("--decoder", choices=DECODERS, default="planar")
    p.add_argument("--out", default=None)
    p.add_argument("--predictions", default=None)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("compare", help="paired PLANAR vs MWPM failure counts on identical shots")
    p.add_argument("--code", default="rep", choices=["rep"])
    p.add_argument("--d", type=int, default=7)
    p.add_argument("--r", type=int, default=7)
    p.add_argument("--noise", choices=sorted(NOISE_TABLES), default="depolarizing")
    p.add_argument("--p", type=float, default=0.04)
    p.add_argument("--shots", type=int, default=10000)
    p.add_argument("--dem", default=None)
    _add_input(p, required=False)
    _add_common(p)
    p.add_argument("--out", default=None)
    p.add_argument("--json", default=None)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("calibrate", help="estimate priors from shot correlations")
    p.add_argument("--dem", required=True, help="skeleton DEM naming the detector pairs")
    _add_input(p)
    p.add_argument("--policy", choices=["clamp", "reject"], default="clamp")
    p.add_argument("--empirical", type=float, default=1e-4)
    p.add_argument("--out", default=None)
    p.add_argument("--log", default=None, help="JSON correction log")
    p.add_argument("--heatmap", default=None, help="CSV dump of all pair estimates")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("subsample", help="derive lower-distance datasets")
    p.add_argument("--dem", required=True)
    _add_input(p)
    p.add_argument("--target-d", type=int, required=True)
    p.add_argument("--offset", type=int, default=None, help="all offsets when omitted")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_subsample)

    p = sub.add_parser("threshold", help="sweep (d, p) and estimate the crossing")
    p.add_argument("--noise", choices=sorted(NOISE_TABLES), default="depolarizing")
    p.add_argument("--distances", default="5,9,13")
    p.add_argument("--ps", default="0.050,0.058,0.066,0.074,0.082")
    p.add_argument("--shots", type=int, default=20000)
    p.add_argument("--decoder", choices=DECODERS, default="planar")
    p.add_argument("--metric", choices=["per_round", "per_shot"], default="per_round")
    p.add_argument("--report", default=None, help="reuse rows from an existing CSV report")
    _add_common(p)
    p.add_argument("--out", default=None, help="CSV rows")
    p.add_argument("--json", default=None, help="JSON fit summary")
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("lambda", help="fit the suppression factor from a CSV report")
    p.add_argument("--report", required=True)
    p.add_argument("--decoder", choices=DECODERS, default="planar")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_lambda)

    p = sub.add_parser("bench", help="fit the runtime exponent of log_partition")
    p.add_argument("--distances", default="5,9,13,17,21,25")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, DemError, InsufficientDataError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
