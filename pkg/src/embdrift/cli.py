"""Command-line entry point: ``embdrift <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import sys
from dataclasses import replace
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from . import evaluation, explain, io, monitor
from .errors import EmbDriftError, InvalidInput
from .offline import OfflineConfig, estimate_thresholds, fit_baseline
from .online import analyze_window, run_stream
from .stats import DistanceKind, EmbeddingBatch

# flag name -> OfflineConfig field
CONFIG_FLAGS = {
    "d_prime": "d_prime",
    "d_prime_label": "d_prime_label",
    "n_th": "n_th",
    "t_alpha": "t_alpha",
    "window_size": "m_w",
    "metric": "metric",
    "seed": "seed",
}
EXIT_IO = 3


class UsageError(Exception):
    pass


def _add_config_flags(p, window_required=False):
    g = p.add_argument_group("configuration (override --config)")
    g.add_argument("--config", type=Path, help="JSON file of configuration keys")
    g.add_argument("--d-prime", type=int, help="per-batch PCA components (default 150)")
    g.add_argument("--d-prime-label", type=int, help="per-label PCA components (default 75)")
    g.add_argument("--n-th", type=int, help="threshold windows to sample (default 10000)")
    g.add_argument("--t-alpha", type=float, help="threshold sensitivity (default 0.01)")
    g.add_argument("--window-size", type=int,
                   help="window size m_w" + (" (required)" if window_required else ""))
    g.add_argument("--metric", choices=[k.value for k in DistanceKind], help="distance (default fdd)")
    g.add_argument("--seed", type=int, help="random seed (default 0)")


def _config_values(args, base: dict = None) -> dict:
    values = dict(base or {})
    if getattr(args, "config", None) is not None:
        loaded = json.loads(args.config.read_text(encoding="utf-8"))
        if not isinstance(loaded, dict):
            raise UsageError("--config must hold a JSON object")
        for key, value in loaded.items():
            key = key.replace("-", "_")
            values[CONFIG_FLAGS.get(key, key)] = value
    for flag, field_name in CONFIG_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            values[field_name] = value
    unknown = set(values) - set(OfflineConfig.__dataclass_fields__)
    if unknown:
        raise UsageError(f"unknown configuration keys: {', '.join(sorted(unknown))}")
    return values


def _now(args) -> str:
    if getattr(args, "timestamp", None):
        return args.timestamp
    return datetime.now(timezone.utc).replace(microsecond=0).isoformat()


def _parse_levels(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _parse_ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


# -- subcommands ----------------------------------------------------------------

def cmd_fit_baseline(args):
    config = OfflineConfig(**_config_values(args))
    historical = io.read_embeddings(args.embeddings)
    baseline = fit_baseline(historical, config)
    meta = {"created": _now(args), "seed": config.seed, "historical_rows": historical.m}
    io.save_bundle(args.output, io.ModelBundle(baseline, None, meta))
    print(f"baseline {baseline.fingerprint()} written to {args.output}")


def cmd_estimate_threshold(args):
    bundle = io.load_bundle(args.model)
    values = _config_values(args, bundle.baseline.config.to_dict())
    if values.get("m_w") is None:
        raise UsageError("estimate-threshold requires --window-size")
    for key in ("d_prime", "d_prime_label"):
        if values[key] != getattr(bundle.baseline.config, key):
            raise UsageError(f"{key} is fixed by the baseline ({getattr(bundle.baseline.config, key)})")
    config = OfflineConfig(**values)
    data = io.read_embeddings(args.embeddings)
    thresholds = estimate_thresholds(bundle.baseline, data, config.metric, config)
    baseline = bundle.baseline
    # the bundle's config records the window size and metric the thresholds were built with
    baseline = replace(baseline, config=config)
    meta = {**bundle.metadata, "thresholds_created": _now(args), "threshold_rows": data.m}
    io.save_bundle(args.output, io.ModelBundle(baseline, thresholds, meta))
    print(f"T={thresholds.t_batch:.6g} ({config.metric.value}, n_th={config.n_th}, "
          f"t_alpha={config.t_alpha}); bundle written to {args.output}")


def _load_thresholded(path):
    bundle = io.load_bundle(path)
    if bundle.thresholds is None:
        raise UsageError(f"{path} has no thresholds; run estimate-threshold first")
    return bundle


def _read_stream(sources):
    if len(sources) == 1:
        entries = io.list_stream(sources[0])
    else:
        entries = io.list_stream(sources)
    if not entries:
        raise InvalidInput("the stream holds no window files")
    return entries


def cmd_monitor(args):
    bundle = _load_thresholded(args.bundle)
    entries = _read_stream(args.stream)
    windows = (io.read_embeddings(e.path) for e in entries)
    log = run_stream(bundle.baseline, bundle.thresholds, windows, [e.timestamp for e in entries])
    paths = monitor.render_monitor(log, args.output)
    flagged = int(log.batch_flags().sum())
    print(f"{len(log)} windows, {flagged} flagged; curves in {paths['curves']}")


def cmd_explain(args):
    bundle = _load_thresholded(args.bundle)
    window = io.read_embeddings(args.window, bundle.baseline.label_set)
    report = analyze_window(bundle.baseline, bundle.thresholds, window)
    labels = args.label if args.label else None
    reports = explain.explain_window(window, args.k_max, args.top_n, args.seed or 0, labels,
                                     include_batch=not args.labels_only)
    ids = None
    if args.ids is not None:
        ids = [line.rstrip("\n") for line in args.ids.read_text(encoding="utf-8").splitlines()]
        if len(ids) != window.m:
            raise InvalidInput(f"id file has {len(ids)} lines, window has {window.m} rows")
    doc = json.loads(explain.reports_to_json(reports, ids))
    doc["detection"] = {
        "metric": bundle.thresholds.metric.value,
        "batch_distance": report.batch_distance,
        "batch_drift": report.batch_drift,
        "labels": {str(l): {"distance": e.distance, "drift": e.drift, "count": e.count}
                   for l, e in report.label_entries.items()},
    }
    io.atomic_write(args.output, json.dumps(doc, indent=2))
    print(f"explanations for {len(reports)} scopes written to {args.output}")


def cmd_simulate(args):
    if args.window_size is None:
        raise UsageError("simulate requires --window-size")
    if args.pattern == "severity":
        schedule = evaluation.severity_schedule(_parse_levels(args.levels), args.per_level)
    else:
        schedule = evaluation.generate_pattern(args.pattern, total=args.total, onset=args.onset,
                                               level=args.level, start=args.start, step=args.step,
                                               block=args.block)
    seed = args.seed or 0
    out = Path(args.output)
    if args.synthetic:
        n = args.synth_rows
        pools = evaluation.synth_pools(args.synth_labels, args.synth_dim, 3 * n, args.drift_shift,
                                       seed=seed, drift_rows=n)
        hist, thr, clean = evaluation.split_batch(pools.nondrift, [n * args.synth_labels] * 3, seed=seed)
        pool_dir = out / "pools"
        for name, batch in (("historical", hist), ("threshold", thr), ("nondrift", clean),
                            ("drift", pools.drift)):
            io.write_embeddings(pool_dir / f"{name}.dlem", batch)
        pools = evaluation.SamplePools(clean, pools.drift)
    else:
        if args.nondrift is None or args.drift is None:
            raise UsageError("simulate needs --nondrift and --drift pools, or --synthetic")
        pools = evaluation.SamplePools(io.read_embeddings(args.nondrift), io.read_embeddings(args.drift))
    windows, _ = evaluation.build_stream(pools, schedule, args.window_size, seed)
    stamps = None
    if args.start_time:
        t0 = datetime.fromisoformat(args.start_time)
        stamps = [(t0 + i * timedelta(seconds=args.interval)).isoformat() for i in range(len(windows))]
    io.write_stream(out, windows, schedule.percents, stamps,
                    {"pattern": args.pattern, "window_size": args.window_size, "seed": seed})
    print(f"{len(windows)} windows written to {out}")


def cmd_evaluate(args):
    bundle = _load_thresholded(args.bundle)
    entries = _read_stream([args.stream])
    if any(e.drift_percent is None for e in entries):
        raise InvalidInput("evaluation needs a stream manifest with drift percentages")
    windows = (io.read_embeddings(e.path) for e in entries)
    log = run_stream(bundle.baseline, bundle.thresholds, windows, [e.timestamp for e in entries])
    percents = np.array([e.drift_percent for e in entries])
    flags = log.batch_flags()
    summary = {"metric": bundle.thresholds.metric.value, "windows": len(log),
               "baseline_id": log.baseline_id}
    by_level = {float(p): flags[percents == p] for p in np.unique(percents)}
    if 0.0 in by_level and len(by_level) > 1:
        summary.update(evaluation.evaluate_detection(by_level).to_dict())
    else:
        summary["accuracy"] = {str(k): float(np.mean(v == (k > 0))) for k, v in by_level.items()}
    try:
        summary["spearman"] = evaluation.spearman_corr(log.batch_distances(), percents)
    except EmbDriftError:
        summary["spearman"] = None
    out = Path(args.output)
    io.atomic_write(out / monitor.CURVES, monitor.curves_to_csv(log))
    io.atomic_write(out / "summary.json", json.dumps(summary, indent=1, sort_keys=True))
    print(json.dumps(summary, sort_keys=True))


def cmd_bench(args):
    rows = evaluation.benchmark_runtime(_parse_ints(args.window_sizes), _parse_ints(args.dims),
                                        repeats=args.repeats, d_prime=args.d_prime,
                                        d_prime_label=args.d_prime_label, seed=args.seed or 0)
    buf = _io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0].as_dict()), lineterminator="\r\n")
    writer.writeheader()
    for r in rows:
        writer.writerow(r.as_dict())
    if args.output:
        io.atomic_write(args.output, buf.getvalue())
    sys.stdout.write(buf.getvalue())


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="embdrift", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit-baseline", help="fit baseline distributions on historical embeddings")
    p.add_argument("embeddings", type=Path)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--timestamp", help="pin the creation timestamp recorded in the bundle")
    _add_config_flags(p)
    p.set_defaults(func=cmd_fit_baseline)

    p = sub.add_parser("estimate-threshold", help="estimate drift thresholds for a baseline")
    p.add_argument("model", type=Path)
    p.add_argument("embeddings", type=Path)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--timestamp")
    _add_config_flags(p, window_required=True)
    p.set_defaults(func=cmd_estimate_threshold)

    p = sub.add_parser("monitor", help="run the detector over a stream and export drift curves")
    p.add_argument("bundle", type=Path)
    p.add_argument("stream", nargs="+", type=Path, help="stream directory or window files")
    p.add_argument("-o", "--output", type=Path, required=True)
    p.set_defaults(func=cmd_monitor)

    p = sub.add_parser("explain", help="prototype explanations for one window")
    p.add_argument("bundle", type=Path)
    p.add_argument("window", type=Path)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--k-max", type=int, default=10)
    p.add_argument("--top-n", type=int, default=5)
    p.add_argument("--label", type=int, action="append", help="explain only these labels")
    p.add_argument("--labels-only", action="store_true", help="skip the whole-window explanation")
    p.add_argument("--ids", type=Path, help="file with one sample id per window row")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("simulate", help="build a drift stream from sample pools")
    p.add_argument("-o", "--output", type=Path, required=True)
    p.add_argument("--pattern", choices=["sudden", "incremental", "periodic", "severity"], default="sudden")
    p.add_argument("--total", type=int, default=100)
    p.add_argument("--onset", type=int, default=50)
    p.add_argument("--level", type=float, default=40.0)
    p.add_argument("--start", type=float, default=20.0)
    p.add_argument("--step", type=float, default=1.0)
    p.add_argument("--block", type=int, default=20)
    p.add_argument("--levels", default="0,5,10,15,20", help="severity pattern levels")
    p.add_argument("--per-level", type=int, default=100)
    p.add_argument("--nondrift", type=Path)
    p.add_argument("--drift", type=Path)
    p.add_argument("--synthetic", action="store_true", help="generate Gaussian pools instead")
    p.add_argument("--synth-labels", type=int, default=3)
    p.add_argument("--synth-dim", type=int, default=64)
    p.add_argument("--synth-rows", type=int, default=2000, help="rows per label per split")
    p.add_argument("--drift-shift", type=float, default=8.0)
    p.add_argument("--window-size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--start-time", help="ISO timestamp of the first window")
    p.add_argument("--interval", type=float, default=3600.0, help="seconds between windows")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="score detection on a simulated stream with truth")
    p.add_argument("bundle", type=Path)
    p.add_argument("stream", type=Path)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="time per-window analysis")
    p.add_argument("--window-sizes", default="1000,10000")
    p.add_argument("--dims", default="1000")
    p.add_argument("--d-prime", type=int, default=150)
    p.add_argument("--d-prime-label", type=int, default=75)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int)
    p.add_argument("-o", "--output", type=Path)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"embdrift {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except EmbDriftError as exc:
        print(f"embdrift {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, json.JSONDecodeError) as exc:
        print(f"embdrift {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
