"""Drift monitor export: a curve table plus per-batch and per-label charts."""

from __future__ import annotations

import csv
import io as _io
import json
import math
from pathlib import Path
from typing import Dict, List

import matplotlib

matplotlib.use("Agg")
from matplotlib.figure import Figure  # noqa: E402

from .errors import NothingToRender  # noqa: E402
from .io import atomic_write  # noqa: E402
from .online import INSUFFICIENT, LabelEntry, MonitorLog, WindowReport  # noqa: E402

CURVES = "curves.csv"
BATCH_CHART = "batch_monitor.svg"
LABEL_CHART = "label_monitor.svg"
META = "monitor.json"


def _fmt(x) -> str:
    if x is None:
        return INSUFFICIENT
    return repr(float(x))


def curve_header(label_set) -> List[str]:
    header = ["window_id", "timestamp", "batch_distance", "batch_drift"]
    for label in label_set:
        header += [f"label_{label}_distance", f"label_{label}_drift"]
    return header


def curves_to_csv(log: MonitorLog) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(curve_header(log.label_set))
    for r in log.reports:
        row = [r.window_id, r.timestamp or "", _fmt(r.batch_distance), int(r.batch_drift)]
        for label in log.label_set:
            entry = r.label_entries.get(label)
            row += [_fmt(entry.distance if entry else None), int(bool(entry and entry.drift))]
        writer.writerow(row)
    return buf.getvalue()


def read_curves(path) -> List[Dict[str, object]]:
    """Parse a curve file back into dictionaries (distances as floats or ``None``)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        parsed = {}
        for key, value in row.items():
            if key == "window_id":
                parsed[key] = int(value)
            elif key == "timestamp":
                parsed[key] = value or None
            elif key.endswith("_drift"):
                parsed[key] = bool(int(value))
            else:
                parsed[key] = None if value == INSUFFICIENT else float(value)
        out.append(parsed)
    return out


def _xticks(ax, reports: List[WindowReport]):
    step = max(1, len(reports) // 20)
    ticks = reports[::step]
    ax.set_xticks([r.window_id for r in ticks])
    ax.set_xticklabels([f"{r.window_id}\n{r.timestamp}" if r.timestamp else str(r.window_id)
                        for r in ticks], fontsize=7)


def _batch_figure(log: MonitorLog) -> Figure:
    fig = Figure(figsize=(10, 3.2))
    ax = fig.add_subplot(111)
    xs = [r.window_id for r in log.reports]
    ys = [r.batch_distance for r in log.reports]
    ax.plot(xs, ys, color="tab:blue", lw=1.2, label="per-batch distance", gid="batch-curve")
    if log.t_batch is not None and math.isfinite(log.t_batch):
        ax.axhline(log.t_batch, color="tab:red", ls="--", lw=0.8, label="threshold")
    flagged = [r for r in log.reports if r.batch_drift]
    ax.fill_between(xs, 0, ys, where=[r.batch_drift for r in log.reports], color="tab:red",
                    alpha=0.15, step="mid")
    for r in flagged:
        ax.plot([r.window_id], [r.batch_distance], marker="^", color="tab:red", ls="none",
                gid=f"batch-warning-{r.window_id}")
    ax.set_ylabel(f"{log.metric.value.upper()} distance")
    ax.set_title("Per-batch drift monitor")
    _xticks(ax, log.reports)
    ax.legend(loc="upper left", fontsize=7)
    fig.tight_layout()
    return fig


def _label_figure(log: MonitorLog) -> Figure:
    fig = Figure(figsize=(10, 3.6))
    ax = fig.add_subplot(111)
    for label in log.label_set:
        pts = [(r.window_id, r.label_entries[label].distance) for r in log.reports
               if label in r.label_entries and r.label_entries[label].distance is not None]
        if not pts:
            continue
        line, = ax.plot([p[0] for p in pts], [p[1] for p in pts], lw=1.0, label=f"label {label}",
                        gid=f"label-curve-{label}")
        for r in log.reports:
            entry = r.label_entries.get(label)
            if entry is not None and entry.drift:
                ax.plot([r.window_id], [entry.distance], marker="^", color=line.get_color(),
                        ls="none", gid=f"label-warning-{label}-{r.window_id}")
    ax.set_ylabel(f"{log.metric.value.upper()} distance")
    ax.set_xlabel("window")
    ax.set_title("Per-label drift monitor")
    _xticks(ax, log.reports)
    if log.label_set:
        ax.legend(loc="upper left", fontsize=7, ncol=min(len(log.label_set), 6))
    fig.tight_layout()
    return fig


def _svg_bytes(fig: Figure) -> bytes:
    buf = _io.BytesIO()
    with matplotlib.rc_context({"svg.hashsalt": "embdrift", "svg.fonttype": "none"}):
        fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
    return buf.getvalue()


def render_monitor(log: MonitorLog, out_dir) -> Dict[str, Path]:
    """Write the curve table, both charts and a small metadata file into ``out_dir``."""
    if not log.reports:
        raise NothingToRender("the monitor log is empty")
    out_dir = Path(out_dir)
    paths = {
        "curves": atomic_write(out_dir / CURVES, curves_to_csv(log)),
        "batch_chart": atomic_write(out_dir / BATCH_CHART, _svg_bytes(_batch_figure(log))),
        "label_chart": atomic_write(out_dir / LABEL_CHART, _svg_bytes(_label_figure(log))),
    }
    meta = {
        "baseline_id": log.baseline_id,
        "metric": log.metric.value,
        "label_set": list(log.label_set),
        "t_batch": None if log.t_batch is None or math.isinf(log.t_batch) else log.t_batch,
        "t_label": {str(k): (None if math.isinf(v) else v) for k, v in log.t_label.items()},
        "windows": len(log.reports),
        "warnings": {str(r.window_id): list(r.warnings) for r in log.reports if r.warnings},
    }
    paths["meta"] = atomic_write(out_dir / META, json.dumps(meta, indent=1, sort_keys=True))
    return paths
