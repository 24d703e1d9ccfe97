"""Online phase: per-window drift detection and the drift monitor log."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .errors import DimensionError, EmbDriftError, InvalidInput, RankError
from .offline import BaselineModel, ThresholdSet, window_distances
from .stats import DistanceKind, EmbeddingBatch

INSUFFICIENT = "insufficient"


@dataclass(frozen=True)
class LabelEntry:
    distance: Optional[float]  # None when the window held too few rows of the label
    drift: bool
    count: int

    @property
    def insufficient(self) -> bool:
        return self.distance is None


@dataclass(frozen=True)
class WindowReport:
    window_id: int
    batch_distance: float
    batch_drift: bool
    label_entries: Dict[int, LabelEntry]
    timestamp: Optional[str] = None
    warnings: tuple = ()

    @property
    def drifted_labels(self) -> List[int]:
        return [label for label, entry in self.label_entries.items() if entry.drift]


@dataclass
class MonitorLog:
    """Append-only record of window reports produced with one baseline/threshold pair."""

    baseline_id: str
    label_set: tuple = ()
    metric: DistanceKind = DistanceKind.FDD
    t_batch: Optional[float] = None
    t_label: Dict[int, float] = field(default_factory=dict)
    reports: List[WindowReport] = field(default_factory=list)

    @classmethod
    def for_model(cls, baseline: BaselineModel, thresholds: ThresholdSet) -> "MonitorLog":
        return cls(baseline.fingerprint(), tuple(baseline.label_set), thresholds.metric,
                   thresholds.t_batch, dict(thresholds.t_label))

    def append(self, report: WindowReport) -> None:
        if self.reports and report.window_id <= self.reports[-1].window_id:
            raise InvalidInput(
                f"window id {report.window_id} does not follow {self.reports[-1].window_id}")
        self.reports.append(report)

    def __len__(self):
        return len(self.reports)

    def __iter__(self):
        return iter(self.reports)

    def batch_distances(self) -> np.ndarray:
        return np.array([r.batch_distance for r in self.reports], dtype=np.float64)

    def batch_flags(self) -> np.ndarray:
        return np.array([r.batch_drift for r in self.reports], dtype=bool)


def analyze_window(baseline: BaselineModel, thresholds: ThresholdSet, window: EmbeddingBatch,
                   window_id: int = 0, timestamp: Optional[str] = None) -> WindowReport:
    """Compare one window against the baseline and flag drift.

    The PCAs and Gaussians fitted offline are reused as-is, so the cost does
    not depend on how much historical data built the baseline.
    """
    if window.d != baseline.d:
        raise DimensionError(f"window width {window.d} != baseline width {baseline.d}")
    required = baseline.config.d_prime + 1
    if window.m < required:
        raise RankError("batch", window.m, required)

    notes = []
    if window.m < thresholds.m_w:
        notes.append(f"short window: {window.m} rows < window size {thresholds.m_w}")
    elif window.m > thresholds.m_w:
        notes.append(f"oversized window: {window.m} rows > window size {thresholds.m_w}")

    labels = window.predicted_labels
    if labels is None:
        notes.append("window carries no predicted labels; per-label analysis skipped")
    else:
        unknown = sorted(set(np.unique(labels).tolist()) - set(baseline.label_set))
        if unknown:
            notes.append(f"labels {unknown} are not in the baseline label set and were ignored")

    batch, per_label = window_distances(baseline, window.vectors, labels, thresholds.metric)
    entries = {}
    for label in baseline.label_set:
        dist, count = per_label[label]
        if dist is None:
            entries[label] = LabelEntry(None, False, count)
        else:
            entries[label] = LabelEntry(dist, bool(dist > thresholds.t_label[label]), count)
    return WindowReport(window_id, batch, bool(batch > thresholds.t_batch), entries,
                        timestamp, tuple(notes))


def _failure_report(baseline: BaselineModel, window_id: int, timestamp, error) -> WindowReport:
    entries = {label: LabelEntry(None, False, 0) for label in baseline.label_set}
    return WindowReport(window_id, float("nan"), False, entries, timestamp,
                        (f"window failed: {type(error).__name__}: {error}",))


def run_stream(baseline: BaselineModel, thresholds: ThresholdSet,
               windows: Iterable[EmbeddingBatch],
               timestamps: Optional[Sequence[Optional[str]]] = None,
               first_id: int = 1) -> MonitorLog:
    """Analyze windows in order; a window that fails becomes a warning report."""
    log = MonitorLog.for_model(baseline, thresholds)
    for i, window in enumerate(windows):
        window_id = first_id + i
        stamp = timestamps[i] if timestamps is not None else None
        try:
            report = analyze_window(baseline, thresholds, window, window_id, stamp)
        except EmbDriftError as exc:
            report = _failure_report(baseline, window_id, stamp, exc)
        log.append(report)
    return log
