"""Evaluation harness: drift schedules, stream simulation, scoring and timing."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats as sps

from .errors import InsufficientData, InvalidInput, InvalidSchedule, UndefinedCorrelation
from .offline import (
    BaselineModel,
    OfflineConfig,
    ThresholdSet,
    estimate_thresholds,
    fit_baseline,
    window_rng,
)
from .online import analyze_window
from .stats import DistanceKind, EmbeddingBatch

PAPER_LEVELS = (0, 5, 10, 15, 20)


@dataclass(frozen=True)
class DriftSchedule:
    """Per-window drift percentages, in stream order."""

    percents: Tuple[float, ...]

    def __post_init__(self):
        percents = tuple(float(p) for p in self.percents)
        if not percents:
            raise InvalidSchedule("a schedule needs at least one window")
        if any(not 0.0 <= p <= 100.0 for p in percents):
            raise InvalidSchedule("drift percentages must lie in [0, 100]")
        object.__setattr__(self, "percents", percents)

    def __len__(self):
        return len(self.percents)

    def as_array(self) -> np.ndarray:
        return np.array(self.percents)

    def truth(self) -> np.ndarray:
        return self.as_array() > 0


@dataclass(frozen=True)
class SamplePools:
    nondrift: EmbeddingBatch
    drift: EmbeddingBatch

    def __post_init__(self):
        if self.nondrift.d != self.drift.d:
            raise InvalidInput("pools have different embedding widths")


def _positive_int(name, value):
    if value is None or int(value) != value or value < 0:
        raise InvalidSchedule(f"{name} must be a non-negative integer, got {value!r}")
    return int(value)


def generate_pattern(kind: str, total: int = 100, onset: int = 50, level: float = 40.0,
                     start: float = 20.0, step: float = 1.0, block: int = 20) -> DriftSchedule:
    """Build a drift schedule.

    ``sudden``: zeros for the first ``onset`` windows, ``level`` afterwards.
    ``incremental``: zeros until ``onset``, then ``start`` growing by ``step``
    per window, capped at 100. ``periodic``: alternating blocks of ``block``
    clean windows and ``block`` windows at ``level``, clean first.
    """
    total = _positive_int("total", total)
    if total < 1:
        raise InvalidSchedule("total must be at least 1")
    if kind == "sudden":
        onset = _positive_int("onset", onset)
        if onset > total:
            raise InvalidSchedule("onset beyond the end of the stream")
        values = [0.0] * onset + [level] * (total - onset)
    elif kind == "incremental":
        onset = _positive_int("onset", onset)
        if onset > total:
            raise InvalidSchedule("onset beyond the end of the stream")
        if step < 0:
            raise InvalidSchedule("step must be non-negative")
        values = [0.0] * onset + [min(100.0, start + step * i) for i in range(total - onset)]
    elif kind == "periodic":
        block = _positive_int("block", block)
        if block < 1:
            raise InvalidSchedule("block must be at least 1")
        values = [0.0 if (i // block) % 2 == 0 else level for i in range(total)]
    else:
        raise InvalidSchedule(f"unknown pattern {kind!r}")
    return DriftSchedule(tuple(values))


def severity_schedule(levels: Sequence[float] = PAPER_LEVELS, per_level: int = 100) -> DriftSchedule:
    """``per_level`` consecutive windows at each drift level."""
    return DriftSchedule(tuple(float(lv) for lv in levels for _ in range(per_level)))


def drift_row_count(percent: float, m_w: int) -> int:
    # half-up rounding
    return int(math.floor(percent * m_w / 100.0 + 0.5))


def _balanced_counts(total: int, n_labels: int, rng) -> np.ndarray:
    counts = np.full(n_labels, total // n_labels)
    extra = rng.choice(n_labels, size=total % n_labels, replace=False)
    counts[extra] += 1
    return counts


def build_window(pools: SamplePools, percent: float, m_w: int, rng) -> Tuple[EmbeddingBatch, np.ndarray]:
    """One window: drifted rows plus a label-balanced clean remainder, all with replacement.

    Returns the window and a per-row boolean mask of drifted rows.
    """
    n_drift = drift_row_count(percent, m_w)
    nondrift = pools.nondrift
    if not nondrift.has_labels:
        raise InvalidInput("the non-drift pool needs predicted labels for balanced sampling")
    present = [l for l in nondrift.label_set if np.any(nondrift.predicted_labels == l)]
    parts, labels, drifted = [], [], []
    if n_drift:
        if pools.drift.m == 0:
            raise InsufficientData("schedule needs drifted rows but the drift pool is empty")
        idx = rng.integers(0, pools.drift.m, size=n_drift)
        parts.append(pools.drift.vectors[idx])
        labels.append(pools.drift.predicted_labels[idx] if pools.drift.has_labels
                      else np.full(n_drift, -1))
        drifted.append(np.ones(n_drift, dtype=bool))
    remainder = m_w - n_drift
    if remainder:
        counts = _balanced_counts(remainder, len(present), rng)
        for label, count in zip(present, counts):
            where = np.flatnonzero(nondrift.predicted_labels == label)
            idx = where[rng.integers(0, where.size, size=count)]
            parts.append(nondrift.vectors[idx])
            labels.append(np.full(count, label))
            drifted.append(np.zeros(count, dtype=bool))
    vectors = np.concatenate(parts)
    labels = np.concatenate(labels)
    drifted = np.concatenate(drifted)
    order = rng.permutation(m_w)
    label_set = sorted(set(nondrift.label_set) | set(pools.drift.label_set or ()) | set(np.unique(labels).tolist()))
    return EmbeddingBatch(vectors[order], labels[order], tuple(label_set)), drifted[order]


def build_stream(pools: SamplePools, schedule: DriftSchedule, m_w: int, seed: int = 0,
                 return_masks: bool = False):
    """Materialise a stream of windows following ``schedule``.

    Returns ``(windows, truth)`` where ``truth[i]`` is True when window ``i``
    contains any drift; with ``return_masks`` a third element lists per-row
    drift masks.
    """
    if m_w < 1:
        raise InvalidInput("window size must be positive")
    if pools.nondrift.m == 0 and any(p < 100 for p in schedule.percents):
        raise InsufficientData("schedule needs clean rows but the non-drift pool is empty")
    windows, masks = [], []
    for i, percent in enumerate(schedule.percents):
        window, mask = build_window(pools, percent, m_w, window_rng(seed, i))
        windows.append(window)
        masks.append(mask)
    truth = schedule.truth()
    if return_masks:
        return windows, truth, masks
    return windows, truth


def harmonic_drift_detection(a_nodrift: float, a_drift: float) -> float:
    if a_nodrift <= 0 or a_drift <= 0:
        return 0.0
    return 2.0 / (1.0 / a_nodrift + 1.0 / a_drift)


@dataclass(frozen=True)
class DetectionScores:
    accuracy: Dict[float, float]
    a_drift: float
    h_dd: float

    def to_dict(self) -> dict:
        return {"accuracy": {str(k): v for k, v in self.accuracy.items()},
                "a_drift": self.a_drift, "h_dd": self.h_dd}


def evaluate_detection(predictions: Dict[float, Sequence[bool]],
                       truths: Optional[Dict[float, Sequence[bool]]] = None) -> DetectionScores:
    """Accuracy per drift level and the harmonic drift-detection score.

    ``predictions`` maps a drift percentage to the window flags observed at
    that level. Truth defaults to "drift present iff the level is above 0".
    """
    if 0 not in predictions and 0.0 not in predictions:
        raise InvalidInput("predictions must include the 0% (no drift) level")
    levels = sorted(float(k) for k in predictions)
    if len(levels) < 2:
        raise InvalidInput("predictions need at least one drifted level")
    accuracy = {}
    for level in levels:
        flags = np.asarray(predictions.get(level, predictions.get(int(level))), dtype=bool)
        if truths is not None:
            truth = np.asarray(truths.get(level, truths.get(int(level))), dtype=bool)
        else:
            truth = np.full(flags.shape, level > 0)
        accuracy[level] = float(np.mean(flags == truth)) if flags.size else float("nan")
    return scores_from_accuracy(accuracy)


def scores_from_accuracy(accuracy: Dict[float, float]) -> DetectionScores:
    accuracy = {float(k): float(v) for k, v in accuracy.items()}
    if 0.0 not in accuracy:
        raise InvalidInput("accuracies must include the 0% level")
    drifted = [v for k, v in accuracy.items() if k > 0]
    if not drifted:
        raise InvalidInput("accuracies need at least one drifted level")
    a_drift = float(np.mean(drifted))
    return DetectionScores(accuracy, a_drift, harmonic_drift_detection(accuracy[0.0], a_drift))


def spearman_corr(x, y) -> float:
    """Spearman rank correlation with average ranks for ties."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise InvalidInput("spearman_corr needs two 1-D sequences of equal length")
    if x.size < 2:
        raise InvalidInput("spearman_corr needs at least two points")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise UndefinedCorrelation("correlation is undefined for a constant sequence")
    rx = sps.rankdata(x) - (x.size + 1) / 2.0
    ry = sps.rankdata(y) - (y.size + 1) / 2.0
    r = float(rx @ ry / math.sqrt((rx @ rx) * (ry @ ry)))
    return min(1.0, max(-1.0, r))


def synth_pools(n_labels: int, d: int, rows_per_label: int, drift_shift: float, seed: int = 0,
                label_separation: float = 10.0, drift_rows: Optional[int] = None,
                host_label: int = 0, sigma: float = 1.0,
                direction: str = "radial") -> SamplePools:
    """Synthetic stand-in for classifier embeddings.

    Clean rows come from ``n_labels`` isotropic Gaussians whose means sit
    pairwise ``label_separation`` apart. Drifted rows come from one extra
    component displaced by ``drift_shift * sigma`` from the ``host_label``
    mean. With ``direction="radial"`` the displacement points from the
    centroid of the label means through the host mean, i.e. beyond the host
    concept; ``"orthogonal"`` uses a direction orthogonal to every label
    mean. Every row is labelled by its nearest label mean, as a classifier
    would.

    Label means and the drift direction depend only on ``(seed, n_labels, d)``
    so pools drawn with different ``rows_per_label`` share one geometry.
    """
    if drift_shift < 0:
        raise InvalidInput("drift_shift must be non-negative")
    if n_labels < 1 or rows_per_label < 1 or d < n_labels + 1:
        raise InvalidInput("need n_labels >= 1, rows_per_label >= 1 and d > n_labels")
    geometry = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
    basis, _ = np.linalg.qr(geometry.standard_normal((d, n_labels + 1)))
    means = (label_separation / math.sqrt(2.0)) * basis[:, :n_labels].T
    if direction == "radial" and n_labels > 1:
        outward = means[host_label] - means.mean(axis=0)
        unit = outward / np.linalg.norm(outward)
    elif direction in ("radial", "orthogonal"):
        unit = basis[:, n_labels]
    else:
        raise InvalidInput(f"unknown drift direction {direction!r}")
    drift_mean = means[host_label] + drift_shift * sigma * unit

    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))
    clean = np.concatenate([means[l] + sigma * rng.standard_normal((rows_per_label, d))
                            for l in range(n_labels)])
    n_drift = rows_per_label if drift_rows is None else int(drift_rows)
    drift = drift_mean + sigma * rng.standard_normal((n_drift, d))

    def nearest(rows):
        sq = (means ** 2).sum(axis=1)[None, :] - 2.0 * rows @ means.T
        return np.argmin(sq, axis=1)

    label_set = tuple(range(n_labels))
    return SamplePools(EmbeddingBatch(clean, nearest(clean), label_set),
                       EmbeddingBatch(drift, nearest(drift), label_set))


def split_batch(batch: EmbeddingBatch, sizes: Sequence[int], seed: int = 0) -> List[EmbeddingBatch]:
    """Shuffle rows and cut consecutive, disjoint parts of the given sizes."""
    if sum(sizes) > batch.m:
        raise InsufficientData(f"cannot take {sum(sizes)} rows from a batch of {batch.m}")
    order = np.random.default_rng(seed).permutation(batch.m)
    parts, start = [], 0
    for size in sizes:
        parts.append(batch.take(order[start:start + size]))
        start += size
    return parts


@dataclass
class SweepResult:
    scores: DetectionScores
    run_accuracy: List[Dict[float, float]]
    thresholds: List[ThresholdSet] = field(default_factory=list)
    distances: Dict[float, np.ndarray] = field(default_factory=dict)


def run_severity_sweep(baseline: BaselineModel, threshold_data: EmbeddingBatch, pools: SamplePools,
                       config: OfflineConfig, levels: Sequence[float] = PAPER_LEVELS,
                       windows_per_level: int = 100, runs: int = 5, seed: int = 0,
                       metric=None) -> SweepResult:
    """Accuracy per drift level averaged over independent runs.

    Thresholds are re-estimated in every run from a run-specific seed.
    """
    metric = DistanceKind.parse(metric if metric is not None else config.metric)
    per_run, threshold_sets = [], []
    distances = {float(lv): [] for lv in levels}
    for run in range(runs):
        run_seed = int(np.random.SeedSequence(seed, spawn_key=(run,)).generate_state(1)[0])
        run_config = OfflineConfig(**{**config.to_dict(), "seed": run_seed, "metric": metric.value})
        thresholds = estimate_thresholds(baseline, threshold_data, metric, run_config)
        threshold_sets.append(thresholds)
        accuracy = {}
        for j, level in enumerate(levels):
            schedule = DriftSchedule((level,) * windows_per_level)
            windows, truth = build_stream(pools, schedule, config.m_w, seed=run_seed + 1 + j)
            reports = [analyze_window(baseline, thresholds, w) for w in windows]
            flags = np.array([r.batch_drift for r in reports])
            distances[float(level)].extend(r.batch_distance for r in reports)
            accuracy[float(level)] = float(np.mean(flags == truth))
        per_run.append(accuracy)
    mean_accuracy = {float(lv): float(np.mean([acc[float(lv)] for acc in per_run])) for lv in levels}
    return SweepResult(scores_from_accuracy(mean_accuracy), per_run, threshold_sets,
                       {k: np.array(v) for k, v in distances.items()})


def drift_curve(baseline: BaselineModel, thresholds: ThresholdSet, pools: SamplePools,
                schedule: DriftSchedule, m_w: int, seed: int = 0) -> Tuple[np.ndarray, float]:
    """Per-batch distances along a simulated stream and their Spearman correlation to the schedule."""
    windows, _ = build_stream(pools, schedule, m_w, seed)
    dist = np.array([analyze_window(baseline, thresholds, w).batch_distance for w in windows])
    return dist, spearman_corr(dist, schedule.as_array())


@dataclass
class BenchmarkRow:
    m_w: int
    d: int
    d_prime: int
    d_prime_label: int
    m_b: int
    mean_s: float
    std_s: float
    median_s: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _timed(fn, repeats):
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return np.array(samples)


def _synthetic_model(d, d_prime, d_prime_label, n_labels, m_b, seed):
    pools = synth_pools(n_labels, d, int(math.ceil(m_b / n_labels)), 0.0, seed=seed)
    historical = pools.nondrift.take(np.arange(min(m_b, pools.nondrift.m)))
    config = OfflineConfig(d_prime=d_prime, d_prime_label=d_prime_label, seed=seed)
    return fit_baseline(historical, config), pools


def benchmark_runtime(m_w_values: Sequence[int], d_values: Sequence[int], repeats: int = 5,
                      d_prime: int = 150, d_prime_label: int = 75, n_labels: int = 3,
                      m_b: Optional[int] = None, seed: int = 0,
                      baseline: Optional[BaselineModel] = None,
                      thresholds: Optional[ThresholdSet] = None) -> List[BenchmarkRow]:
    """Wall time of ``analyze_window`` for each (window size, embedding width) pair.

    A synthetic baseline is fitted per width unless ``baseline`` is given, in
    which case every entry of ``d_values`` must equal its width.
    """
    rows = []
    for d in d_values:
        if baseline is not None:
            if baseline.d != d:
                raise InvalidInput(f"supplied baseline has width {baseline.d}, not {d}")
            model = baseline
            dp, dpl = model.config.d_prime, model.config.d_prime_label
            mb = -1
        else:
            dp, dpl = min(d_prime, d - 1), min(d_prime_label, d - 1)
            mb = m_b or max(2 * d, 4 * dp, n_labels * (dpl + 1) * 2)
            model, _ = _synthetic_model(d, dp, dpl, n_labels, mb, seed)
        sample_pools = synth_pools(n_labels, d, max(m_w_values) // n_labels + 1, 4.0, seed=seed + 1)
        for m_w in m_w_values:
            th = thresholds or ThresholdSet.unbounded(model, m_w)
            window = sample_pools.nondrift.take(
                np.random.default_rng(seed).integers(0, sample_pools.nondrift.m, size=m_w))
            analyze_window(model, th, window)  # warm-up
            samples = _timed(lambda: analyze_window(model, th, window), repeats)
            rows.append(BenchmarkRow(m_w, d, dp, dpl, mb, float(samples.mean()),
                                     float(samples.std()), float(np.median(samples))))
    return rows


def compare_baseline_sizes(m_b_values: Sequence[int], m_w: int = 1000, d: int = 128,
                           d_prime: int = 32, d_prime_label: int = 16, n_labels: int = 3,
                           repeats: int = 30, seed: int = 0) -> Dict[int, np.ndarray]:
    """Per-window timings for baselines fitted on different amounts of history.

    Measurements are interleaved across baselines so that drift in machine
    load affects every configuration alike.
    """
    models = {mb: _synthetic_model(d, d_prime, d_prime_label, n_labels, mb, seed)[0]
              for mb in m_b_values}
    window_pool = synth_pools(n_labels, d, m_w, 0.0, seed=seed + 1).nondrift
    window = window_pool.take(np.random.default_rng(seed).integers(0, window_pool.m, size=m_w))
    thresholds = {mb: ThresholdSet.unbounded(model, m_w) for mb, model in models.items()}
    timings = {mb: [] for mb in m_b_values}
    for mb, model in models.items():
        analyze_window(model, thresholds[mb], window)
    for _ in range(repeats):
        for mb, model in models.items():
            t0 = time.perf_counter()
            analyze_window(model, thresholds[mb], window)
            timings[mb].append(time.perf_counter() - t0)
    return {mb: np.array(v) for mb, v in timings.items()}
