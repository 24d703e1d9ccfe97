"""Offline phase: reference distributions and drift thresholds."""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import EmptyLabel, InsufficientData, InvalidInput, RankError
from .stats import (
    DistanceKind,
    EmbeddingBatch,
    GaussianSummary,
    PcaProjector,
    distance,
    estimate_gaussian,
    fit_pca,
    project,
)


@dataclass(frozen=True)
class OfflineConfig:
    d_prime: int = 150
    d_prime_label: int = 75
    n_th: int = 10_000
    t_alpha: float = 0.01
    m_w: Optional[int] = None
    seed: int = 0
    metric: DistanceKind = DistanceKind.FDD

    def __post_init__(self):
        object.__setattr__(self, "metric", DistanceKind.parse(self.metric))
        if self.d_prime < 1 or self.d_prime_label < 1:
            raise InvalidInput("d_prime and d_prime_label must be positive")
        if self.n_th < 1:
            raise InvalidInput("n_th must be at least 1")
        if not 0.0 <= self.t_alpha < 1.0:
            raise InvalidInput("t_alpha must lie in [0, 1)")
        if self.m_w is not None and self.m_w < 2:
            raise InvalidInput("m_w must be at least 2")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["metric"] = self.metric.value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "OfflineConfig":
        known = {k: data[k] for k in cls.__dataclass_fields__ if k in data}
        return cls(**known)

    def config_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()


@dataclass(frozen=True, eq=False)
class BaselineModel:
    label_set: Tuple[int, ...]
    batch_pca: PcaProjector
    batch_gaussian: GaussianSummary
    label_pca: Dict[int, PcaProjector]
    label_gaussian: Dict[int, GaussianSummary]
    config: OfflineConfig

    @property
    def d(self) -> int:
        return self.batch_pca.d

    def fingerprint(self) -> str:
        """Content hash identifying this baseline (used as the monitor's baseline id)."""
        h = hashlib.sha256()
        h.update(repr(self.label_set).encode())
        arrays = [self.batch_pca.center, self.batch_pca.components,
                  self.batch_gaussian.mean, self.batch_gaussian.covariance]
        for label in self.label_set:
            arrays += [self.label_pca[label].center, self.label_pca[label].components,
                       self.label_gaussian[label].mean, self.label_gaussian[label].covariance]
        for arr in arrays:
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()[:16]

    def __eq__(self, other):
        if not isinstance(other, BaselineModel):
            return NotImplemented
        return (self.label_set == other.label_set
                and self.config == other.config
                and self.batch_pca == other.batch_pca
                and self.batch_gaussian == other.batch_gaussian
                and self.label_pca == other.label_pca
                and self.label_gaussian == other.label_gaussian)

    __hash__ = None


@dataclass(frozen=True)
class ThresholdSet:
    t_batch: float
    t_label: Dict[int, float]
    n_th: int
    t_alpha: float
    m_w: int
    metric: DistanceKind = DistanceKind.FDD

    def __post_init__(self):
        object.__setattr__(self, "metric", DistanceKind.parse(self.metric))
        if self.t_batch < 0 or any(v < 0 for v in self.t_label.values()):
            raise InvalidInput("thresholds must be non-negative")

    @classmethod
    def unbounded(cls, baseline: BaselineModel, m_w: int, metric=DistanceKind.FDD) -> "ThresholdSet":
        """Infinite thresholds: nothing is ever flagged. Handy for timing runs."""
        return cls(math.inf, {l: math.inf for l in baseline.label_set}, 0, 0.0, m_w, metric)


def fit_baseline(historical: EmbeddingBatch, config: OfflineConfig) -> BaselineModel:
    """Fit the per-batch and per-label PCAs and Gaussians on historical embeddings.

    Only the predicted labels are read; ground truth never enters the model.
    """
    if not historical.has_labels:
        raise InvalidInput("historical embeddings need predicted labels")
    d = historical.d
    if config.d_prime > d or config.d_prime_label > d:
        raise InvalidInput(
            f"reduced dimensions ({config.d_prime}, {config.d_prime_label}) exceed embedding width {d}")
    if historical.m < config.d_prime + 1:
        raise RankError("batch", historical.m, config.d_prime + 1)

    batch_pca = fit_pca(historical.vectors, config.d_prime)
    batch_gaussian = estimate_gaussian(project(batch_pca, historical.vectors))

    label_pca, label_gaussian = {}, {}
    for label in historical.label_set:
        rows = historical.rows_for(label)
        if rows.shape[0] == 0:
            raise EmptyLabel(f"label {label} has no historical samples")
        if rows.shape[0] < config.d_prime_label + 1:
            raise RankError(label, rows.shape[0], config.d_prime_label + 1)
        pca = fit_pca(rows, config.d_prime_label)
        label_pca[label] = pca
        label_gaussian[label] = estimate_gaussian(project(pca, rows))

    return BaselineModel(tuple(historical.label_set), batch_pca, batch_gaussian,
                         label_pca, label_gaussian, config)


def window_distances(baseline: BaselineModel, vectors: np.ndarray, labels: Optional[np.ndarray],
                     metric=DistanceKind.FDD):
    """Model one window and measure it against the baseline.

    Returns ``(batch_distance, {label: (distance or None, count)})``; a label
    distance is ``None`` when the window holds fewer than ``d'_l + 1`` rows of it.
    """
    reduced = project(baseline.batch_pca, vectors)
    per_label = {}
    if labels is not None:
        for label in baseline.label_set:
            rows = vectors[labels == label]
            per_label[label] = project(baseline.label_pca[label], rows) if rows.shape[0] else rows
    return reduced_distances(baseline, reduced, per_label, metric)


def reduced_distances(baseline: BaselineModel, batch_rows: np.ndarray, label_rows: dict,
                      metric=DistanceKind.FDD):
    """Same as :func:`window_distances` for rows already projected by the baseline PCAs."""
    batch = distance(metric, baseline.batch_gaussian, estimate_gaussian(batch_rows))
    required = baseline.config.d_prime_label + 1
    per_label = {}
    for label in baseline.label_set:
        rows = label_rows.get(label)
        count = 0 if rows is None else rows.shape[0]
        if count < required:
            per_label[label] = (None, count)
            continue
        g = estimate_gaussian(rows)
        per_label[label] = (distance(metric, baseline.label_gaussian[label], g), count)
    return batch, per_label


def window_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for window ``index`` so results ignore scheduling order."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def sample_threshold_distances(baseline: BaselineModel, threshold_data: EmbeddingBatch,
                               metric, n_th: int, m_w: int, seed: int, workers: int = 1):
    """Distances of ``n_th`` with-replacement windows of ``m_w`` rows drawn from ``threshold_data``.

    Returns the per-batch distances (length ``n_th``) and, per label, the
    distances of the windows where that label was estimable.
    """
    if threshold_data.m < m_w:
        raise InsufficientData(f"threshold data has {threshold_data.m} rows, window size is {m_w}")
    if threshold_data.d != baseline.d:
        raise InvalidInput(f"threshold data width {threshold_data.d} != baseline width {baseline.d}")
    metric = DistanceKind.parse(metric)
    labels = threshold_data.predicted_labels
    # projection is row-wise, so project the pool once and resample reduced rows
    batch_pool = project(baseline.batch_pca, threshold_data.vectors)
    label_pools = {label: project(baseline.label_pca[label], threshold_data.vectors)
                   for label in baseline.label_set} if labels is not None else {}

    def one(i):
        idx = window_rng(seed, i).integers(0, threshold_data.m, size=m_w)
        per_label = {}
        if labels is not None:
            window_labels = labels[idx]
            for label, pool in label_pools.items():
                per_label[label] = pool[idx[window_labels == label]]
        return reduced_distances(baseline, batch_pool[idx], per_label, metric)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(n_th)))
    else:
        results = [one(i) for i in range(n_th)]

    batch = np.array([r[0] for r in results])
    per_label = {
        label: np.array([r[1][label][0] for r in results if r[1][label][0] is not None])
        for label in baseline.label_set
    }
    return batch, per_label


def trimmed_max(distances, t_alpha: float) -> float:
    """Maximum after discarding the ``floor(t_alpha * n)`` largest values."""
    distances = np.sort(np.asarray(distances, dtype=np.float64))[::-1]
    if distances.size == 0:
        return math.inf
    cut = int(math.floor(t_alpha * distances.size + 1e-9))
    return float(distances[min(cut, distances.size - 1)])


def estimate_thresholds(baseline: BaselineModel, threshold_data: EmbeddingBatch,
                        metric=None, config: Optional[OfflineConfig] = None,
                        workers: int = 1) -> ThresholdSet:
    config = config or baseline.config
    metric = DistanceKind.parse(metric if metric is not None else config.metric)
    if config.m_w is None:
        raise InvalidInput("window size m_w is required for threshold estimation")
    batch, per_label = sample_threshold_distances(
        baseline, threshold_data, metric, config.n_th, config.m_w, config.seed, workers)
    t_label = {}
    for label, values in per_label.items():
        if values.size == 0:
            warnings.warn(f"label {label} never reached {config.d_prime_label + 1} samples in a "
                          f"threshold window; its threshold is infinite", RuntimeWarning)
        t_label[label] = trimmed_max(values, config.t_alpha)
    return ThresholdSet(trimmed_max(batch, config.t_alpha), t_label,
                        config.n_th, config.t_alpha, config.m_w, metric)
