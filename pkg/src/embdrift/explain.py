"""Prototype-based drift explanations.

Window embeddings are clustered with K-Means for every k in [2, k_max]; the
partition with the best silhouette wins and the rows nearest each centroid
become that cluster's prototypes.
"""

from __future__ import annotations

import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.metrics import silhouette_score

from .errors import DegenerateData, DimensionError, InvalidK
from .stats import EmbeddingBatch

SILHOUETTE_EXACT_LIMIT = 5000


@dataclass(frozen=True, eq=False)
class KMeansRun:
    assignment: np.ndarray
    centroids: np.ndarray
    inertia: float
    inertia_history: Tuple[float, ...]
    n_iter: int


@dataclass(frozen=True, eq=False)
class ClusteringResult:
    k: int
    assignment: np.ndarray
    centroids: np.ndarray
    silhouette: float
    inertia: float
    search: Dict[int, float] = field(default_factory=dict)  # k -> silhouette for every k tried
    inertia_history: Tuple[float, ...] = ()

    def cluster_sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.k)

    def __eq__(self, other):
        if not isinstance(other, ClusteringResult):
            return NotImplemented
        return (self.k == other.k and self.silhouette == other.silhouette
                and self.inertia == other.inertia
                and np.array_equal(self.assignment, other.assignment)
                and np.array_equal(self.centroids, other.centroids))

    __hash__ = None


@dataclass(frozen=True)
class ExplanationReport:
    scope: object  # "batch" or a label id
    clustering: ClusteringResult
    prototypes: List[List[Tuple[int, float]]]

    def to_dict(self, sample_ids: Optional[Sequence[str]] = None) -> dict:
        clusters = []
        sizes = self.clustering.cluster_sizes()
        for c, protos in enumerate(self.prototypes):
            entry = {
                "cluster": c,
                "size": int(sizes[c]),
                "prototypes": [{"index": int(i), "distance": float(dist)} for i, dist in protos],
            }
            if sample_ids is not None:
                for p in entry["prototypes"]:
                    p["id"] = sample_ids[p["index"]]
            clusters.append(entry)
        return {
            "scope": self.scope,
            "k": self.clustering.k,
            "silhouette": self.clustering.silhouette,
            "inertia": self.clustering.inertia,
            "silhouette_by_k": {str(k): v for k, v in self.clustering.search.items()},
            "clusters": clusters,
        }


def _sq_distances(rows, centroids):
    sq = (rows ** 2).sum(axis=1)[:, None] - 2.0 * rows @ centroids.T + (centroids ** 2).sum(axis=1)[None, :]
    return np.maximum(sq, 0.0)


def _kmeans_pp(rows, k, rng):
    n = rows.shape[0]
    centers = [rows[rng.integers(n)]]
    closest = _sq_distances(rows, centers[0][None, :])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total))
            idx = min(idx, n - 1)
        centers.append(rows[idx])
        closest = np.minimum(closest, _sq_distances(rows, rows[idx][None, :])[:, 0])
    return np.array(centers)


def kmeans(rows, k: int, rng, max_iter: int = 300, tol: float = 1e-6) -> KMeansRun:
    """One Lloyd run from a k-means++ start.

    Stops when the assignment is stable or the relative inertia decrease drops
    below ``tol``. The returned assignment is always nearest-centroid for the
    returned centroids.
    """
    rows = np.asarray(rows, dtype=np.float64)
    centroids = _kmeans_pp(rows, k, rng)
    sq = _sq_distances(rows, centroids)
    assignment = np.argmin(sq, axis=1)
    inertia = float(sq[np.arange(rows.shape[0]), assignment].sum())
    history = [inertia]
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        new_centroids = np.empty_like(centroids)
        for c in range(k):
            members = rows[assignment == c]
            if members.shape[0]:
                new_centroids[c] = members.mean(axis=0)
            else:
                # re-seed an empty cluster on the worst-served row
                far = int(np.argmax(sq[np.arange(rows.shape[0]), assignment]))
                new_centroids[c] = rows[far]
        sq = _sq_distances(rows, new_centroids)
        new_assignment = np.argmin(sq, axis=1)
        new_inertia = float(sq[np.arange(rows.shape[0]), new_assignment].sum())
        history.append(new_inertia)
        stable = np.array_equal(new_assignment, assignment)
        small_gain = inertia - new_inertia <= tol * max(inertia, np.finfo(float).tiny)
        centroids, assignment, inertia = new_centroids, new_assignment, new_inertia
        if stable or small_gain:
            break
    return KMeansRun(assignment, centroids, inertia, tuple(history), n_iter)


def _best_of(rows, k, seed, n_init, max_iter, tol):
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,)))
    best = None
    for _ in range(n_init):
        run = kmeans(rows, k, rng, max_iter, tol)
        if best is None or run.inertia < best.inertia:
            best = run
    return best


def _silhouette(rows, assignment, seed):
    n = rows.shape[0]
    if n > SILHOUETTE_EXACT_LIMIT:
        return float(silhouette_score(rows, assignment, sample_size=SILHOUETTE_EXACT_LIMIT,
                                      random_state=seed))
    return float(silhouette_score(rows, assignment))


def cluster_select(rows, k_max: int = 10, seed: int = 0, n_init: int = 10, max_iter: int = 300,
                   tol: float = 1e-6, workers: int = 1) -> ClusteringResult:
    """K-Means for k = 2..k_max, keeping the partition with the highest silhouette.

    Ties go to the smaller k. A k whose best run leaves a cluster empty (too
    few distinct rows) is skipped.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2:
        raise DimensionError("rows must be a 2-D matrix")
    n = rows.shape[0]
    if k_max < 2 or n < k_max:
        raise InvalidK(f"need 2 <= k_max <= n, got k_max={k_max}, n={n}")
    if not np.any(rows.var(axis=0) > 0):
        raise DegenerateData("rows have zero variance; silhouette is undefined")

    ks = [k for k in range(2, k_max + 1) if k < n]
    if not ks:
        raise InvalidK(f"no k in [2, {k_max}] leaves room for a silhouette with n={n}")
    job = lambda k: _best_of(rows, k, seed, n_init, max_iter, tol)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = dict(zip(ks, pool.map(job, ks)))
    else:
        runs = {k: job(k) for k in ks}

    search, best_k = {}, None
    for k in ks:
        run = runs[k]
        if len(np.unique(run.assignment)) < k:
            continue
        search[k] = _silhouette(rows, run.assignment, seed)
        if best_k is None or search[k] > search[best_k]:
            best_k = k
    if best_k is None:
        raise DegenerateData("no k produced a partition with non-empty clusters")
    run = runs[best_k]
    return ClusteringResult(best_k, run.assignment, run.centroids, search[best_k], run.inertia,
                            search, run.inertia_history)


def extract_prototypes(rows, clustering: ClusteringResult, top_n: int = 5,
                       scope="batch", index_map: Optional[Sequence[int]] = None) -> ExplanationReport:
    """The ``top_n`` members nearest each centroid, nearest first.

    ``index_map`` translates row positions in ``rows`` back to positions in a
    larger window (used for per-label explanations).
    """
    rows = np.asarray(rows, dtype=np.float64)
    prototypes = []
    for c in range(clustering.k):
        members = np.flatnonzero(clustering.assignment == c)
        dist = np.linalg.norm(rows[members] - clustering.centroids[c], axis=1)
        order = np.argsort(dist, kind="stable")[:top_n]
        picks = []
        for j in order:
            idx = int(members[j]) if index_map is None else int(index_map[members[j]])
            picks.append((idx, float(dist[j])))
        prototypes.append(picks)
    return ExplanationReport(scope, clustering, prototypes)


def purity(assignment, drift_flags) -> float:
    """Fraction of samples that belong to their cluster's majority category (drifted or not)."""
    assignment = np.asarray(assignment)
    flags = np.asarray(drift_flags, dtype=bool)
    if assignment.shape != flags.shape or assignment.ndim != 1:
        raise DimensionError("assignment and drift flags must be equal-length vectors")
    if assignment.size == 0:
        raise DimensionError("purity needs at least one sample")
    _, inverse = np.unique(assignment, return_inverse=True)
    drifted = np.bincount(inverse, weights=flags.astype(float))
    clean = np.bincount(inverse, weights=(~flags).astype(float))
    return float(np.maximum(drifted, clean).sum() / assignment.size)


def explain_window(window: EmbeddingBatch, k_max: int = 10, top_n: int = 5, seed: int = 0,
                   labels: Optional[Sequence[int]] = None,
                   include_batch: bool = True) -> Dict[object, ExplanationReport]:
    """Explanations for the whole window and for each predicted label.

    Clustering runs on the raw embeddings. A label with fewer than three rows
    is skipped with a warning; smaller labels get ``k_max`` reduced to fit.
    """
    reports = {}
    vectors = window.vectors
    if include_batch:
        reports["batch"] = extract_prototypes(
            vectors, cluster_select(vectors, min(k_max, window.m - 1), seed), top_n, "batch")
    if window.has_labels:
        for label in (labels if labels is not None else window.label_set):
            where = np.flatnonzero(window.predicted_labels == label)
            if where.size < 3:
                warnings.warn(f"label {label} has {where.size} rows; not explained", RuntimeWarning)
                continue
            rows = vectors[where]
            try:
                clustering = cluster_select(rows, min(k_max, where.size - 1), seed)
            except DegenerateData as exc:
                warnings.warn(f"label {label}: {exc}", RuntimeWarning)
                continue
            reports[int(label)] = extract_prototypes(rows, clustering, top_n, int(label), where)
    return reports


def reports_to_json(reports: Dict[object, ExplanationReport],
                    sample_ids: Optional[Sequence[str]] = None) -> str:
    payload = {"explanations": [r.to_dict(sample_ids) for r in reports.values()]}
    return json.dumps(payload, indent=2, sort_keys=False)
