"""Gaussian summaries, PCA projection, matrix square roots and distribution distances."""

from __future__ import annotations

import enum
from dataclasses import InitVar, dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from .errors import (
    DimensionError,
    InsufficientSamples,
    InvalidInput,
    NotPSD,
    RankError,
    SingularCovariance,
)

SYMMETRY_RTOL = 1e-9
PSD_ATOL = 1e-8
JITTER_SCALE = 1e-6


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


def _psd_floor(eigvals: np.ndarray) -> float:
    # absolute floor, widened for matrices whose spectrum is far above unit scale
    return -PSD_ATOL * max(1.0, float(np.max(np.abs(eigvals), initial=0.0)))


def _check_symmetric(S: np.ndarray, what: str) -> None:
    scale = max(1.0, float(np.max(np.abs(S), initial=0.0)))
    if np.max(np.abs(S - S.T), initial=0.0) > SYMMETRY_RTOL * scale:
        raise NotPSD(f"{what} is not symmetric")


@dataclass(frozen=True)
class EmbeddingBatch:
    """Embedding vectors (one row per sample) with the classifier's predicted labels.

    ``label_set`` declares the label universe. It defaults to the sorted
    distinct labels present. ``predicted_labels`` may be ``None`` for
    unlabelled batches; per-label analysis then has nothing to work with.
    """

    vectors: np.ndarray
    predicted_labels: Optional[np.ndarray] = None
    label_set: Optional[tuple] = None

    def __post_init__(self):
        vectors = np.asarray(self.vectors)
        if vectors.ndim != 2:
            raise InvalidInput(f"vectors must be a 2-D matrix, got shape {vectors.shape}")
        if not np.issubdtype(vectors.dtype, np.floating):
            vectors = vectors.astype(np.float64)
        if vectors.shape[0] < 1:
            raise InvalidInput("an embedding batch needs at least one row")
        if not np.all(np.isfinite(vectors)):
            raise InvalidInput("embedding vectors contain non-finite values")
        vectors = np.array(vectors, copy=True)
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)

        labels = self.predicted_labels
        if labels is not None:
            labels = np.array(labels, dtype=np.int64, copy=True).reshape(-1)
            if labels.shape[0] != vectors.shape[0]:
                raise InvalidInput(
                    f"{labels.shape[0]} labels for {vectors.shape[0]} embedding rows")
            labels.setflags(write=False)
            object.__setattr__(self, "predicted_labels", labels)
            present = tuple(int(v) for v in np.unique(labels))
            if self.label_set is None:
                object.__setattr__(self, "label_set", present)
            else:
                declared = tuple(int(v) for v in self.label_set)
                unknown = set(present) - set(declared)
                if unknown:
                    raise InvalidInput(f"labels {sorted(unknown)} are not in the declared label set")
                object.__setattr__(self, "label_set", declared)
        elif self.label_set is not None:
            object.__setattr__(self, "label_set", tuple(int(v) for v in self.label_set))

    @property
    def m(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    @property
    def has_labels(self) -> bool:
        return self.predicted_labels is not None

    def rows_for(self, label) -> np.ndarray:
        if self.predicted_labels is None:
            return self.vectors[:0]
        return self.vectors[self.predicted_labels == label]

    def take(self, indices) -> "EmbeddingBatch":
        indices = np.asarray(indices)
        labels = None if self.predicted_labels is None else self.predicted_labels[indices]
        return EmbeddingBatch(self.vectors[indices], labels, self.label_set)

    @classmethod
    def concat(cls, batches: Sequence["EmbeddingBatch"]) -> "EmbeddingBatch":
        vectors = np.concatenate([b.vectors for b in batches])
        if all(b.has_labels for b in batches):
            labels = np.concatenate([b.predicted_labels for b in batches])
            label_set = sorted(set().union(*(b.label_set for b in batches)))
            return cls(vectors, labels, tuple(label_set))
        return cls(vectors)


@dataclass(frozen=True, eq=False)
class GaussianSummary:
    """Mean vector and covariance of a multivariate normal, plus its sample count."""

    mean: np.ndarray
    covariance: np.ndarray
    sample_count: int
    validate: InitVar[bool] = True

    def __post_init__(self, validate):
        mean = _frozen(np.atleast_1d(self.mean))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=np.float64))
        if validate:
            if mean.ndim != 1 or cov.shape != (mean.shape[0], mean.shape[0]):
                raise DimensionError(
                    f"mean of length {mean.shape[0]} does not match covariance {cov.shape}")
            if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
                raise InvalidInput("non-finite Gaussian parameters")
            _check_symmetric(cov, "covariance")
            eig = np.linalg.eigvalsh(cov)
            if eig.size and eig.min() < _psd_floor(eig):
                raise NotPSD(f"covariance has eigenvalue {eig.min():.3g}")
            if int(self.sample_count) < 1:
                raise InvalidInput("sample_count must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", _frozen((cov + cov.T) / 2.0))
        object.__setattr__(self, "sample_count", int(self.sample_count))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @cached_property
    def cov_sqrt(self) -> np.ndarray:
        return psd_sqrt(self.covariance)

    @cached_property
    def jittered_cholesky(self):
        return _cholesky(_jittered(self.covariance))

    def __eq__(self, other):
        if not isinstance(other, GaussianSummary):
            return NotImplemented
        return (self.sample_count == other.sample_count
                and np.array_equal(self.mean, other.mean)
                and np.array_equal(self.covariance, other.covariance))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class PcaProjector:
    """Centering vector and orthonormal principal directions (one per row)."""

    center: np.ndarray
    components: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", _frozen(self.center))
        object.__setattr__(self, "components", _frozen(np.atleast_2d(self.components)))
        if self.components.shape[1] != self.center.shape[0]:
            raise DimensionError("components width does not match center length")

    @property
    def k(self) -> int:
        return self.components.shape[0]

    @cached_property
    def offset(self) -> np.ndarray:
        """``center`` expressed in component coordinates."""
        return self.components @ self.center

    @property
    def d(self) -> int:
        return self.center.shape[0]

    def __eq__(self, other):
        if not isinstance(other, PcaProjector):
            return NotImplemented
        return (np.array_equal(self.center, other.center)
                and np.array_equal(self.components, other.components))

    __hash__ = None


class DistanceKind(str, enum.Enum):
    FDD = "fdd"
    KL = "kl"
    JS = "js"
    MAHALANOBIS = "mahalanobis"
    BHATTACHARYYA = "bhattacharyya"

    @classmethod
    def parse(cls, value) -> "DistanceKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise InvalidInput(f"unknown distance kind {value!r}") from None


def estimate_gaussian(rows) -> GaussianSummary:
    """Sample mean and unbiased (n - 1) covariance of ``rows``."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim == 1:
        rows = rows[:, None]
    n = rows.shape[0]
    if n < 2:
        raise InsufficientSamples(f"need at least 2 rows to estimate a covariance, got {n}")
    if not np.all(np.isfinite(rows)):
        raise InvalidInput("rows contain non-finite values")
    mean = rows.mean(axis=0)
    centered = rows - mean
    cov = centered.T @ centered / (n - 1)
    return GaussianSummary(mean, (cov + cov.T) / 2.0, n, validate=False)


def fit_pca(rows, k: int) -> PcaProjector:
    """Fit a ``k``-component (non-whitened) PCA through an SVD of the centered rows.

    The sign of every component is fixed so that its largest-magnitude
    loading is positive.
    """
    rows = np.asarray(rows, dtype=np.float64)
    n, d = rows.shape
    k = int(k)
    if k < 1 or k > min(n, d):
        raise RankError("pca", count=n, required=k,
                        message=f"cannot fit {k} components on {n}x{d} data")
    if not np.all(np.isfinite(rows)):
        raise InvalidInput("rows contain non-finite values")
    center = rows.mean(axis=0)
    centered = rows - center
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    if s[0] <= np.finfo(np.float64).eps * max(1.0, float(np.abs(rows).max())):
        raise RankError("pca", count=n, required=k, message="rows have no variance to capture")
    components = vt[:k].copy()
    pivot = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(k), pivot])
    components *= signs[:, None]
    return PcaProjector(center, components)


def project(projector: PcaProjector, rows) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != projector.d:
        raise DimensionError(
            f"rows of width {rows.shape[-1]} cannot go through a projector fitted on width {projector.d}")
    # subtracting the projected center avoids materialising a centered copy of ``rows``
    return rows @ projector.components.T - projector.offset


def psd_sqrt(S) -> np.ndarray:
    """Symmetric square root of a positive semi-definite matrix via eigendecomposition.

    Slightly negative eigenvalues (round-off) are clipped to zero.
    """
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {S.shape}")
    _check_symmetric(S, "matrix")
    eigvals, eigvecs = np.linalg.eigh((S + S.T) / 2.0)
    if eigvals.size and eigvals.min() < _psd_floor(eigvals):
        raise NotPSD(f"matrix has eigenvalue {eigvals.min():.3g}")
    root = (eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))) @ eigvecs.T
    return (root + root.T) / 2.0


def _check_dims(a: GaussianSummary, b: GaussianSummary) -> None:
    if a.dim != b.dim:
        raise DimensionError(f"distributions of dimension {a.dim} and {b.dim}")


def fdd(a: GaussianSummary, b: GaussianSummary) -> float:
    """Fréchet (Wasserstein-2) distance between two Gaussians.

    The trace of the cross term is taken through the symmetric product
    ``sqrt(A) B sqrt(A)`` which has the same trace root as ``A B`` but real,
    non-negative eigenvalues. The square root of ``a`` is cached on the
    summary, so pass the long-lived reference first.
    """
    _check_dims(a, b)
    diff = a.mean - b.mean
    root_a = a.cov_sqrt
    sandwich = root_a @ b.covariance @ root_a
    eig = np.linalg.eigvalsh((sandwich + sandwich.T) / 2.0)
    cross = float(np.sqrt(np.clip(eig, 0.0, None)).sum())
    value = float(diff @ diff) + float(np.trace(a.covariance) + np.trace(b.covariance)) - 2.0 * cross
    return max(value, 0.0)


def _jittered(cov: np.ndarray) -> np.ndarray:
    k = cov.shape[0]
    return cov + JITTER_SCALE * float(np.trace(cov)) / k * np.eye(k)


def _cholesky(cov: np.ndarray):
    try:
        return linalg.cho_factor(cov, lower=True)
    except linalg.LinAlgError:
        raise SingularCovariance("covariance is singular even after jitter") from None


def _logdet(chol) -> float:
    return 2.0 * float(np.log(np.diag(chol[0])).sum())


def _kl(a: GaussianSummary, b: GaussianSummary, chol_a=None, chol_b=None) -> float:
    chol_a = chol_a or a.jittered_cholesky
    chol_b = chol_b or b.jittered_cholesky
    diff = b.mean - a.mean
    trace_term = float(np.trace(linalg.cho_solve(chol_b, _jittered(a.covariance))))
    quad = float(diff @ linalg.cho_solve(chol_b, diff))
    value = 0.5 * (trace_term + quad - a.dim + _logdet(chol_b) - _logdet(chol_a))
    return max(value, 0.0)


def _moment_matched_midpoint(a: GaussianSummary, b: GaussianSummary) -> GaussianSummary:
    mu = (a.mean + b.mean) / 2.0
    da, db = a.mean - mu, b.mean - mu
    cov = (a.covariance + b.covariance) / 2.0 + 0.5 * (np.outer(da, da) + np.outer(db, db))
    return GaussianSummary(mu, cov, a.sample_count + b.sample_count, validate=False)


def alt_distance(kind, a: GaussianSummary, b: GaussianSummary) -> float:
    """Distances other than FDD; ``b`` is the reference where the measure is asymmetric.

    KL is KL(a || b). Mahalanobis measures a's mean under b's covariance.
    JS uses the moment-matched Gaussian of the equal-weight mixture as midpoint.
    Covariances get a diagonal jitter of 1e-6 times their mean variance before
    any inversion or log-determinant.
    """
    kind = DistanceKind.parse(kind)
    _check_dims(a, b)
    if kind is DistanceKind.FDD:
        return fdd(a, b)
    if kind is DistanceKind.KL:
        return _kl(a, b)
    if kind is DistanceKind.MAHALANOBIS:
        diff = a.mean - b.mean
        return float(np.sqrt(max(float(diff @ linalg.cho_solve(b.jittered_cholesky, diff)), 0.0)))
    if kind is DistanceKind.JS:
        mid = _moment_matched_midpoint(a, b)
        return 0.5 * _kl(a, mid) + 0.5 * _kl(b, mid)
    if kind is DistanceKind.BHATTACHARYYA:
        diff = a.mean - b.mean
        avg = (a.covariance + b.covariance) / 2.0
        chol_avg = _cholesky(_jittered(avg))
        quad = float(diff @ linalg.cho_solve(chol_avg, diff))
        logdets = _logdet(chol_avg) - 0.5 * (_logdet(a.jittered_cholesky) + _logdet(b.jittered_cholesky))
        return max(quad / 8.0 + 0.5 * logdets, 0.0)
    raise InvalidInput(f"unsupported distance kind {kind!r}")


def distance(kind, reference: GaussianSummary, sample: GaussianSummary) -> float:
    """Distance of ``sample`` from a long-lived ``reference`` under ``kind``."""
    kind = DistanceKind.parse(kind)
    if kind is DistanceKind.FDD:
        return fdd(reference, sample)
    return alt_distance(kind, sample, reference)
