"""Embedding-distribution drift detection with Gaussian summaries and Fréchet distances."""

from .errors import *  # noqa: F401,F403
from .stats import (
    DistanceKind,
    EmbeddingBatch,
    GaussianSummary,
    PcaProjector,
    alt_distance,
    distance,
    estimate_gaussian,
    fdd,
    fit_pca,
    project,
    psd_sqrt,
)
from .offline import BaselineModel, OfflineConfig, ThresholdSet, estimate_thresholds, fit_baseline
from .online import LabelEntry, MonitorLog, WindowReport, analyze_window, run_stream

__version__ = "0.1.0"
