import numpy as np
import pytest

from embdrift.evaluation import SamplePools, split_batch, synth_pools
from embdrift.offline import OfflineConfig, estimate_thresholds, fit_baseline


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_pools():
    """Three labels in 24 dimensions, drift 8 sigma beyond label 0."""
    return synth_pools(3, 24, 1500, 8.0, seed=7, drift_rows=800)


@pytest.fixture(scope="session")
def small_splits(small_pools):
    hist, thr, clean = split_batch(small_pools.nondrift, [1500, 1500, 1500], seed=1)
    return hist, thr, SamplePools(clean, small_pools.drift)


@pytest.fixture(scope="session")
def small_config():
    return OfflineConfig(d_prime=6, d_prime_label=4, n_th=300, t_alpha=0.01, m_w=200, seed=3)


@pytest.fixture(scope="session")
def small_model(small_splits, small_config):
    hist, thr, _ = small_splits
    baseline = fit_baseline(hist, small_config)
    thresholds = estimate_thresholds(baseline, thr)
    return baseline, thresholds
