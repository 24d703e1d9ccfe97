import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from embdrift.errors import InsufficientData, InvalidInput, InvalidSchedule, UndefinedCorrelation
from embdrift.evaluation import (
    DriftSchedule,
    SamplePools,
    benchmark_runtime,
    build_stream,
    build_window,
    drift_row_count,
    evaluate_detection,
    generate_pattern,
    harmonic_drift_detection,
    scores_from_accuracy,
    severity_schedule,
    spearman_corr,
    split_batch,
    synth_pools,
)
from embdrift.offline import OfflineConfig, fit_baseline
from embdrift.stats import EmbeddingBatch, estimate_gaussian, fdd, project


# -- schedules --------------------------------------------------------------------

def test_sudden_pattern():
    s = generate_pattern("sudden", total=100, onset=50, level=40)
    assert s.percents == (0.0,) * 50 + (40.0,) * 50


def test_incremental_pattern():
    s = generate_pattern("incremental", total=100, onset=50, start=20, step=1)
    assert s.percents[:50] == (0.0,) * 50
    assert s.percents[50:] == tuple(float(v) for v in range(20, 70))
    capped = generate_pattern("incremental", total=10, onset=0, start=95, step=2)
    assert max(capped.percents) == 100.0


def test_periodic_pattern():
    s = generate_pattern("periodic", total=80, block=20, level=40)
    assert s.percents == (0.0,) * 20 + (40.0,) * 20 + (0.0,) * 20 + (40.0,) * 20


def test_pattern_errors():
    for kwargs in ({"kind": "spiral"}, {"kind": "sudden", "onset": 200}, {"kind": "periodic", "block": 0},
                   {"kind": "sudden", "total": 0}, {"kind": "incremental", "step": -1}):
        with pytest.raises(InvalidSchedule):
            generate_pattern(**kwargs)
    with pytest.raises(InvalidSchedule):
        DriftSchedule((10.0, 120.0))
    with pytest.raises(InvalidSchedule):
        DriftSchedule(())


def test_severity_schedule_and_truth():
    s = severity_schedule((0, 5, 10), per_level=3)
    assert s.percents == (0.0,) * 3 + (5.0,) * 3 + (10.0,) * 3
    assert s.truth().tolist() == [False] * 3 + [True] * 6


def test_drift_row_count_rounds_half_up():
    assert drift_row_count(20, 1000) == 200
    assert drift_row_count(0, 1000) == 0
    assert drift_row_count(2.5, 100) == 3
    assert drift_row_count(0.5, 100) == 1


# -- stream building ------------------------------------------------------------------

def test_window_composition(small_splits):
    _, _, pools = small_splits
    for percent in (0, 20, 37):
        window, mask = build_window(pools, percent, 1000, np.random.default_rng(percent))
        assert window.m == 1000
        assert mask.sum() == drift_row_count(percent, 1000)
        counts = np.bincount(window.predicted_labels[~mask], minlength=3)
        assert counts.max() - counts.min() <= 1


def test_build_stream_truth_and_determinism(small_splits):
    _, _, pools = small_splits
    schedule = DriftSchedule((0, 10, 0, 40, 0.5))
    windows, truth, masks = build_stream(pools, schedule, 100, seed=3, return_masks=True)
    assert truth.tolist() == [False, True, False, True, True]
    assert [int(m.sum()) for m in masks] == [0, 10, 0, 40, 1]
    again, _ = build_stream(pools, schedule, 100, seed=3)
    assert all(np.array_equal(a.vectors, b.vectors) for a, b in zip(windows, again))


def test_pool_and_window_validation(rng):
    clean = EmbeddingBatch(rng.standard_normal((10, 3)), np.zeros(10, int))
    drift = EmbeddingBatch(rng.standard_normal((1, 3)), np.zeros(1, int))
    with pytest.raises(InvalidInput):
        SamplePools(clean, EmbeddingBatch(rng.standard_normal((1, 4))))
    with pytest.raises(InvalidInput):
        build_stream(SamplePools(clean, drift), DriftSchedule((0,)), 0)


# -- scoring -------------------------------------------------------------------------

def test_hdd_published_row():
    scores = scores_from_accuracy({0: 0.99, 5: 0.83, 10: 1.0, 15: 1.0, 20: 1.0})
    assert abs(scores.h_dd - 0.97) <= 0.005
    assert scores.a_drift == pytest.approx(0.9575)


def test_hdd_degenerate_and_perfect():
    assert harmonic_drift_detection(1.0, 1.0) == 1.0
    assert harmonic_drift_detection(0.0, 1.0) == 0.0
    assert harmonic_drift_detection(1.0, 0.0) == 0.0


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_hdd_properties(a0, ad):
    h = harmonic_drift_detection(a0, ad)
    assert h <= max(a0, ad) + 1e-12
    assert (h == 1.0) == (a0 == 1.0 and ad == 1.0)
    if a0 > 0 and ad > 0:
        assert h == pytest.approx(2 / (1 / a0 + 1 / ad))


def test_evaluate_detection():
    preds = {0: [False] * 9 + [True], 10: [True] * 8 + [False] * 2, 20: [True] * 10}
    scores = evaluate_detection(preds)
    assert scores.accuracy == {0.0: 0.9, 10.0: 0.8, 20.0: 1.0}
    assert scores.h_dd == pytest.approx(2 / (1 / 0.9 + 1 / 0.9))
    with pytest.raises(InvalidInput):
        evaluate_detection({10: [True]})
    with pytest.raises(InvalidInput):
        evaluate_detection({0: [False]})


# -- Spearman --------------------------------------------------------------------------

def rank_oracle(values):
    """Average 1-based ranks computed by brute force."""
    ranks = []
    for v in values:
        below = sum(1 for w in values if w < v)
        ties = sum(1 for w in values if w == v)
        ranks.append(below + (ties + 1) / 2)
    return ranks


def pearson_oracle(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    num = sum((a - mx) * (b - my) for a, b in zip(x, y))
    den = math.sqrt(sum((a - mx) ** 2 for a in x) * sum((b - my) ** 2 for b in y))
    return num / den


def test_spearman_with_ties_matches_oracle():
    x, y = [1, 2, 2, 4], [10, 20, 30, 40]
    expect = pearson_oracle(rank_oracle(x), rank_oracle(y))
    assert abs(spearman_corr(x, y) - expect) <= 1e-12


def test_spearman_basic_cases(rng):
    x = rng.standard_normal(20)
    assert spearman_corr(x, x) == pytest.approx(1.0)
    assert spearman_corr(x, -x) == pytest.approx(-1.0)
    assert spearman_corr(np.sort(x), np.sort(x)[::-1]) == pytest.approx(-1.0)
    with pytest.raises(UndefinedCorrelation):
        spearman_corr([1, 1, 1], [1, 2, 3])
    with pytest.raises(InvalidInput):
        spearman_corr([1, 2], [1, 2, 3])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(-5, 5), min_size=3, max_size=15), st.integers(0, 2 ** 31 - 1))
def test_spearman_monotone_invariance(values, seed):
    x = np.array(values, float)
    y = np.random.default_rng(seed).integers(-4, 4, size=x.size).astype(float)
    if np.all(x == x[0]) or np.all(y == y[0]):
        return
    base = spearman_corr(x, y)
    assert spearman_corr(np.exp(x), y) == pytest.approx(base, abs=1e-12)
    assert spearman_corr(x, 3 * y ** 3 + 1) == pytest.approx(base, abs=1e-12)
    assert base == pytest.approx(pearson_oracle(rank_oracle(list(x)), rank_oracle(list(y))), abs=1e-12)


# -- synthetic pools -----------------------------------------------------------------

def test_synth_pools_deterministic():
    a = synth_pools(3, 16, 100, 8.0, seed=5)
    b = synth_pools(3, 16, 100, 8.0, seed=5)
    assert np.array_equal(a.nondrift.vectors, b.nondrift.vectors)
    assert np.array_equal(a.drift.vectors, b.drift.vectors)
    assert np.array_equal(a.drift.predicted_labels, b.drift.predicted_labels)


def test_synth_pools_zero_shift_matches_host():
    pools = synth_pools(3, 8, 4000, 0.0, seed=2)
    host = pools.nondrift.rows_for(0)
    d = fdd(estimate_gaussian(host), estimate_gaussian(pools.drift.vectors))
    # sampling noise of two 8-dim Gaussians from ~4000 rows each
    assert d < 0.05
    assert np.all(pools.drift.predicted_labels == 0)


def test_synth_pools_host_label_dominates():
    pools = synth_pools(3, 32, 3000, 8.0, seed=4, drift_rows=1500)
    hist, rest = split_batch(pools.nondrift, [4500, 4500], seed=0)
    base = fit_baseline(hist, OfflineConfig(d_prime=8, d_prime_label=6))
    window, _ = build_window(SamplePools(rest, pools.drift), 20, 1000, np.random.default_rng(0))
    dist = {}
    for label in base.label_set:
        rows = window.rows_for(label)
        dist[label] = fdd(base.label_gaussian[label], estimate_gaussian(project(base.label_pca[label], rows)))
    assert dist[0] > dist[1] and dist[0] > dist[2]


def test_synth_pools_validation():
    with pytest.raises(InvalidInput):
        synth_pools(3, 16, 10, -1.0)
    with pytest.raises(InvalidInput):
        synth_pools(3, 3, 10, 1.0)


def test_split_batch(small_pools):
    parts = split_batch(small_pools.nondrift, [100, 200], seed=0)
    assert [p.m for p in parts] == [100, 200]
    with pytest.raises(InsufficientData):
        split_batch(small_pools.nondrift, [10 ** 6])


def test_benchmark_table_has_one_row_per_cell():
    rows = benchmark_runtime([50, 80], [16, 20], repeats=2, d_prime=4, d_prime_label=3)
    assert [(r.m_w, r.d) for r in rows] == [(50, 16), (80, 16), (50, 20), (80, 20)]
    assert all(r.mean_s > 0 for r in rows)
