import math

import numpy as np
import pytest

from embdrift.errors import DimensionError, InvalidInput, RankError
from embdrift.evaluation import DriftSchedule, build_stream, build_window, generate_pattern
from embdrift.online import MonitorLog, analyze_window, run_stream
from embdrift.stats import EmbeddingBatch


def test_clean_window_is_quiet(small_model, small_splits):
    baseline, thresholds = small_model
    _, _, pools = small_splits
    window, _ = build_window(pools, 0, 200, np.random.default_rng(0))
    report = analyze_window(baseline, thresholds, window, window_id=4, timestamp="t")
    assert not report.batch_drift
    assert report.window_id == 4 and report.timestamp == "t"
    assert set(report.label_entries) == {0, 1, 2}
    assert report.warnings == ()


def test_drifted_window_flags_batch_and_host_label(small_model, small_splits):
    baseline, thresholds = small_model
    _, _, pools = small_splits
    window, _ = build_window(pools, 40, 200, np.random.default_rng(1))
    report = analyze_window(baseline, thresholds, window)
    assert report.batch_drift
    assert 0 in report.drifted_labels
    others = [report.label_entries[l].distance for l in (1, 2)]
    assert all(report.label_entries[0].distance > d for d in others)


def test_sparse_label_reported_insufficient(small_model, small_splits):
    baseline, thresholds = small_model
    _, _, pools = small_splits
    clean = pools.nondrift
    idx = np.concatenate([np.flatnonzero(clean.predicted_labels == 0)[:150],
                          np.flatnonzero(clean.predicted_labels == 1)[:47],
                          np.flatnonzero(clean.predicted_labels == 2)[:3]])
    report = analyze_window(baseline, thresholds, clean.take(idx))
    entry = report.label_entries[2]
    assert entry.insufficient and entry.count == 3 and not entry.drift
    assert not report.label_entries[1].insufficient


def test_window_errors(small_model, rng):
    baseline, thresholds = small_model
    with pytest.raises(DimensionError):
        analyze_window(baseline, thresholds, EmbeddingBatch(rng.standard_normal((200, 5)), np.zeros(200, int)))
    with pytest.raises(RankError):
        analyze_window(baseline, thresholds, EmbeddingBatch(rng.standard_normal((6, 24)), np.zeros(6, int)))


def test_window_warnings(small_model, small_splits):
    baseline, thresholds = small_model
    _, _, pools = small_splits
    window, _ = build_window(pools, 0, 150, np.random.default_rng(2))
    report = analyze_window(baseline, thresholds, window)
    assert any("short window" in w for w in report.warnings)
    unlabelled = EmbeddingBatch(window.vectors)
    report = analyze_window(baseline, thresholds, unlabelled)
    assert any("no predicted labels" in w for w in report.warnings)
    assert all(e.insufficient for e in report.label_entries.values())
    relabelled = EmbeddingBatch(window.vectors, np.where(window.predicted_labels == 2, 9, window.predicted_labels))
    report = analyze_window(baseline, thresholds, relabelled)
    assert any("[9]" in w for w in report.warnings)


def test_run_stream_ids_and_failures(small_model, small_splits, rng):
    baseline, thresholds = small_model
    _, _, pools = small_splits
    good = [build_window(pools, p, 200, np.random.default_rng(i))[0] for i, p in enumerate([0, 0, 50])]
    bad = EmbeddingBatch(rng.standard_normal((3, 24)), np.zeros(3, int))
    log = run_stream(baseline, thresholds, good[:2] + [bad] + good[2:], timestamps=["a", "b", "c", "d"])
    assert [r.window_id for r in log] == [1, 2, 3, 4]
    assert math.isnan(log.reports[2].batch_distance)
    assert "RankError" in log.reports[2].warnings[0]
    assert log.batch_flags().tolist() == [False, False, False, True]
    assert log.baseline_id == baseline.fingerprint()


def test_monitor_log_requires_increasing_ids(small_model, small_splits):
    baseline, thresholds = small_model
    _, _, pools = small_splits
    window, _ = build_window(pools, 0, 200, np.random.default_rng(0))
    log = MonitorLog.for_model(baseline, thresholds)
    log.append(analyze_window(baseline, thresholds, window, 5))
    with pytest.raises(InvalidInput):
        log.append(analyze_window(baseline, thresholds, window, 5))


def test_threshold_pool_windows_rarely_flag(small_model, small_splits):
    baseline, thresholds = small_model
    _, thr, _ = small_splits
    draw = np.random.default_rng(5)
    flags = [analyze_window(baseline, thresholds, thr.take(draw.integers(0, thr.m, 200))).batch_drift
             for _ in range(500)]
    assert 1 - np.mean(flags) >= 1 - thresholds.t_alpha - 0.02


def test_scaled_window_is_flagged(small_model, small_splits):
    baseline, thresholds = small_model
    hist, _, _ = small_splits
    window = hist.take(np.arange(200))
    scaled = EmbeddingBatch(window.vectors * 5, window.predicted_labels)
    assert analyze_window(baseline, thresholds, scaled).batch_drift


def test_missing_label_is_insufficient(small_model, small_splits):
    baseline, thresholds = small_model
    _, _, pools = small_splits
    clean = pools.nondrift
    window = clean.take(np.flatnonzero(clean.predicted_labels != 1)[:200])
    entry = analyze_window(baseline, thresholds, window).label_entries[1]
    assert entry.insufficient and entry.count == 0 and not entry.drift


def test_flags_follow_thresholds_and_reports_are_deterministic(small_model, small_splits):
    baseline, thresholds = small_model
    _, _, pools = small_splits
    for i, percent in enumerate((0, 5, 20, 60)):
        window, _ = build_window(pools, percent, 200, np.random.default_rng(i))
        report = analyze_window(baseline, thresholds, window)
        assert report.batch_drift == (report.batch_distance > thresholds.t_batch)
        for label, entry in report.label_entries.items():
            if not entry.insufficient:
                assert entry.drift == (entry.distance > thresholds.t_label[label])
        assert analyze_window(baseline, thresholds, window) == report


def test_empty_stream_gives_empty_log(small_model):
    baseline, thresholds = small_model
    assert len(run_stream(baseline, thresholds, [])) == 0


def test_sudden_stream_flags(small_model, small_splits):
    baseline, thresholds = small_model
    _, _, pools = small_splits
    windows, _ = build_stream(pools, generate_pattern("sudden", total=100, onset=50, level=40), 200, seed=8)
    flags = run_stream(baseline, thresholds, windows).batch_flags()
    assert (~flags[:50]).sum() >= 95 * 50 / 100 and flags[50:].sum() >= 95 * 50 / 100


def test_periodic_stream_flags(small_model, small_splits):
    baseline, thresholds = small_model
    _, _, pools = small_splits
    schedule = generate_pattern("periodic", total=80, block=20, level=40)
    windows, truth = build_stream(pools, schedule, 200, seed=9)
    flags = run_stream(baseline, thresholds, windows).batch_flags()
    assert np.mean(flags != truth) <= 0.05


def test_mean_distance_grows_with_severity(small_model, small_splits):
    baseline, thresholds = small_model
    _, _, pools = small_splits
    means = []
    for level in (0, 5, 10, 15, 20):
        windows, _ = build_stream(pools, DriftSchedule((level,) * 20), 200, seed=level)
        means.append(np.mean([analyze_window(baseline, thresholds, w).batch_distance for w in windows]))
    assert all(b >= a for a, b in zip(means, means[1:]))
