import itertools

import numpy as np
import pytest

from embdrift.errors import DegenerateData, DimensionError, InvalidK
from embdrift.explain import (
    cluster_select,
    explain_window,
    extract_prototypes,
    kmeans,
    purity,
    reports_to_json,
)
from embdrift.stats import EmbeddingBatch


def blobs(rng, centers, n=60, scale=0.3):
    centers = np.asarray(centers, float)
    rows = np.concatenate([c + scale * rng.standard_normal((n, centers.shape[1])) for c in centers])
    return rows, np.repeat(np.arange(len(centers)), n)


def purity_oracle(assignment, flags):
    total = 0
    for c in set(assignment):
        members = [f for a, f in zip(assignment, flags) if a == c]
        total += max(sum(members), len(members) - sum(members))
    return total / len(assignment)


def test_purity_matches_exhaustive_oracle():
    for n in range(1, 9):
        flag_vectors = list(itertools.product([False, True], repeat=n))
        for k in range(1, 4):
            for assignment in itertools.product(range(k), repeat=n):
                for flags in flag_vectors[:: max(1, len(flag_vectors) // 16)]:
                    assert purity(assignment, flags) == pytest.approx(purity_oracle(assignment, flags), abs=1e-12)


def test_purity_bounds_and_errors():
    assert purity([0, 0, 1, 1], [True, True, False, False]) == 1.0
    assert purity([0, 0, 0, 0], [True, True, False, False]) == 0.5
    with pytest.raises(DimensionError):
        purity([0, 1], [True])
    with pytest.raises(DimensionError):
        purity([], [])


@pytest.mark.parametrize("centers,expected_k", [
    ([[0, 0], [8, 0]], 2),
    ([[0, 0], [8, 0], [0, 8]], 3),
])
def test_cluster_select_recovers_blob_count(centers, expected_k, rng):
    rows, truth = blobs(rng, centers)
    result = cluster_select(rows, k_max=6, seed=1)
    assert result.k == expected_k
    assert purity(result.assignment, truth == 0) == 1.0
    assert set(result.search) == set(range(2, 7))
    assert result.silhouette == max(result.search.values())


def test_kmeans_inertia_never_increases(rng):
    rows, _ = blobs(rng, [[0, 0], [3, 0], [0, 3], [3, 3]], scale=1.0)
    run = kmeans(rows, 4, np.random.default_rng(0))
    hist = np.array(run.inertia_history)
    assert np.all(np.diff(hist) <= 1e-9 * hist[0])
    assert run.inertia == pytest.approx(hist[-1])


def test_kmeans_returns_fixed_point(rng):
    rows, _ = blobs(rng, [[0, 0], [5, 5]])
    run = kmeans(rows, 2, np.random.default_rng(3))
    for c in range(2):
        np.testing.assert_allclose(run.centroids[c], rows[run.assignment == c].mean(axis=0), atol=1e-12)
    d = ((rows[:, None, :] - run.centroids[None]) ** 2).sum(-1)
    assert np.array_equal(np.argmin(d, axis=1), run.assignment)


def test_cluster_select_is_deterministic(rng):
    rows, _ = blobs(rng, [[0, 0, 0], [4, 4, 4]])
    a = cluster_select(rows, 4, seed=9)
    b = cluster_select(rows, 4, seed=9)
    c = cluster_select(rows, 4, seed=9, workers=3)
    assert a == b == c


def test_cluster_select_degenerate_inputs(rng):
    with pytest.raises(InvalidK):
        cluster_select(rng.standard_normal((5, 2)), k_max=1)
    with pytest.raises(InvalidK):
        cluster_select(rng.standard_normal((3, 2)), k_max=5)
    with pytest.raises(DegenerateData):
        cluster_select(np.ones((20, 3)), k_max=3)


def test_duplicate_rows_skip_impossible_k():
    rows = np.array([[0.0, 0.0]] * 5 + [[1.0, 1.0]] * 5)
    result = cluster_select(rows, k_max=4, seed=0)
    assert result.k == 2 and set(result.search) == {2}


def test_prototypes_are_nearest_members(rng):
    rows, _ = blobs(rng, [[0, 0], [6, 6]])
    clustering = cluster_select(rows, 3, seed=0)
    report = extract_prototypes(rows, clustering, top_n=4)
    for c, protos in enumerate(report.prototypes):
        assert len(protos) == 4
        members = np.flatnonzero(clustering.assignment == c)
        dist = np.linalg.norm(rows[members] - clustering.centroids[c], axis=1)
        assert [i for i, _ in protos] == members[np.argsort(dist, kind="stable")[:4]].tolist()
        assert [p[1] for p in protos] == sorted(p[1] for p in protos)


def test_explain_window_maps_label_rows_back(rng):
    rows, truth = blobs(rng, [[0, 0], [6, 0], [0, 6], [6, 6]], n=30)
    labels = np.where(truth < 2, 0, 1)
    window = EmbeddingBatch(rows, labels)
    reports = explain_window(window, k_max=4, top_n=2, seed=0)
    assert set(reports) == {"batch", 0, 1}
    for label in (0, 1):
        for protos in reports[label].prototypes:
            assert all(labels[i] == label for i, _ in protos)
    doc = reports_to_json(reports, [f"id{i}" for i in range(window.m)])
    assert '"id": "id' in doc


def test_explain_window_skips_tiny_labels(rng):
    rows, _ = blobs(rng, [[0, 0], [6, 0]], n=20)
    labels = np.zeros(40, int)
    labels[:2] = 1
    with pytest.warns(RuntimeWarning, match="label 1"):
        reports = explain_window(EmbeddingBatch(rows, labels), k_max=3, include_batch=False)
    assert set(reports) == {0}


def test_well_separated_blobs_high_silhouette(rng):
    rows, _ = blobs(rng, [[0.0, 0.0], [10.0, 0.0]], n=100, scale=1.0)
    result = cluster_select(rows, k_max=10, seed=0)
    assert result.k == 2 and result.silhouette > 0.8


def test_purity_examples():
    assert purity([0, 0, 0], [True, True, True]) == 1.0
    assert purity([0, 0, 0, 1, 1], [True, True, False, False, False]) == pytest.approx(0.8)


@pytest.mark.parametrize("seed", range(5))
def test_purity_symmetric_in_categories(seed):
    r = np.random.default_rng(seed)
    assignment = r.integers(0, 4, 30)
    flags = r.random(30) < 0.3
    assert purity(assignment, flags) == purity(assignment, ~flags)


def test_prototype_truncation_and_nearest(rng):
    rows = np.array([[0.0, 0.0], [0.1, 0.0], [10.0, 0.0], [10.2, 0.0], [10.0, 0.3], [9.9, 0.1]])
    clustering = cluster_select(rows, k_max=2, seed=0)
    small = int(np.argmin(clustering.cluster_sizes()))
    report = extract_prototypes(rows, clustering, top_n=4)
    assert len(report.prototypes[small]) == 2
    nearest = extract_prototypes(rows, clustering, top_n=1)
    for c, protos in enumerate(nearest.prototypes):
        members = np.flatnonzero(clustering.assignment == c)
        dist = np.linalg.norm(rows[members] - clustering.centroids[c], axis=1)
        assert protos[0][0] == members[np.argmin(dist)]


def test_prototypes_closer_to_own_centroid(rng):
    rows, _ = blobs(rng, [[0, 0], [6, 0], [0, 6]])
    clustering = cluster_select(rows, 5, seed=2)
    report = extract_prototypes(rows, clustering, top_n=5)
    for c, protos in enumerate(report.prototypes):
        for i, own in protos:
            assert own <= np.linalg.norm(clustering.centroids - rows[i], axis=1).min() + 1e-12
