import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xormixfl.errors import DegenerateSpectrum, EmptyInput, UnknownContributor
from xormixfl.privacy import (ClassicalMDS, PrivacyRecord, PrivacySummary, classical_mds, dissimilarity,
                              mds_embed_2d, pairwise_distances, score_augmented, score_sample, summarize,
                              write_embedding_csv, write_privacy_csv)

from conftest import toy_dataset

vectors = st.lists(st.integers(0, 255), min_size=3, max_size=3)


def test_dissimilarity_examples():
    a = np.array([7, 9, 200], dtype=np.uint8)
    assert dissimilarity(a, a) == 0
    assert dissimilarity([3, 0], [0, 4]) == 5
    assert dissimilarity(np.zeros(784, np.uint8), np.full(784, 255, np.uint8)) == pytest.approx(7140)


def test_dissimilarity_does_not_wrap_bytes():
    assert dissimilarity(np.array([0], np.uint8), np.array([255], np.uint8)) == 255


@settings(max_examples=100, deadline=None)
@given(vectors, vectors, vectors)
def test_metric_axioms(a, b, c):
    assert dissimilarity(a, b) == dissimilarity(b, a)
    assert dissimilarity(a, b) >= 0
    assert dissimilarity(a, c) <= dissimilarity(a, b) + dissimilarity(b, c) + 1e-9


def test_score_sample_examples():
    raws = {1: np.array([3, 0]), 2: np.array([10, 10])}
    assert score_sample(np.array([0, 4]), [1], raws).min_distance == 5
    rec = score_sample(np.array([10, 10]), [1, 2], raws)
    assert rec.min_distance == 0 and rec.void and rec.nearest_contributor == 2


def test_score_sample_errors():
    with pytest.raises(EmptyInput):
        score_sample(np.zeros(2), [], {})
    with pytest.raises(UnknownContributor):
        score_sample(np.zeros(2), [9], {1: np.zeros(2)})


def test_score_augmented_resolves_ids():
    source = toy_dataset({0: 3}, n_pixels=4)

    class Aug:
        pixels = source.images[1]
        contributors = (0, 1)

    (rec,) = score_augmented([Aug()], source)
    assert rec.min_distance == 0 and rec.nearest_contributor == 1


def test_summarize_examples():
    s = summarize([PrivacyRecord("a", 0.0, 1), PrivacyRecord("b", 10.0, 2)], "XorMixFL", 1, 1, 0.5)
    assert (s.mean, s.std_dev, s.count, s.void_count) == (5.0, 5.0, 2, 1)
    flat = summarize([PrivacyRecord(str(i), 3.0, 0) for i in range(4)], "MixFL", 2, 3, 0.25)
    assert flat.std_dev == 0
    assert PrivacySummary.from_dict(flat.to_dict()) == flat
    with pytest.raises(EmptyInput):
        summarize([], "x", 1, 1, 0.5)


def test_privacy_csv_columns(tmp_path):
    s = PrivacySummary(2.0, 1.0, 3, "XorMixFL", 1, 2, 0.5)
    write_privacy_csv([s], tmp_path / "p.csv")
    rows = list(csv.DictReader(open(tmp_path / "p.csv")))
    assert list(rows[0]) == ["method", "M", "p", "alpha", "count", "mean", "std"]
    assert rows[0]["method"] == "XorMixFL" and float(rows[0]["mean"]) == 2.0


def test_pairwise_distances_match_direct(rng):
    X = rng.integers(0, 256, (6, 50))
    D = pairwise_distances(X)
    for i in range(6):
        for j in range(6):
            assert D[i, j] == pytest.approx(dissimilarity(X[i], X[j]), abs=1e-6)


def test_mds_triangle_is_exact():
    pts = np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 4.0]])
    coords = mds_embed_2d(pts)
    assert np.allclose(pairwise_distances(coords), pairwise_distances(pts), atol=1e-6)


def test_mds_identical_samples_degenerate():
    with pytest.raises(DegenerateSpectrum):
        mds_embed_2d(np.ones((4, 10)))


def test_mds_planar_set_recovered(rng):
    pts = rng.normal(0, 50, (12, 2)) @ rng.normal(size=(2, 30))
    coords, evals = classical_mds(pairwise_distances(pts))
    assert np.abs(pairwise_distances(coords) - pairwise_distances(pts)).max() < 1e-6
    assert evals[0] >= evals[1] >= evals[2]


def test_mds_on_mnist_correlates(mnist):
    train, _ = mnist
    X = train.images[np.random.default_rng(0).choice(len(train), 10, replace=False)]
    D = pairwise_distances(X)
    E = pairwise_distances(mds_embed_2d(X))
    iu = np.triu_indices(10, 1)
    assert np.corrcoef(D[iu], E[iu])[0, 1] > 0.7


def test_full_rank_mds_matches_dissimilarity(mnist):
    train, _ = mnist
    X = train.images[:10]
    coords, _ = classical_mds(pairwise_distances(X), n_components=None)
    E = pairwise_distances(coords)
    direct = np.array([[dissimilarity(a, b) for b in X] for a in X])
    assert np.abs(E - direct).max() < 1e-6


def test_estimator_wrapper(rng):
    X = rng.normal(size=(8, 5))
    est = ClassicalMDS(n_components=3)
    Y = est.fit_transform(X)
    assert Y.shape == (8, 3) and est.get_params() == {"n_components": 3, "dissimilarity": "euclidean"}
    pre = ClassicalMDS(dissimilarity="precomputed").fit(pairwise_distances(X))
    assert np.allclose(np.abs(pre.embedding_), np.abs(Y[:, :2]))
    with pytest.raises(ValueError):
        ClassicalMDS(dissimilarity="precomputed").fit(np.zeros((3, 4)))
    with pytest.raises(ValueError):
        ClassicalMDS(dissimilarity="cosine").fit(X)


def test_embedding_csv(tmp_path):
    write_embedding_csv(["a", "b"], np.array([[1.0, 2.0], [3.0, 4.0]]), ["raw", "augmented"], tmp_path / "e.csv")
    rows = list(csv.reader(open(tmp_path / "e.csv")))
    assert rows[0] == ["sample_id", "x", "y", "role"] and rows[2][3] == "augmented"
