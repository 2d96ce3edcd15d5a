"""Dissimilarity-based privacy scoring of augmented samples, plus classical MDS."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_features, check_same_length
from .dataset import Dataset
from .errors import DegenerateSpectrum, EmptyInput, UnknownContributor

PRIVACY_COLUMNS = ["method", "M", "p", "alpha", "count", "mean", "std"]


def dissimilarity(a, b) -> float:
    """Euclidean distance between two pixel vectors on the raw intensity scale."""
    a, b = check_same_length(a, b, "pixel vectors")
    diff = a.astype(np.float64) - b.astype(np.float64)
    return float(np.sqrt(np.dot(diff, diff)))


@dataclass(frozen=True)
class PrivacyRecord:
    sample_id: str
    min_distance: float
    nearest_contributor: int

    @property
    def void(self) -> bool:
        return self.min_distance == 0.0


@dataclass(frozen=True)
class PrivacySummary:
    mean: float
    std_dev: float
    count: int
    method_tag: str
    M: int
    p: int
    alpha: float
    void_count: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> PrivacySummary:
        return cls(**d)

    def csv_row(self) -> dict:
        return {"method": self.method_tag, "M": self.M, "p": self.p, "alpha": self.alpha,
                "count": self.count, "mean": self.mean, "std": self.std_dev}


class RawIndex:
    """Resolve raw-sample ids to pixel rows of a source dataset."""

    def __init__(self, source: Dataset):
        self.source = source
        if np.array_equal(source.ids, np.arange(len(source))):
            self._rows = None
        else:
            self._rows = {int(i): r for r, i in enumerate(source.ids)}

    def __getitem__(self, sample_id: int) -> np.ndarray:
        if self._rows is None:
            if not 0 <= sample_id < len(self.source):
                raise UnknownContributor(sample_id)
            return self.source.images[sample_id]
        try:
            return self.source.images[self._rows[int(sample_id)]]
        except KeyError:
            raise UnknownContributor(sample_id) from None


def score_sample(augmented, contributors: Sequence[int], raws: Mapping[int, np.ndarray] | RawIndex,
                 sample_id: str = "") -> PrivacyRecord:
    """Smallest distance from ``augmented`` to any of its raw contributors."""
    if not len(contributors):
        raise EmptyInput("augmented sample has no contributors")
    best, nearest = np.inf, -1
    for cid in contributors:
        try:
            raw = raws[cid]
        except KeyError:
            raise UnknownContributor(cid) from None
        d = dissimilarity(augmented, raw)
        if d < best:
            best, nearest = d, int(cid)
    return PrivacyRecord(sample_id, best, nearest)


def score_augmented(decoded: Iterable, source: Dataset) -> list[PrivacyRecord]:
    """Score every decoded/augmented sample (anything with ``pixels`` and ``contributors``)."""
    index = RawIndex(source)
    return [score_sample(s.pixels, s.contributors, index, f"aug-{i}") for i, s in enumerate(decoded)]


def summarize(records: Sequence[PrivacyRecord], tag: str, M: int, p: int, alpha: float) -> PrivacySummary:
    if not records:
        raise EmptyInput("no privacy records to summarize")
    d = np.array([r.min_distance for r in records])
    return PrivacySummary(float(d.mean()), float(d.std()), len(d), tag, int(M), int(p), float(alpha),
                          int(np.sum(d == 0)))


def write_privacy_csv(summaries: Iterable[PrivacySummary], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=PRIVACY_COLUMNS)
        w.writeheader()
        for s in summaries:
            w.writerow(s.csv_row())


def pairwise_distances(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    sq = np.einsum("ij,ij->i", X, X)
    d2 = sq[:, None] + sq[None, :] - 2 * X @ X.T
    np.fill_diagonal(d2, 0)
    return np.sqrt(np.maximum(d2, 0))


def classical_mds(D, n_components: int | None = 2) -> tuple[np.ndarray, np.ndarray]:
    """Torgerson scaling of a distance matrix.

    Returns ``(coords, eigenvalues)`` with eigenvalues sorted descending. With
    ``n_components=None`` every positive eigen-direction is kept, which
    reproduces Euclidean input distances exactly.
    """
    D = np.asarray(D, dtype=np.float64)
    n = len(D)
    if n < 3:
        raise ValueError("classical MDS needs at least 3 points")
    J = np.eye(n) - 1.0 / n
    B = -0.5 * J @ (D ** 2) @ J
    evals, evecs = np.linalg.eigh((B + B.T) / 2)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    scale = max(abs(evals[0]), 1.0)
    if evals[0] <= 1e-12 * scale or np.allclose(D, 0):
        raise DegenerateSpectrum("top eigenvalue of the centred Gram matrix is not positive")
    if n_components is None:
        keep = np.flatnonzero(evals > 1e-10 * scale)
    else:
        keep = np.arange(min(n_components, n))
    coords = evecs[:, keep] * np.sqrt(np.maximum(evals[keep], 0))
    return coords, evals


def mds_embed_2d(samples) -> np.ndarray:
    X = check_features(np.asarray(samples), min_samples=3)
    return classical_mds(pairwise_distances(X), 2)[0]


class ClassicalMDS(BaseEstimator):
    """Classical (Torgerson) multidimensional scaling.

    ``dissimilarity`` is ``"euclidean"`` (rows of X are samples) or
    ``"precomputed"`` (X is a square distance matrix). ``n_components=None``
    keeps the full positive spectrum. Like scikit-learn's metric MDS there is
    no out-of-sample ``transform``.
    """

    def __init__(self, n_components=2, dissimilarity="euclidean"):
        self.n_components = n_components
        self.dissimilarity = dissimilarity

    def fit(self, X, y=None):
        self.fit_transform(X)
        return self

    def fit_transform(self, X, y=None):
        if self.dissimilarity == "precomputed":
            D = check_features(X, min_samples=3)
            if D.shape[0] != D.shape[1]:
                raise ValueError("precomputed dissimilarities must be a square matrix")
        elif self.dissimilarity == "euclidean":
            D = pairwise_distances(check_features(X, min_samples=3))
        else:
            raise ValueError(f"unknown dissimilarity {self.dissimilarity!r}")
        self.embedding_, self.eigenvalues_ = classical_mds(D, self.n_components)
        return self.embedding_


def write_embedding_csv(sample_ids, coords, roles, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["sample_id", "x", "y", "role"])
        for sid, (x, y), role in zip(sample_ids, np.asarray(coords)[:, :2], roles):
            w.writerow([sid, f"{x:.6f}", f"{y:.6f}", role])
