from functools import reduce

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xormixfl.blending import BlendParams, blend_chain, blend_pair
from xormixfl.dataset import Dataset, Sample
from xormixfl.errors import ConfigError, EmptyPool, LengthMismatch


def pool(values, label=3):
    return [Sample(np.array(v, dtype=np.uint8), label, i) for i, v in enumerate(values)]


class FixedOrder:
    """Stand-in generator whose ``choice`` returns draws in list order."""

    def choice(self, n, size, replace):
        return np.arange(size)


def test_blend_pair_examples():
    assert blend_pair([100, 200], [50, 100], 0.5).tolist() == [75, 150]
    assert blend_pair([0], [255], 0.95).tolist() == pytest.approx([12.75])
    a = np.array([1.0, 7.5, 200.0])
    assert np.allclose(blend_pair(a, a, 0.3), a)


def test_blend_pair_length_mismatch():
    with pytest.raises(LengthMismatch):
        blend_pair([1, 2], [1], 0.5)


def test_p1_returns_one_raw_draw(rng):
    samples = pool([[10, 20], [30, 40], [50, 60]])
    b = blend_chain(samples, BlendParams(0.5, 1), rng)
    assert len(b.contributors) == 1
    assert b.values.tolist() == samples[b.contributors[0]].pixels.tolist()


def test_p2_mean_of_two_any_order(rng):
    b = blend_chain(pool([[0], [128]]), BlendParams(0.5, 2), rng)
    assert b.values.tolist() == [64.0]
    assert sorted(b.contributors) == [0, 1]


def test_p3_recurrence_matches_independent_fold():
    draws = [[0], [128], [255]]
    b = blend_chain(pool(draws), BlendParams(0.5, 3), FixedOrder())
    fold = reduce(lambda acc, x: 0.5 * acc + 0.5 * x, [np.float64(d[0]) for d in draws])
    assert b.values.tolist() == [159.5]
    assert b.values[0] == fold
    assert b.contributors == (0, 1, 2)


def test_p_larger_than_pool_uses_everything(rng):
    b = blend_chain(pool([[1], [2]]), BlendParams(0.5, 5), rng)
    assert sorted(b.contributors) == [0, 1]


def test_alpha_near_one_tracks_first_draw():
    samples = pool([[0, 10, 200], [255, 255, 0]])
    b = blend_chain(samples, BlendParams(0.999, 2), FixedOrder())
    assert np.abs(b.values - samples[0].pixels).max() <= 0.3


def test_accepts_dataset_and_keeps_provenance(rng):
    d = Dataset(np.array([[1, 1], [2, 2]], np.uint8), [4, 4], ids=[100, 200])
    b = blend_chain(d, BlendParams(0.5, 2), rng)
    assert sorted(b.contributors) == [100, 200] and b.label == 4


def test_empty_pool(rng):
    with pytest.raises(EmptyPool):
        blend_chain([], BlendParams(), rng)


def test_mixed_labels_rejected(rng):
    with pytest.raises(ValueError):
        blend_chain([Sample(np.zeros(2, np.uint8), 1), Sample(np.zeros(2, np.uint8), 2)], BlendParams(), rng)


@pytest.mark.parametrize("alpha", [0.0, 1.0, 1.2, -0.1])
def test_alpha_bounds(alpha):
    with pytest.raises(ConfigError, match=r"blend.alpha: out of \(0,1\)"):
        BlendParams(alpha=alpha)


def test_p_must_be_positive():
    with pytest.raises(ConfigError):
        BlendParams(p=0)


def test_same_seed_same_blend():
    samples = pool(np.random.default_rng(0).integers(0, 256, (20, 8)))
    a = blend_chain(samples, BlendParams(0.4, 3), np.random.default_rng(9))
    b = blend_chain(samples, BlendParams(0.4, 3), np.random.default_rng(9))
    assert a.contributors == b.contributors and np.array_equal(a.values, b.values)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.lists(st.integers(0, 255), min_size=4, max_size=4), min_size=1, max_size=6),
       st.floats(0.01, 0.99), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_blend_stays_in_convex_hull(rows, alpha, p, seed):
    samples = pool(rows)
    b = blend_chain(samples, BlendParams(alpha, p), np.random.default_rng(seed))
    used = np.array([rows[i] for i in b.contributors], dtype=np.float64)
    assert np.all(b.values >= used.min(axis=0) - 1e-9)
    assert np.all(b.values <= used.max(axis=0) + 1e-9)
    assert len(set(b.contributors)) == len(b.contributors) == min(p, len(rows))
