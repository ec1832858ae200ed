"""k-means codebook, BoW/PBoW encoder and max-voting tests."""

import numpy as np
import pytest

from regbank.baselines import (Codebook, assign_nearest, bow_encode, kmeans,
                               max_vote, pbow_encode)
from regbank.errors import EmptyEvent, TooFewPoints


class TestKmeans:
    def test_two_well_separated_groups(self):
        pts = np.asarray([[0.0], [1.0], [10.0], [11.0]])
        cb = kmeans(pts, 2, seed=0)
        got = sorted(float(c[0]) for c in cb.centroids)
        np.testing.assert_allclose(got, [0.5, 10.5])

    def test_k_equals_n(self):
        pts = np.asarray([[0.0], [3.0], [7.0]])
        cb = kmeans(pts, 3, seed=1)
        got = sorted(float(c[0]) for c in cb.centroids)
        np.testing.assert_allclose(got, [0.0, 3.0, 7.0])

    def test_inertia_non_increasing(self):
        rng = np.random.default_rng(2)
        for seed in range(5):
            pts = rng.normal(size=(60, 3))
            cb = kmeans(pts, 5, seed=seed)
            path = np.asarray(cb.inertia_path)
            assert (np.diff(path) <= 1e-9).all()

    def test_too_few_distinct_points(self):
        pts = np.tile([1.0, 2.0], (5, 1))
        with pytest.raises(TooFewPoints):
            kmeans(pts, 2, seed=0)

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(3)
        pts = rng.normal(size=(40, 2))
        a = kmeans(pts, 4, seed=9)
        b = kmeans(pts, 4, seed=9)
        np.testing.assert_array_equal(a.centroids, b.centroids)


class TestAssignment:
    def test_matches_brute_force_scan(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            pts = rng.normal(size=(30, 3))
            cents = rng.normal(size=(6, 3))
            fast = assign_nearest(pts, cents)
            for i, p in enumerate(pts):
                dists = [np.sum((p - c) ** 2) for c in cents]
                assert fast[i] == int(np.argmin(dists))


class TestBowEncode:
    def test_counts_then_normalize(self):
        cb = Codebook(np.asarray([[0.0], [10.0]]))
        segs = np.asarray([[1.0], [2.0], [9.0]])
        np.testing.assert_allclose(bow_encode(segs, cb), [2 / 3, 1 / 3])

    def test_one_hot_when_one_centroid_dominates(self):
        cb = Codebook(np.asarray([[0.0], [100.0]]))
        segs = np.asarray([[1.0], [2.0], [3.0]])
        np.testing.assert_allclose(bow_encode(segs, cb), [1.0, 0.0])

    def test_histogram_sums_to_one(self):
        rng = np.random.default_rng(5)
        cb = Codebook(rng.normal(size=(8, 4)))
        for _ in range(10):
            segs = rng.normal(size=(int(rng.integers(1, 40)), 4))
            assert bow_encode(segs, cb).sum() == pytest.approx(1.0, abs=1e-9)

    def test_empty_event(self):
        cb = Codebook(np.zeros((2, 3)))
        with pytest.raises(EmptyEvent):
            bow_encode(np.zeros((0, 3)), cb)


class TestPbowEncode:
    def test_level_one_equals_bow(self):
        rng = np.random.default_rng(6)
        cb = Codebook(rng.normal(size=(5, 3)))
        segs = rng.normal(size=(11, 3))
        np.testing.assert_array_equal(pbow_encode(segs, cb, 1),
                                      bow_encode(segs, cb))

    def test_dimension_formula(self):
        rng = np.random.default_rng(7)
        cb = Codebook(rng.normal(size=(50, 2)))
        segs = rng.normal(size=(20, 2))
        assert pbow_encode(segs, cb, 2).shape == (150,)
        assert pbow_encode(segs, cb, 3).shape == (350,)

    def test_short_event_empty_cells_are_zero(self):
        """A 1-segment event at level 2 leaves the second cell all-zero."""
        rng = np.random.default_rng(8)
        cb = Codebook(rng.normal(size=(4, 2)))
        segs = rng.normal(size=(1, 2))
        out = pbow_encode(segs, cb, 2)
        # layout: level0 cell + level1 two cells; the final cell saw nothing
        assert out.shape == (12,)
        np.testing.assert_allclose(out[8:], 0.0)
        assert out.sum() == pytest.approx(1.0, abs=1e-9)

    def test_remainder_goes_to_earlier_cells(self):
        cb = Codebook(np.asarray([[0.0], [10.0]]))
        segs = np.asarray([[0.0], [0.0], [10.0]])
        out = pbow_encode(segs, cb, 2)
        # level 1 splits 3 segments as [2, 1]
        cell1 = out[2:4] * out.sum()
        np.testing.assert_allclose(out[2:4] / out[2:4].sum(), [1.0, 0.0])
        np.testing.assert_allclose(out[4:6] / out[4:6].sum(), [0.0, 1.0])

    def test_global_l1(self):
        rng = np.random.default_rng(9)
        cb = Codebook(rng.normal(size=(6, 3)))
        segs = rng.normal(size=(9, 3))
        assert pbow_encode(segs, cb, 3).sum() == pytest.approx(1.0, abs=1e-9)


class TestMaxVote:
    def test_argmax(self):
        assert max_vote(np.asarray([0.1, 0.9, 0.3])) == 1

    def test_tie_goes_to_lowest_index(self):
        assert max_vote(np.asarray([0.5, 0.5, 0.5])) == 0

    def test_invariant_under_positive_scaling(self):
        rng = np.random.default_rng(10)
        for _ in range(20):
            phi = rng.random(5)
            assert max_vote(phi) == max_vote(7.3 * phi)
