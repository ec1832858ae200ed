"""Descriptor pipeline tests, checked against a scalar brute-force oracle."""

import math

import numpy as np
import pytest

from regbank.descriptor import (NormalizationStats, ScoreCurves, extract_bor,
                                extract_training_descriptors,
                                extract_unstructured, fit_normalizer,
                                normalize, pad_offset, pad_sequence,
                                phi_entry, score_curves,
                                weighted_score_curves)
from regbank.matcher import MatcherConfig, train_folded_matchers, train_matcher
from regbank.regforest import (ForestConfig, RegressionTree, RegressorForest,
                               train_forest)


def random_forest(rng, dim, n_trees, class_id=0, max_mean=8.0):
    """Small regressor forest with random structure and leaf Gaussians."""
    trees = []
    for _ in range(n_trees):
        n_internal = int(rng.integers(0, 4))
        feature, threshold, left, right = [], [], [], []
        mean_on, var_on, mean_off, var_off, count = [], [], [], [], []

        def add_subtree(depth):
            make_leaf = depth >= 3 or len(feature) >= 2 * n_internal
            idx = len(feature)
            if make_leaf or rng.random() < 0.4:
                feature.append(-1)
                threshold.append(0.0)
                left.append(-1)
                right.append(-1)
                mean_on.append(float(rng.uniform(0, max_mean)))
                var_on.append(float(rng.uniform(0.5, 4.0)))
                mean_off.append(float(rng.uniform(0, max_mean)))
                var_off.append(float(rng.uniform(0.5, 4.0)))
                count.append(int(rng.integers(1, 10)))
                return idx
            feature.append(int(rng.integers(0, dim)))
            threshold.append(float(rng.normal()))
            left.append(-1)
            right.append(-1)
            mean_on.append(0.0)
            var_on.append(1.0)
            mean_off.append(0.0)
            var_off.append(1.0)
            count.append(0)
            left[idx] = add_subtree(depth + 1)
            right[idx] = add_subtree(depth + 1)
            return idx

        add_subtree(0)
        trees.append(RegressionTree(
            feature=np.asarray(feature, dtype=np.int32),
            threshold=np.asarray(threshold),
            left=np.asarray(left, dtype=np.int32),
            right=np.asarray(right, dtype=np.int32),
            leaf_mean_on=np.asarray(mean_on),
            leaf_var_on=np.asarray(var_on),
            leaf_mean_off=np.asarray(mean_off),
            leaf_var_off=np.asarray(var_off),
            leaf_count=np.asarray(count, dtype=np.int32),
        ))
    return RegressorForest(trees=trees, class_id=class_id,
                           config=ForestConfig(n_trees=n_trees), seed=(0,))


def scalar_route(tree, x):
    node = 0
    while tree.feature[node] >= 0:
        node = (int(tree.right[node]) if x[tree.feature[node]]
                > tree.threshold[node] else int(tree.left[node]))
    return node


def oracle_curves(forest, weights, padded):
    """Triple loop over segments, grid points and trees with scalar math."""
    m = len(padded)
    f_plus = [0.0] * m
    f_minus = [0.0] * m
    t_count = forest.n_trees
    for i in range(m):
        w = float(weights[i])
        for tree in forest.trees:
            node = scalar_route(tree, padded[i])
            mu_on = i - float(tree.leaf_mean_on[node])
            v_on = float(tree.leaf_var_on[node])
            mu_off = i + float(tree.leaf_mean_off[node])
            v_off = float(tree.leaf_var_off[node])
            for n in range(m):
                f_plus[n] += w * math.exp(-0.5 * (n - mu_on) ** 2 / v_on) \
                    / math.sqrt(2 * math.pi * v_on) / t_count
                f_minus[n] += w * math.exp(-0.5 * (n - mu_off) ** 2 / v_off) \
                    / math.sqrt(2 * math.pi * v_off) / t_count
    return np.asarray(f_plus), np.asarray(f_minus)


def oracle_phi(curves_plus, curves_minus):
    return 0.5 * (max(curves_plus) + max(curves_minus))


class TestPadSequence:
    def test_factor_five_geometry(self):
        padded = pad_sequence(np.ones((4, 3)), 5)
        assert padded.shape == (20, 3)
        assert pad_offset(4, 5) == 8
        np.testing.assert_allclose(padded[:8], 0.0)
        np.testing.assert_allclose(padded[8:12], 1.0)
        np.testing.assert_allclose(padded[12:], 0.0)

    def test_factor_one_is_identity(self):
        seq = np.random.default_rng(0).normal(size=(3, 2))
        np.testing.assert_array_equal(pad_sequence(seq, 1), seq)

    def test_even_factor_rejected(self):
        with pytest.raises(ValueError):
            pad_sequence(np.ones((2, 2)), 4)


class TestScoreCurves:
    def test_single_segment_hand_value(self):
        """One weight-1 segment, one tree (mean 3, var 1): the onset curve
        peaks at n'-3 with density 1/sqrt(2*pi)."""
        forest = random_forest(np.random.default_rng(0), dim=2, n_trees=1)
        tree = forest.trees[0]
        # overwrite with a single known leaf
        forest.trees[0] = RegressionTree(
            feature=np.asarray([-1], dtype=np.int32),
            threshold=np.zeros(1),
            left=np.asarray([-1], dtype=np.int32),
            right=np.asarray([-1], dtype=np.int32),
            leaf_mean_on=np.asarray([3.0]), leaf_var_on=np.asarray([1.0]),
            leaf_mean_off=np.asarray([2.0]), leaf_var_off=np.asarray([1.0]),
            leaf_count=np.asarray([1], dtype=np.int32))
        padded = np.zeros((15, 2))
        weights = np.zeros(15)
        weights[10] = 1.0
        curves = weighted_score_curves(forest, weights, padded)
        assert curves.f_plus[7] == pytest.approx(1 / math.sqrt(2 * math.pi),
                                                 abs=1e-12)
        assert curves.f_minus[12] == pytest.approx(1 / math.sqrt(2 * math.pi),
                                                   abs=1e-12)

    def test_zero_weights_zero_curves(self):
        rng = np.random.default_rng(1)
        forest = random_forest(rng, dim=3, n_trees=2)
        padded = rng.normal(size=(12, 3))
        curves = weighted_score_curves(forest, np.zeros(12), padded)
        np.testing.assert_allclose(curves.f_plus, 0.0)
        np.testing.assert_allclose(curves.f_minus, 0.0)

    def test_matches_triple_loop_oracle(self):
        """Vectorised curves equal the scalar brute force within 1e-9."""
        rng = np.random.default_rng(2)
        for _ in range(25):
            dim = int(rng.integers(2, 5))
            n = int(rng.integers(1, 8))
            forest = random_forest(rng, dim=dim,
                                   n_trees=int(rng.integers(1, 4)))
            padded = pad_sequence(rng.normal(size=(n, dim)), 5)
            weights = rng.random(len(padded))
            curves = weighted_score_curves(forest, weights, padded)
            o_plus, o_minus = oracle_curves(forest, weights, padded)
            np.testing.assert_allclose(curves.f_plus, o_plus, atol=1e-9)
            np.testing.assert_allclose(curves.f_minus, o_minus, atol=1e-9)


class TestPhiEntry:
    def test_mean_of_maxima(self):
        curves = ScoreCurves(np.asarray([0.1, 0.4, 0.2]),
                             np.asarray([0.2, 0.05, 0.1]))
        assert phi_entry(curves) == pytest.approx(0.3)

    def test_zero_curves(self):
        assert phi_entry(ScoreCurves(np.zeros(5), np.zeros(5))) == 0.0

    def test_positive_scaling(self):
        rng = np.random.default_rng(3)
        f_plus, f_minus = rng.random(10), rng.random(10)
        base = phi_entry(ScoreCurves(f_plus, f_minus))
        assert phi_entry(ScoreCurves(3.5 * f_plus, 3.5 * f_minus)) \
            == pytest.approx(3.5 * base)


def trained_setup(rng, n_classes=2, n_events=6, segs=4, dim=4):
    feats, labels = [], []
    for i in range(n_events):
        c = i % n_classes
        feats.append(rng.normal(size=(segs, dim)) + 3.0 * c)
        labels.append(c)
    cfg = ForestConfig(n_trees=2, tests_per_node=20, max_depth=3,
                       min_samples=1)
    bank = [train_forest([f for f, l in zip(feats, labels) if l == c],
                         cfg, seed=c, class_id=c)
            for c in range(n_classes)]
    x = np.vstack(feats)
    y = np.concatenate([np.full(segs, l) for l in labels])
    matcher = train_matcher(x, y, MatcherConfig(n_trees=10), seed=0)
    return feats, labels, bank, matcher


class TestExtractBor:
    def test_single_class_bank(self):
        rng = np.random.default_rng(4)
        feats, labels, bank, matcher = trained_setup(rng)
        phi = extract_bor(bank[:1], matcher, feats[0])
        assert phi.shape == (1,)
        padded = pad_sequence(feats[0], 5)
        expected = phi_entry(score_curves(bank[0], matcher, padded))
        assert phi[0] == pytest.approx(expected, rel=1e-12)

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        feats, labels, bank, matcher = trained_setup(rng)
        a = extract_bor(bank, matcher, feats[1])
        b = extract_bor(bank, matcher, feats[1])
        np.testing.assert_array_equal(a, b)

    def test_bank_permutation_permutes_phi(self):
        rng = np.random.default_rng(6)
        feats, labels, bank, matcher = trained_setup(rng, n_classes=3,
                                                     n_events=9)
        phi = extract_bor(bank, matcher, feats[0])
        phi_rev = extract_bor(bank[::-1], matcher, feats[0])
        np.testing.assert_allclose(phi_rev, phi[::-1])

    def test_pipeline_matches_oracle_end_to_end(self):
        """phi equals the brute-force triple loop applied per class."""
        rng = np.random.default_rng(7)
        for _ in range(10):
            n_classes = int(rng.integers(1, 4))
            dim = 3
            bank = [random_forest(rng, dim=dim,
                                  n_trees=int(rng.integers(1, 3)),
                                  class_id=c)
                    for c in range(n_classes)]
            feats = rng.normal(size=(int(rng.integers(1, 6)), dim))
            padded = pad_sequence(feats, 5)
            # independent random posterior weights onrows of the simplex
            post = rng.random((len(padded), max(n_classes, 2)))
            post /= post.sum(axis=1, keepdims=True)

            class StubMatcher:
                classes = list(range(max(n_classes, 2)))

                def class_index(self, cid):
                    return cid

                def posterior_matrix(self, x):
                    assert len(x) == len(padded)
                    return post

            phi = extract_bor(bank, StubMatcher(), feats)
            for c, forest in enumerate(bank):
                o_plus, o_minus = oracle_curves(forest, post[:, c], padded)
                assert phi[c] == pytest.approx(oracle_phi(o_plus, o_minus),
                                               abs=1e-9)


class TestPaddingInteriorMaxima:
    def test_curve_maxima_away_from_grid_edges(self):
        """With pad factor 5 and leaf means below 2N the accumulated
        Gaussian mass peaks strictly inside the padded grid."""
        rng = np.random.default_rng(14)
        for _ in range(10):
            n = int(rng.integers(2, 10))
            forest = random_forest(rng, dim=3, n_trees=2,
                                   max_mean=2.0 * n - 1)
            padded = pad_sequence(rng.normal(size=(n, 3)), 5)
            # padding rows carry (near) zero posterior mass in practice
            weights = np.zeros(len(padded))
            weights[2 * n:3 * n] = 0.1 + rng.random(n)
            curves = weighted_score_curves(forest, weights, padded)
            m = len(padded)
            assert 0 < int(np.argmax(curves.f_plus)) < m - 1
            assert 0 < int(np.argmax(curves.f_minus)) < m - 1


class TestExtractUnstructured:
    def test_mean_of_posteriors(self):
        class StubMatcher:
            calls = []

            def posterior_matrix(self, x):
                return np.asarray([[0.2, 0.8], [0.4, 0.6]])

        out = extract_unstructured(StubMatcher(), np.zeros((2, 3)))
        np.testing.assert_allclose(out, [0.3, 0.7])

    def test_single_segment_returns_posterior(self):
        rng = np.random.default_rng(8)
        feats, labels, bank, matcher = trained_setup(rng)
        seg = feats[0][:1]
        out = extract_unstructured(matcher, seg)
        np.testing.assert_allclose(out, matcher.posterior_matrix(seg)[0],
                                   atol=1e-12)

    def test_sums_to_one(self):
        rng = np.random.default_rng(9)
        feats, labels, bank, matcher = trained_setup(rng, n_events=8)
        for f in feats:
            assert extract_unstructured(matcher, f).sum() \
                == pytest.approx(1.0, abs=1e-9)


class TestNormalization:
    def test_fit_maxima(self):
        stats = fit_normalizer(np.asarray([[1.0, 2.0], [2.0, 4.0]]))
        np.testing.assert_allclose(stats.max_phi, [2.0, 4.0])

    def test_single_vector(self):
        stats = fit_normalizer(np.asarray([[0.5, 1.5]]))
        np.testing.assert_allclose(stats.max_phi, [0.5, 1.5])

    def test_maxima_dominate(self):
        rng = np.random.default_rng(10)
        raw = rng.random((20, 4))
        stats = fit_normalizer(raw)
        assert (raw <= stats.max_phi + 1e-15).all()

    def test_normalize_example(self):
        stats = NormalizationStats(max_phi=np.asarray([2.0, 4.0]))
        out = normalize(np.asarray([1.0, 2.0]), stats)
        np.testing.assert_allclose(out.phi, [0.5, 0.5])
        assert out.state == "l1"

    def test_normalize_with_zero_entry(self):
        stats = NormalizationStats(max_phi=np.asarray([2.0, 4.0]))
        out = normalize(np.asarray([2.0, 0.0]), stats)
        np.testing.assert_allclose(out.phi, [1.0, 0.0])

    def test_zero_max_dimension_maps_to_zero(self):
        stats = NormalizationStats(max_phi=np.asarray([2.0, 0.0]))
        out = normalize(np.asarray([1.0, 5.0]), stats)
        np.testing.assert_allclose(out.phi, [1.0, 0.0])

    def test_values_above_training_max_allowed(self):
        stats = NormalizationStats(max_phi=np.asarray([1.0, 1.0]))
        scaled = np.asarray([3.0, 1.0])
        out = normalize(scaled, stats)
        np.testing.assert_allclose(out.phi, [0.75, 0.25])

    def test_all_zero_vector_stays_zero(self):
        stats = NormalizationStats(max_phi=np.asarray([1.0, 1.0]))
        out = normalize(np.zeros(2), stats)
        np.testing.assert_allclose(out.phi, 0.0)


class TestTrainingDescriptors:
    def setup_folded(self, rng, n_events=8, n_classes=2, segs=4, dim=4):
        feats, labels = [], []
        for i in range(n_events):
            c = i % n_classes
            feats.append(rng.normal(size=(segs, dim)) + 3.0 * c)
            labels.append(c)
        cfg = ForestConfig(n_trees=2, tests_per_node=15, max_depth=3,
                           min_samples=1)
        bank = [train_forest([f for f, l in zip(feats, labels) if l == c],
                             cfg, seed=c, class_id=c)
                for c in range(n_classes)]
        folded = train_folded_matchers(feats, labels, 2,
                                       MatcherConfig(n_trees=8), seed=0)
        return feats, labels, bank, folded

    def test_fold_complement_used(self):
        """With K=2, each event is scored by the other fold's matcher."""
        rng = np.random.default_rng(11)
        feats, labels, bank, folded = self.setup_folded(rng)
        raw, hats, stats, normalized = extract_training_descriptors(
            feats, bank, folded)
        for i, f in enumerate(feats):
            m = folded.matcher_for_event(i)
            expected = extract_bor(bank, m, f)
            np.testing.assert_allclose(raw[i], expected, rtol=1e-12)

    def test_rows_are_valid_descriptors(self):
        rng = np.random.default_rng(12)
        feats, labels, bank, folded = self.setup_folded(rng, n_events=10)
        raw, hats, stats, normalized = extract_training_descriptors(
            feats, bank, folded)
        assert (raw >= 0).all()
        assert (normalized >= 0).all()
        for row in normalized:
            if row.sum() > 0:
                assert row.sum() == pytest.approx(1.0, abs=1e-9)
        np.testing.assert_allclose(hats.sum(axis=1), 1.0, atol=1e-9)

    def test_workers_identical(self):
        rng = np.random.default_rng(13)
        feats, labels, bank, folded = self.setup_folded(rng)
        a = extract_training_descriptors(feats, bank, folded, workers=1)
        b = extract_training_descriptors(feats, bank, folded, workers=3)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[3], b[3])
