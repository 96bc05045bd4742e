"""Tests for the AVD -> label mappers and the dummy baselines."""

import numpy as np
import pytest

from emodim.mapping import (
    DummyMapper,
    GaussianMapper,
    fit_2lp,
    fit_gaussian,
    fit_knn,
    load_mapper,
    save_mapper,
)
from emodim.metrics import confusion, unweighted_recall, weighted_recall

from oracles import gaussian_decisions_direct, knn_decisions_direct


def blob_data(rng, means, n_per, scale=0.05):
    points, labels = [], []
    for c, mu in enumerate(means):
        points.append(rng.normal(mu, scale, size=(n_per, 3)))
        labels += [c] * n_per
    return np.vstack(points), np.array(labels)


class TestFitGaussian:
    def test_recovers_generator_means(self):
        rng = np.random.default_rng(0)
        pts, labs = blob_data(rng, [(0.2, 0.2, 0.2), (0.8, 0.8, 0.8)], 2000)
        m = fit_gaussian(pts, labs, 2)
        assert np.allclose(m.means[0], 0.2, atol=0.01)
        assert np.allclose(m.means[1], 0.8, atol=0.01)

    def test_population_covariance(self):
        pts = np.array([[0.0, 0, 0], [2.0, 0, 0], [1.0, 1, 0], [1.0, -1, 0]])
        labs = np.zeros(4, dtype=int)
        m = fit_gaussian(pts, labs, 1)
        # population normalization divides by n, not n-1
        assert m.covs[0][0, 0] == pytest.approx(0.5 + 1e-6)
        assert m.covs[0][1, 1] == pytest.approx(0.5 + 1e-6)

    def test_diagonal_zeroes_off_diagonals(self):
        rng = np.random.default_rng(1)
        base = rng.normal(size=(50, 1))
        pts = np.hstack([base, base * 0.5, rng.normal(size=(50, 1))])
        m = fit_gaussian(pts, np.zeros(50, dtype=int), 1, diagonal=True)
        off = m.covs[0] - np.diag(np.diag(m.covs[0]))
        assert np.all(off == 0.0)

    def test_covariance_symmetric(self):
        rng = np.random.default_rng(2)
        pts, labs = blob_data(rng, [(0.3, 0.5, 0.4)], 100)
        m = fit_gaussian(pts, labs, 1)
        assert np.abs(m.covs[0] - m.covs[0].T).max() < 1e-12

    def test_class_with_one_point_rejected(self):
        pts = np.array([[0.1, 0.1, 0.1], [0.2, 0.2, 0.2], [0.9, 0.9, 0.9]])
        with pytest.raises(ValueError, match="class 1"):
            fit_gaussian(pts, np.array([0, 0, 1]), 2)

    def test_nonfinite_points_rejected(self):
        pts = np.array([[0.1, 0.1, np.nan], [0.2, 0.2, 0.2]])
        with pytest.raises(ValueError, match="finite"):
            fit_gaussian(pts, np.zeros(2, dtype=int), 1)

    def test_degenerate_cluster_regularized(self):
        # identical points: covariance is exactly 1e-6 * I, still invertible
        pts = np.tile([0.5, 0.5, 0.5], (5, 1))
        m = fit_gaussian(pts, np.zeros(5, dtype=int), 1)
        assert np.allclose(m.covs[0], 1e-6 * np.eye(3))

    def test_priors_from_counts(self):
        rng = np.random.default_rng(3)
        pts, labs = blob_data(rng, [(0.2,) * 3, (0.8,) * 3], 10)
        pts = np.vstack([pts, rng.normal(0.5, 0.05, size=(30, 3))])
        labs = np.concatenate([labs, np.full(30, 1)])
        m = fit_gaussian(pts, labs, 2)
        assert m.priors[0] == pytest.approx(10 / 50)
        assert m.priors[1] == pytest.approx(40 / 50)


class TestPredictGaussian:
    def setup_method(self):
        rng = np.random.default_rng(10)
        self.pts, self.labs = blob_data(
            rng, [(0.2, 0.3, 0.4), (0.7, 0.6, 0.5), (0.4, 0.8, 0.2)], 200, 0.08
        )
        self.mapper = fit_gaussian(self.pts, self.labs, 3)

    def test_query_at_class_mean(self):
        preds = self.mapper.predict(self.mapper.means)
        assert list(preds) == [0, 1, 2]

    def test_equidistant_tie_goes_to_lowest_index(self):
        cov = np.tile(0.01 * np.eye(3), (2, 1, 1))
        m = GaussianMapper(np.array([[0.2] * 3, [0.8] * 3]), cov,
                           np.array([0.5, 0.5]))
        assert m.predict([[0.5, 0.5, 0.5]])[0] == 0

    def test_matches_density_oracle(self):
        rng = np.random.default_rng(11)
        queries = rng.uniform(0, 1, size=(1000, 3))
        got = self.mapper.predict(queries)
        want = gaussian_decisions_direct(
            self.mapper.means, self.mapper.covs, self.mapper.priors, queries
        )
        assert list(got) == want

    def test_matches_density_oracle_with_prior(self):
        rng = np.random.default_rng(12)
        queries = rng.uniform(0, 1, size=(500, 3))
        m = GaussianMapper(self.mapper.means, self.mapper.covs,
                           np.array([0.6, 0.3, 0.1]), use_prior=True)
        want = gaussian_decisions_direct(m.means, m.covs, m.priors, queries,
                                         use_prior=True)
        assert list(m.predict(queries)) == want

    def test_constant_shift_invariance(self):
        rng = np.random.default_rng(13)
        queries = rng.uniform(0, 1, size=(200, 3))
        base = self.mapper.log_likelihood(queries)
        assert list((base + 7.3).argmax(axis=1)) == list(base.argmax(axis=1))

    def test_relabeling_permutation(self):
        rng = np.random.default_rng(14)
        queries = rng.uniform(0, 1, size=(300, 3))
        perm = np.array([2, 0, 1])  # new label of old class c is perm[c]
        relabeled = fit_gaussian(self.pts, perm[self.labs], 3)
        base = self.mapper.predict(queries)
        assert list(relabeled.predict(queries)) == list(perm[base])


class TestKnn:
    def test_k1_exact_hit(self):
        pts = np.array([[0.1, 0.1, 0.1], [0.9, 0.9, 0.9]])
        m = fit_knn(pts, [0, 1], 2, k=1)
        assert m.predict([[0.9, 0.9, 0.9]])[0] == 1

    def test_colocated_majority(self):
        pts = np.vstack([np.tile([0.3, 0.3, 0.3], (60, 1)),
                         np.tile([0.9, 0.9, 0.9], (10, 1))])
        labs = np.concatenate([np.zeros(60, dtype=int), np.ones(10, dtype=int)])
        m = fit_knn(pts, labs, 2, k=50)
        assert m.predict([[0.31, 0.3, 0.3]])[0] == 0

    def test_matches_full_sort_oracle(self):
        rng = np.random.default_rng(20)
        pts = rng.uniform(0, 1, size=(200, 3))
        labs = rng.integers(0, 4, size=200)
        m = fit_knn(pts, labs, 4, k=50)
        queries = rng.uniform(0, 1, size=(1000, 3))
        want = knn_decisions_direct(pts, labs, 50, queries, 4)
        assert list(m.predict(queries)) == want

    def test_training_smaller_than_k_rejected(self):
        m = fit_knn(np.zeros((10, 3)), np.zeros(10, dtype=int), 2, k=50)
        with pytest.raises(ValueError, match="k=50"):
            m.predict([[0.5, 0.5, 0.5]])

    def test_k_below_one_rejected(self):
        with pytest.raises(ValueError, match="at least 1"):
            fit_knn(np.zeros((10, 3)), np.zeros(10, dtype=int), 2, k=0)

    def test_duplicated_training_set_odd_margin(self):
        rng = np.random.default_rng(21)
        pts = rng.uniform(0, 1, size=(100, 3))
        labs = rng.integers(0, 3, size=100)
        queries = rng.uniform(0, 1, size=(200, 3))
        single = fit_knn(pts, labs, 3, k=7)
        double = fit_knn(np.repeat(pts, 2, axis=0), np.repeat(labs, 2), 3, k=14)
        p1, p2 = single.predict(queries), double.predict(queries)
        for i, q in enumerate(queries):
            d = np.linalg.norm(pts - q, axis=1)
            near = labs[np.argsort(d, kind="stable")[:7]]
            votes = np.bincount(near, minlength=3)
            top2 = np.sort(votes)[-2:]
            if top2[1] - top2[0] >= 1 and top2[1] != top2[0]:  # odd-free margin
                assert p1[i] == p2[i]

    def test_vote_tie_inverse_distance(self):
        # 1 point of class 0 very close, 1 of class 1 farther: k=2 ties the
        # vote; inverse distance favors the closer class
        pts = np.array([[0.50, 0.5, 0.5], [0.60, 0.5, 0.5]])
        m = fit_knn(pts, [1, 0], 2, k=2)
        assert m.predict([[0.51, 0.5, 0.5]])[0] == 1

    def test_permutation_deterministic(self):
        rng = np.random.default_rng(22)
        pts = rng.uniform(0, 1, size=(120, 3)).round(1)  # many exact ties
        labs = rng.integers(0, 3, size=120)
        queries = rng.uniform(0, 1, size=(100, 3)).round(1)
        m = fit_knn(pts, labs, 3, k=9)
        a = m.predict(queries)
        b = m.predict(queries)
        assert list(a) == list(b)


class TestTlp:
    def test_separable_data_high_accuracy(self):
        rng = np.random.default_rng(30)
        pts, labs = blob_data(rng, [(0.2, 0.2, 0.2), (0.8, 0.8, 0.8)], 200, 0.05)
        m = fit_2lp(pts, labs, 2, seed=0)
        acc = (m.predict(pts) == labs).mean()
        assert acc >= 0.95

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(31)
        pts, labs = blob_data(rng, [(0.3,) * 3, (0.7,) * 3], 100)
        a = fit_2lp(pts, labs, 2, seed=5).predict(pts)
        b = fit_2lp(pts, labs, 2, seed=5).predict(pts)
        assert list(a) == list(b)

    def test_output_in_range(self):
        rng = np.random.default_rng(32)
        pts, labs = blob_data(rng, [(0.2,) * 3, (0.5,) * 3, (0.8,) * 3], 40)
        m = fit_2lp(pts, labs, 3, seed=1)
        preds = m.predict(rng.uniform(0, 1, size=(500, 3)))
        assert preds.min() >= 0 and preds.max() < 3

    def test_topology(self):
        rng = np.random.default_rng(33)
        pts, labs = blob_data(rng, [(0.2,) * 3, (0.8,) * 3], 30)
        m = fit_2lp(pts, labs, 2, seed=0)
        shapes = [p.value.shape for p in m.model.params]
        assert (3, 5) in shapes and (5, 5) in shapes and (5, 2) in shapes

    def test_empty_class_rejected(self):
        with pytest.raises(ValueError, match="class 1"):
            fit_2lp(np.zeros((10, 3)), np.zeros(10, dtype=int), 2)


class TestDummies:
    def test_random_uniform_ur(self):
        preds = DummyMapper("random").predict_n(100_000, 4, seed=0)
        refs = np.random.default_rng(1).integers(0, 4, size=100_000)
        cm = confusion(refs, preds, 4)
        assert unweighted_recall(cm) == pytest.approx(0.25, abs=0.01)

    def test_prob_random_wr_is_sum_of_squares(self):
        priors = np.array([0.309, 0.296, 0.199, 0.196])
        rng = np.random.default_rng(2)
        refs = rng.choice(4, size=200_000, p=priors)
        preds = DummyMapper("prob_random", priors).predict_n(200_000, 4, seed=3)
        cm = confusion(refs, preds, 4)
        expected = float((priors ** 2).sum())  # 0.2620
        se = np.sqrt(expected * (1 - expected) / 200_000)
        assert abs(weighted_recall(cm) - expected) < 3 * se

    def test_major_class_constant(self):
        priors = np.array([0.2, 0.5, 0.3])
        preds = DummyMapper("major_class", priors).predict_n(100, 3)
        assert np.all(preds == 1)

    def test_major_class_ur_one_over_k(self):
        priors = np.array([0.533, 0.293, 0.066, 0.054, 0.054])
        rng = np.random.default_rng(4)
        refs = rng.choice(5, size=50_000, p=priors)
        preds = DummyMapper("major_class", priors).predict_n(50_000, 5)
        cm = confusion(refs, preds, 5)
        assert unweighted_recall(cm) == pytest.approx(0.20, abs=1e-12)

    def test_bad_kind_rejected(self):
        with pytest.raises(ValueError, match="unknown dummy"):
            DummyMapper("oracle")

    def test_missing_priors_rejected(self):
        with pytest.raises(ValueError, match="priors"):
            DummyMapper("prob_random")


class TestFitSanity:
    def test_mappers_beat_major_class_on_train(self):
        rng = np.random.default_rng(40)
        means = [(0.2, 0.3, 0.3), (0.7, 0.7, 0.4), (0.5, 0.2, 0.8)]
        pts, labs = blob_data(rng, means, 100, 0.08)
        priors = np.bincount(labs) / len(labs)
        mc_wr = priors.max()
        for mapper in (fit_gaussian(pts, labs, 3),
                       fit_knn(pts, labs, 3, k=50),
                       fit_2lp(pts, labs, 3, seed=0)):
            cm = confusion(labs, mapper.predict(pts), 3)
            assert weighted_recall(cm) >= mc_wr


class TestSerialization:
    def test_gaussian_round_trip(self, tmp_path):
        rng = np.random.default_rng(50)
        pts, labs = blob_data(rng, [(0.2,) * 3, (0.8,) * 3], 50)
        m = fit_gaussian(pts, labs, 2)
        path = tmp_path / "g.json"
        save_mapper(m, path)
        m2 = load_mapper(path)
        assert np.array_equal(m.means, m2.means)
        assert np.array_equal(m.covs, m2.covs)
        queries = rng.uniform(0, 1, size=(200, 3))
        assert list(m.predict(queries)) == list(m2.predict(queries))

    def test_knn_round_trip(self, tmp_path):
        rng = np.random.default_rng(51)
        pts = rng.uniform(0, 1, size=(80, 3))
        labs = rng.integers(0, 3, size=80)
        m = fit_knn(pts, labs, 3, k=10)
        path = tmp_path / "k.json"
        save_mapper(m, path)
        m2 = load_mapper(path)
        assert m2.k == 10 and m2.n_classes == 3
        assert np.array_equal(m.points, m2.points)
        queries = rng.uniform(0, 1, size=(100, 3))
        assert list(m.predict(queries)) == list(m2.predict(queries))

    def test_exact_float_round_trip(self, tmp_path):
        # full 64-bit precision survives the JSON text
        m = GaussianMapper(
            np.array([[0.1 + 1e-16, 0.2, 0.3], [0.7, 0.8, 0.9]]),
            np.tile(0.0123456789012345678 * np.eye(3), (2, 1, 1)) + 1e-6,
            np.array([1 / 3, 2 / 3]),
        )
        path = tmp_path / "g.json"
        save_mapper(m, path)
        m2 = load_mapper(path)
        assert np.array_equal(m.means, m2.means)
        assert np.array_equal(m.covs, m2.covs)
        assert np.array_equal(m.priors, m2.priors)

    def test_unknown_type_rejected(self, tmp_path):
        path = tmp_path / "x.json"
        path.write_text('{"type": "mystery"}')
        with pytest.raises(ValueError, match="mystery"):
            load_mapper(path)

    def test_tlp_not_serializable_here(self, tmp_path):
        rng = np.random.default_rng(52)
        pts, labs = blob_data(rng, [(0.2,) * 3, (0.8,) * 3], 30)
        m = fit_2lp(pts, labs, 2, seed=0)
        with pytest.raises(TypeError):
            save_mapper(m, tmp_path / "t.json")
