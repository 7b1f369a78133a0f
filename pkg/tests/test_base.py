import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from imhash.base import (KMeansConfig, kmeans, kmeans_fit, kmedians, kmedians_fit, nearest_center,
                         per_class_kmeans, random_sample, select_base, sq_dist_matrix)
from imhash.types import FeatureMatrix


def two_blobs(per=5, seed=0):
    rng = np.random.default_rng(seed)
    jitter = rng.uniform(-0.7, 0.7, size=(2 * per, 2))
    data = np.vstack([np.full((per, 2), 10.0), np.full((per, 2), -10.0)]) + jitter
    return FeatureMatrix(data)


def brute_force_two_means(X):
    best = None
    n = X.shape[0]
    for mask in itertools.product([False, True], repeat=n - 1):
        side = np.array((False,) + mask)
        if side.all() or not side.any():
            continue
        cost = sum(((X[g] - X[g].mean(0)) ** 2).sum() for g in (side, ~side))
        if best is None or cost < best[0]:
            best = (cost, np.vstack([X[~side].mean(0), X[side].mean(0)]))
    return best


class TestKMeans:
    def test_m_equals_n(self):
        X = FeatureMatrix(np.random.default_rng(1).standard_normal((12, 3)))
        res = kmeans_fit(X, KMeansConfig(12))
        assert res.sq_dist.sum() == 0.0
        order = np.lexsort(res.centers.T[::-1])
        np.testing.assert_array_equal(res.centers[order], X.data[np.lexsort(X.data.T[::-1])])

    def test_blobs_match_brute_force(self):
        X = two_blobs()
        cost, centers = brute_force_two_means(X.data)
        res = kmeans_fit(X, KMeansConfig(2, seed=4))
        np.testing.assert_allclose(res.sq_dist.sum(), cost, rtol=1e-12)
        for c in res.centers:
            assert np.min(np.linalg.norm(centers - c, axis=1)) <= 1.0

    def test_blob_means(self):
        X = two_blobs(per=40, seed=2)
        base = kmeans(X, KMeansConfig(2))
        truth = np.array([X.data[:40].mean(0), X.data[40:].mean(0)])
        for c in base.centers:
            assert np.min(np.linalg.norm(truth - c, axis=1)) <= 1.0

    def test_deterministic(self):
        X = FeatureMatrix(np.random.default_rng(3).standard_normal((200, 4)))
        a = kmeans(X, KMeansConfig(7, seed=11))
        b = kmeans(X, KMeansConfig(7, seed=11))
        assert a == b

    @given(st.integers(0, 10_000), st.sampled_from(["kmeanspp", "random_points"]))
    def test_sse_non_increasing(self, seed, init):
        X = np.random.default_rng(seed).standard_normal((60, 3))
        res = kmeans_fit(X, KMeansConfig(6, seed=seed, init=init, tol=0.0))
        hist = np.array(res.history)
        assert np.all(np.diff(hist) <= 1e-9 * hist[0])
        assert res.centers.shape == (6, 3) and np.all(np.isfinite(res.centers))

    def test_m_too_large(self):
        with pytest.raises(ValueError, match="m=5"):
            kmeans(FeatureMatrix(np.zeros((4, 1))), KMeansConfig(5))

    def test_duplicates_keep_m_centers(self):
        X = FeatureMatrix(np.vstack([np.zeros((10, 2)), np.ones((2, 2))]))
        res = kmeans_fit(X, KMeansConfig(4))
        # only two distinct points: duplicate centers are unavoidable, distortion is zero
        assert res.centers.shape == (4, 2) and np.all(np.isfinite(res.centers))
        assert res.sq_dist.sum() == 0.0

    def test_nearest_center_exact(self):
        rng = np.random.default_rng(0)
        X, C = rng.standard_normal((50, 3)), rng.standard_normal((4, 3))
        labels, d2 = nearest_center(X, C)
        brute = ((X[:, None, :] - C[None]) ** 2).sum(-1)
        np.testing.assert_array_equal(labels, brute.argmin(1))
        np.testing.assert_allclose(d2, brute.min(1), rtol=1e-12)
        np.testing.assert_allclose(sq_dist_matrix(X, C), brute, atol=1e-12)


class TestKMedians:
    def test_odd_count_median(self):
        X = FeatureMatrix(np.array([[0.0, 0.0], [0.0, 10.0], [0.0, 1.0]]))
        np.testing.assert_array_equal(kmedians(X, KMeansConfig(1)).centers, [[0.0, 1.0]])

    def test_even_count_snaps_to_lower_index(self):
        # median 1.5 is 0.5 from both 1 and 2 in L1; every start converges to the sample 1
        X = FeatureMatrix(np.array([[0.0], [1.0], [2.0], [100.0]]))
        for seed in range(6):
            np.testing.assert_array_equal(kmedians(X, KMeansConfig(1, seed=seed)).centers, [[1.0]])

    def test_m_equals_n(self):
        X = FeatureMatrix(np.random.default_rng(2).standard_normal((6, 2)))
        centers = kmedians(X, KMeansConfig(6)).centers
        assert {tuple(r) for r in centers} == {tuple(r) for r in X.data}

    def test_centers_are_samples_and_cost_monotone(self):
        X = np.random.default_rng(5).standard_normal((80, 3))
        res = kmedians_fit(X, KMeansConfig(5, seed=1))
        rows = {tuple(r) for r in X}
        assert all(tuple(c) in rows for c in res.centers)
        assert np.all(np.diff(res.history) <= 1e-12)


class TestRandomSample:
    def test_permutation(self):
        X = FeatureMatrix(np.arange(10.0).reshape(5, 2))
        base = random_sample(X, 5, seed=0)
        assert sorted(map(tuple, base.centers)) == sorted(map(tuple, X.data))

    def test_single(self):
        base = random_sample(FeatureMatrix([[3.0, 4.0]]), 1, seed=9)
        np.testing.assert_array_equal(base.centers, [[3.0, 4.0]])

    def test_uniform_frequencies(self):
        X = FeatureMatrix(np.arange(4.0)[:, None])
        draws = np.array([random_sample(X, 1, seed=s).centers[0, 0] for s in range(10_000)])
        counts = np.bincount(draws.astype(int), minlength=4)
        sd = np.sqrt(10_000 * 0.25 * 0.75)
        assert np.all(np.abs(counts - 2500) <= 3 * sd)

    def test_too_many(self):
        with pytest.raises(ValueError):
            random_sample(FeatureMatrix(np.zeros((2, 1))), 3, seed=0)


class TestPerClass:
    def test_class_means(self):
        data = np.array([[0.0, 0.0], [2.0, 0.0], [10.0, 10.0], [12.0, 14.0]])
        base = per_class_kmeans(FeatureMatrix(data, [0, 0, 1, 1]), 1, KMeansConfig(1))
        np.testing.assert_allclose(base.centers, [[1.0, 0.0], [11.0, 12.0]])
        np.testing.assert_array_equal(base.class_of_center, [0, 1])

    def test_contiguous_ownership(self):
        rng = np.random.default_rng(0)
        X = FeatureMatrix(rng.standard_normal((300, 2)), np.repeat([2, 0, 1], 100))
        base = per_class_kmeans(X, [3, 4, 5], KMeansConfig(1))
        assert base.m == 12
        np.testing.assert_array_equal(base.class_of_center, [0] * 3 + [1] * 4 + [2] * 5)
        assert base.method == "per_class_kmeans"

    def test_errors(self):
        with pytest.raises(ValueError, match="labelled"):
            per_class_kmeans(FeatureMatrix(np.zeros((3, 1))), 1, KMeansConfig(1))
        with pytest.raises(ValueError, match="cannot form"):
            per_class_kmeans(FeatureMatrix(np.zeros((3, 1)), [0, 0, 1]), 2, KMeansConfig(1))


def test_select_base_dispatch():
    X = FeatureMatrix(np.random.default_rng(0).standard_normal((20, 2)))
    for method in ("kmeans", "kmedians", "random"):
        assert select_base(X, method, KMeansConfig(3)).method == method
    with pytest.raises(ValueError):
        select_base(X, "spectral", KMeansConfig(3))
