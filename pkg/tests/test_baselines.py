import numpy as np
import pytest

from imhash.baselines import LinearHashModel, lsh_train, pcah_train
from imhash.hashing import encode_batch
from imhash.types import FeatureMatrix


def anisotropic(n=2000, seed=0):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, 3)) * [0.5, 4.0, 1.0] + [10.0, -3.0, 2.0]


class TestPcah:
    def test_max_variance_axis_first(self):
        model = pcah_train(anisotropic(), 2)
        w = model.projection[:, 0]
        assert abs(w[1]) / np.linalg.norm(w) >= 0.99

    def test_mean_point_all_zero(self):
        X = anisotropic()
        model = pcah_train(X, 3)
        bits = model.encode(X.mean(axis=0)).to_bits()
        assert not bits.any()
        assert np.abs(model.project(X.mean(axis=0))).max() <= 1e-12

    def test_matches_covariance_eigenvectors(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((300, 2)) @ np.array([[2.0, 0.5], [0.5, 1.0]])
        C = np.cov(X.T, bias=True)
        # closed form for the 2x2 case
        a, b, c = C[0, 0], C[0, 1], C[1, 1]
        lam = (a + c) / 2 + np.sqrt(((a - c) / 2) ** 2 + b ** 2)
        v = np.array([b, lam - a])
        v /= np.linalg.norm(v)
        w = pcah_train(X, 1).projection[:, 0]
        assert abs(abs(w @ v) - 1.0) <= 1e-10

    def test_r_exceeds_d(self):
        with pytest.raises(ValueError):
            pcah_train(np.zeros((10, 2)), 3)

    def test_feature_matrix_input_and_encode_surface(self):
        X = FeatureMatrix(anisotropic(n=100))
        model = pcah_train(X, 2)
        assert model.kind == "pca_sign" and model.code_length == 2 and model.d == 3
        assert encode_batch(X, model) == model.encode(X)

    def test_dimension_mismatch(self):
        model = pcah_train(anisotropic(n=50), 2)
        with pytest.raises(ValueError):
            model.encode(np.zeros((1, 4)))


class TestLsh:
    def test_reproducible(self):
        a, b = lsh_train(8, 16, seed=3), lsh_train(8, 16, seed=3)
        np.testing.assert_array_equal(a.projection, b.projection)
        assert not np.array_equal(a.projection, lsh_train(8, 16, seed=4).projection)
        assert not a.bias.any()

    @pytest.mark.parametrize("theta", [np.pi / 6, np.pi / 3, np.pi / 2, 2 * np.pi / 3])
    def test_collision_rate(self, theta):
        x = np.array([1.0, 0.0, 0.0])
        y = np.array([np.cos(theta), np.sin(theta), 0.0])
        model = lsh_train(3, 10_000, seed=5)
        bx, by = model.encode(x).to_bits()[0], model.encode(y).to_bits()[0]
        assert abs(np.mean(bx == by) - (1 - theta / np.pi)) <= 0.02

    def test_orthogonal_half_differ(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal(20)
        y = rng.standard_normal(20)
        y -= (y @ x) / (x @ x) * x
        model = lsh_train(20, 10_000, seed=7)
        diff = np.mean(model.encode(x).to_bits() != model.encode(y).to_bits())
        assert abs(diff - 0.5) <= 0.02

    @pytest.mark.parametrize("d,r", [(0, 3), (3, 0)])
    def test_bad_sizes(self, d, r):
        with pytest.raises(ValueError):
            lsh_train(d, r)


class TestModel:
    def test_shape_validation(self):
        with pytest.raises(ValueError):
            LinearHashModel(np.zeros((3, 2)), np.zeros(3), "pca_sign")

    def test_non_finite(self):
        with pytest.raises(ValueError):
            LinearHashModel(np.full((2, 2), np.nan), np.zeros(2), "pca_sign")

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            LinearHashModel(np.zeros((2, 2)), np.zeros(2), "sh")

    def test_batch_single_parity(self):
        X = anisotropic(n=200)
        model = pcah_train(X, 3)
        batch = model.encode(X)
        for i in (0, 57, 199):
            assert model.encode(X[i]) == batch[i]
