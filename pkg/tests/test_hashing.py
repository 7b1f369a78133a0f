import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from imhash.affinity import build_affinities
from imhash.hashing import (TrainConfig, binarize, encode, encode_batch, extend_all, extend_embedding,
                            itq_rotation, quantization_error, random_orthogonal, train, with_rotation)
from imhash.types import BaseSet, BinaryCodes, Embedding, FeatureMatrix, HashModel


def random_model(m=5, d=3, r=4, k=3, seed=0, **kw):
    rng = np.random.default_rng(seed)
    base = BaseSet(rng.standard_normal((m, d)))
    emb = Embedding.centered_from(rng.standard_normal((m, r)))
    return HashModel(base, emb, sigma=1.5, k=k, **kw)


def brute_extension(x, model):
    """Kernel-weighted mean over the k nearest centers, written out directly."""
    C = model.base.centers
    d2 = np.array([np.sum((x - c) ** 2) for c in C])
    nearest = sorted(range(len(C)), key=lambda j: (d2[j], j))[:model.k]
    w = np.array([np.exp(-d2[j] / model.sigma ** 2) for j in nearest])
    return sum(wj * model.base_embedding.coords[j] for wj, j in zip(w, nearest)) / w.sum()


class TestExtension:
    def test_on_center_k1(self):
        model = random_model(k=1)
        for j in range(model.m):
            y = extend_embedding(model.base.centers[j], model)
            assert np.array_equal(y, model.base_embedding.coords[j])

    def test_equidistant_pair(self):
        base = BaseSet([[-1.0, 0.0], [1.0, 0.0], [5.0, 5.0]])
        emb = Embedding.centered_from([[1.0, 2.0], [3.0, -4.0], [0.0, 0.0]])
        model = HashModel(base, emb, 1.0, 2)
        y = extend_embedding(np.array([0.0, 0.3]), model)
        np.testing.assert_allclose(y, (emb.coords[0] + emb.coords[1]) / 2, rtol=1e-15)

    def test_matches_brute_force(self):
        model = random_model(m=5, k=3, seed=2)
        X = np.random.default_rng(3).standard_normal((40, 3))
        for x in X:
            np.testing.assert_allclose(extend_embedding(x, model), brute_extension(x, model), rtol=1e-12, atol=1e-14)

    def test_centers_reproduce_base(self):
        model = random_model(m=6, k=1, seed=4)
        Y = extend_all(FeatureMatrix(model.base.centers), model)
        np.testing.assert_array_equal(Y.coords, model.base_embedding.coords)

    def test_batch_matches_single(self):
        model = random_model(m=30, d=10, r=8, k=5, seed=5)
        X = FeatureMatrix(np.random.default_rng(6).standard_normal((100, 10)))
        Y = extend_all(X, model).coords
        for i in range(X.n):
            assert np.abs(Y[i] - extend_embedding(X.data[i], model)).max() <= 1e-12

    def test_precomputed_affinities_agree(self):
        model = random_model(m=8, d=3, k=3, seed=7)
        X = FeatureMatrix(np.random.default_rng(8).standard_normal((50, 3)))
        aff = build_affinities(X, model.base, model.k, model.sigma)
        np.testing.assert_allclose(extend_all(X, model, aff).coords, extend_all(X, model).coords, atol=1e-15)

    def test_convex_hull(self):
        model = random_model(m=10, d=4, r=5, k=4, seed=9)
        X = FeatureMatrix(np.random.default_rng(10).normal(0, 5, (200, 4)))
        Y = extend_all(X, model).coords
        lo, hi = model.base_embedding.coords.min(0), model.base_embedding.coords.max(0)
        assert np.all(Y >= lo - 1e-12) and np.all(Y <= hi + 1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            extend_embedding(np.zeros(4), random_model(d=3))


class TestBinarize:
    def test_zero_row(self):
        assert not binarize(np.zeros((1, 5))).to_bits().any()

    def test_signs(self):
        np.testing.assert_array_equal(binarize(np.array([[-1.0, 2.0, -3.0]])).to_bits(), [[0, 1, 0]])

    @given(st.integers(0, 10_000))
    def test_positive_rescaling(self, seed):
        rng = np.random.default_rng(seed)
        Y = rng.standard_normal((10, 6))
        scale = rng.uniform(0.01, 100, size=6)
        assert binarize(Y) == binarize(Y * scale)


class TestEncode:
    def test_center_code(self):
        model = random_model(k=1, seed=11)
        for j in range(model.m):
            expected = binarize((model.base_embedding.coords[j] - model.embed_mean)[None, :])
            assert encode(model.base.centers[j], model) == expected

    def test_batch_single_parity(self):
        model = random_model(m=40, d=8, r=16, k=5, seed=12, rotation=random_orthogonal(16, 3))
        X = np.random.default_rng(13).standard_normal((1000, 8))
        batch = encode_batch(X, model)
        for i in range(0, 1000, 37):
            assert encode(X[i], model) == batch[i]
        singles = np.vstack([encode(x, model).words for x in X])
        assert np.array_equal(singles, batch.words)

    def test_identity_rotation(self):
        plain = random_model(seed=14)
        rotated = random_model(seed=14, rotation=np.eye(4))
        X = np.random.default_rng(15).standard_normal((50, 3))
        assert encode_batch(X, plain) == encode_batch(X, rotated)

    def test_codes_invariant_to_column_scaling(self):
        model = random_model(m=12, r=5, seed=16)
        scaled = HashModel(model.base, Embedding.centered_from(model.base_embedding.coords * [1, 3, 0.2, 7, 0.5]),
                           model.sigma, model.k)
        X = np.random.default_rng(17).standard_normal((200, 3))
        assert encode_batch(X, model) == encode_batch(X, scaled)


class TestItq:
    def test_fixed_point(self):
        signs = np.array(list(itertools.product([-1.0, 1.0], repeat=3)))
        res = itq_rotation(signs, iters=10, init="identity")
        assert res.final_error == pytest.approx(0.0, abs=1e-20)

    @given(st.integers(0, 10_000))
    def test_one_bit_enumeration(self, seed):
        y = np.random.default_rng(seed).standard_normal((15, 1))
        res = itq_rotation(y, iters=5, seed=seed)
        assert abs(res.rotation[0, 0]) == pytest.approx(1.0, abs=1e-12)
        best = min(np.sum((np.where(s * y > 0, 1.0, -1.0) - s * y) ** 2) for s in (1.0, -1.0))
        assert res.final_error == pytest.approx(best, rel=1e-12)

    def test_monotone(self):
        Y = np.random.default_rng(0).standard_normal((50, 8))
        res = itq_rotation(Y, iters=50, tol=0.0)
        assert np.all(np.diff(res.history) <= 0)
        assert np.abs(res.rotation.T @ res.rotation - np.eye(8)).max() < 1e-10

    def test_identity_start_not_worse(self):
        Y = np.random.default_rng(1).standard_normal((200, 16))
        res = itq_rotation(Y, iters=50, init="identity")
        assert res.final_error <= quantization_error(Y, np.eye(16))

    def test_errors(self):
        with pytest.raises(ValueError):
            itq_rotation(np.zeros((5, 0)))
        with pytest.raises(ValueError):
            itq_rotation(np.ones((5, 2)), init="pca")


class TestTrain:
    def test_paper_defaults(self):
        cfg = TrainConfig()
        assert (cfg.m, cfg.k, cfg.backend) == (400, 5, "tsne")

    def test_deterministic(self, toy):
        cfg = TrainConfig(backend="pca", m=10, k=3, bits=2)
        a, b = train(toy, cfg), train(toy, cfg)
        assert a == b
        assert encode_batch(toy, a) == encode_batch(toy, b)

    @pytest.mark.parametrize("backend", ["le_base", "le_relaxed", "tsne", "pca"])
    def test_backends(self, toy, backend):
        timings = {}
        model = train(toy, TrainConfig(backend=backend, m=12, k=3, bits=2), timings)
        codes = encode_batch(toy, model)
        assert codes.r == 2 and len(codes) == toy.n
        assert set(timings) >= {"base", "embedding", "rotation"}
        assert all(v >= 0 for v in timings.values())

    def test_rotation_flag(self, toy):
        model = train(toy, TrainConfig(backend="pca", m=12, k=3, bits=2, rotation=True))
        assert model.rotation.shape == (2, 2)

    def test_rotation_on_sample(self, toy):
        cfg = TrainConfig(backend="pca", m=12, k=3, bits=2, rotation=True, itq_sample=50)
        model = with_rotation(train(toy, TrainConfig(backend="pca", m=12, k=3, bits=2)), toy, cfg)
        assert model.rotation is not None

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(m=3, k=4)
        with pytest.raises(ValueError):
            TrainConfig(backend="sne")
        with pytest.raises(ValueError):
            TrainConfig(sigma=-1.0)
