"""Inductive hash function: out-of-sample extension, thresholding, ITQ rotation, training."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .affinity import AffinityMatrices, WeightRows, build_affinities, estimate_sigma, knn_base_weights_batch, normalize_rows
from .base import KMeansConfig, select_base
from .embed import TsneConfig, embed_base
from .types import BACKENDS, BinaryCodes, Embedding, FeatureMatrix, HashModel

_BATCH = 8192


def _rows(X) -> np.ndarray:
    data = X.data if isinstance(X, FeatureMatrix) else np.asarray(X, dtype=np.float64)
    return np.atleast_2d(data)


def combine_rows(rows: WeightRows, Y_B: np.ndarray) -> np.ndarray:
    """sum_j w_ij * Y_B[idx_ij], accumulated in a fixed order so each row is batch-independent."""
    out = rows.weight[:, 0, None] * Y_B[rows.index[:, 0]]
    for j in range(1, rows.k):
        out += rows.weight[:, j, None] * Y_B[rows.index[:, j]]
    return out


def rowwise_matmul(A: np.ndarray, M: np.ndarray) -> np.ndarray:
    """A @ M without BLAS, so a row's result never depends on the batch it sits in."""
    out = A[:, 0, None] * M[0]
    for j in range(1, M.shape[0]):
        out += A[:, j, None] * M[j]
    return out


def _check_dim(X: np.ndarray, model: HashModel):
    if X.shape[1] != model.d:
        raise ValueError(f"query dimension {X.shape[1]} does not match model dimension {model.d}")


def extend_batch(X, model: HashModel) -> np.ndarray:
    X = _rows(X)
    _check_dim(X, model)
    out = np.empty((X.shape[0], model.base_embedding.r))
    for s in range(0, X.shape[0], _BATCH):
        rows = normalize_rows(knn_base_weights_batch(X[s:s + _BATCH], model.base.centers, model.k, model.sigma))
        out[s:s + _BATCH] = combine_rows(rows, model.base_embedding.coords)
    return out


def extend_embedding(x_q, model: HashModel) -> np.ndarray:
    """Embedding of one query: normalized Gaussian-weighted mean of its k nearest base embeddings."""
    x = np.asarray(x_q, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected a single d-vector, got shape {x.shape}")
    return extend_batch(x[None, :], model)[0]


def extend_all(X: FeatureMatrix, model: HashModel, aff: Optional[AffinityMatrices] = None) -> Embedding:
    """Y = Wbar_XB Y_B for the training set, reusing precomputed affinities when given."""
    if aff is None:
        return Embedding(extend_batch(X, model), centered=False)
    if aff.Wbar_XB.index.shape[0] != X.n or aff.m != model.m:
        raise ValueError("affinities were not built from this data and model")
    return Embedding(combine_rows(aff.Wbar_XB, model.base_embedding.coords), centered=False)


def binarize(Y) -> BinaryCodes:
    """Bit 1 where a coordinate is strictly positive; zero maps to bit 0."""
    coords = Y.coords if isinstance(Y, Embedding) else np.atleast_2d(np.asarray(Y, dtype=np.float64))
    return BinaryCodes.from_bits(coords > 0)


def project_codes_space(Y: np.ndarray, model: HashModel) -> np.ndarray:
    """Centered, projected, rotated real-valued codes prior to thresholding."""
    Z = Y - model.embed_mean
    if model.supervised_projection is not None:
        Z = rowwise_matmul(Z, model.supervised_projection)
    if model.rotation is not None:
        Z = rowwise_matmul(Z, model.rotation)
    return Z


def encode_batch(X, model) -> BinaryCodes:
    if not isinstance(model, HashModel):
        return model.encode(X)
    X = _rows(X)
    _check_dim(X, model)
    words = []
    for s in range(0, X.shape[0], _BATCH):
        Y = extend_batch(X[s:s + _BATCH], model)
        words.append(binarize(project_codes_space(Y, model)).words)
    return BinaryCodes(np.vstack(words), model.code_length)


def encode(x, model) -> BinaryCodes:
    """Code of a single query; identical bit-for-bit to the matching row of ``encode_batch``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected a single d-vector, got shape {x.shape}")
    return encode_batch(x[None, :], model)


# ---------------------------------------------------------------- ITQ


@dataclass
class ItqResult:
    rotation: np.ndarray
    final_error: float
    iters_run: int
    history: List[float] = field(default_factory=list)


def _signs(V: np.ndarray) -> np.ndarray:
    return np.where(V > 0, 1.0, -1.0)


def quantization_error(Y: np.ndarray, R: np.ndarray) -> float:
    V = Y @ R
    return float(np.sum((_signs(V) - V) ** 2))


def random_orthogonal(r: int, seed: int) -> np.ndarray:
    Q, Rq = np.linalg.qr(np.random.default_rng(seed).standard_normal((r, r)))
    return Q * np.sign(np.diag(Rq))


def itq_rotation(Y_B, iters: int = 50, seed: int = 0, init: str = "random", tol: float = 1e-7) -> ItqResult:
    """Alternate B = sign(Y R) and the Procrustes solve for R.

    ``history[0]`` is the error at the initial rotation and every later entry
    follows one full iteration, so the sequence is non-increasing.
    """
    Y = Y_B.coords if isinstance(Y_B, Embedding) else np.asarray(Y_B, dtype=np.float64)
    if Y.ndim != 2 or Y.shape[1] == 0:
        raise ValueError("ITQ needs an embedding with r >= 1 columns")
    if iters < 1:
        raise ValueError(f"iters must be >= 1, got {iters}")
    r = Y.shape[1]
    if init == "identity":
        R = np.eye(r)
    elif init == "random":
        R = random_orthogonal(r, seed)
    else:
        raise ValueError(f"unknown ITQ init {init!r}")
    history = [quantization_error(Y, R)]
    it = 0
    for it in range(1, iters + 1):
        B = _signs(Y @ R)
        U, _, Vt = np.linalg.svd(B.T @ Y)
        R_new = Vt.T @ U.T
        err = quantization_error(Y, R_new)
        if err > history[-1]:
            # numerically flat step: keep the previous rotation
            break
        R = R_new
        prev = history[-1]
        history.append(err)
        if prev - err <= tol * prev:
            break
    return ItqResult(R, history[-1], it, history)


# ---------------------------------------------------------------- training


@dataclass(frozen=True)
class TrainConfig:
    backend: str = "tsne"
    m: int = 400
    k: int = 5
    bits: int = 64
    base_method: str = "kmeans"
    sigma: Optional[float] = None
    lam: float = 2.0
    rotation: bool = False
    itq_iters: int = 50
    itq_sample: int = 0
    kmeans_iters: int = 100
    kmeans_seed: int = 0
    tsne_seed: int = 0
    itq_seed: int = 0
    perplexity: float = 30.0
    tsne_iters: int = 1000
    learning_rate: float = 100.0

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.m < 1 or self.bits < 1:
            raise ValueError("m and bits must be >= 1")
        if not 1 <= self.k <= self.m:
            raise ValueError(f"k must lie in [1, m={self.m}], got {self.k}")
        if self.sigma is not None and self.sigma <= 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")

    @property
    def tsne(self) -> TsneConfig:
        return TsneConfig(perplexity=self.perplexity, iters=self.tsne_iters,
                          learning_rate=self.learning_rate, seed=self.tsne_seed)

    @property
    def kmeans(self) -> KMeansConfig:
        return KMeansConfig(m=self.m, max_iters=self.kmeans_iters, seed=self.kmeans_seed)


def fit_rotation(Z: np.ndarray, cfg: TrainConfig) -> np.ndarray:
    return itq_rotation(Z, cfg.itq_iters, cfg.itq_seed).rotation


def train(X: FeatureMatrix, cfg: TrainConfig = TrainConfig(), timings: Optional[Dict[str, float]] = None) -> HashModel:
    """Base selection, base embedding and optional ITQ; returns the inductive hash model.

    Stage wall-clock durations (seconds) are written into ``timings`` when given.
    """
    clock = {} if timings is None else timings
    t0 = time.perf_counter()
    base = select_base(X, cfg.base_method, cfg.kmeans)
    sigma = cfg.sigma if cfg.sigma is not None else estimate_sigma(X, base)
    t1 = time.perf_counter()
    clock["base"] = t1 - t0

    aff = build_affinities(X, base, cfg.k, sigma) if cfg.backend == "le_relaxed" else None
    emb = embed_base(cfg.backend, base, cfg.bits, sigma=sigma, aff=aff, lam=cfg.lam, tsne=cfg.tsne)
    t2 = time.perf_counter()
    clock["embedding"] = t2 - t1

    model = HashModel(base=base, base_embedding=emb, sigma=sigma, k=cfg.k, backend=cfg.backend)
    if cfg.rotation:
        model = with_rotation(model, X, cfg)
    clock["rotation"] = time.perf_counter() - t2
    return model


def with_rotation(model: HashModel, X: Optional[FeatureMatrix], cfg: TrainConfig) -> HashModel:
    """Fit ITQ on the centered (and projected) base embedding, or on a sample of extended rows."""
    if cfg.itq_sample > 0 and X is not None:
        rng = np.random.default_rng(cfg.itq_seed)
        idx = np.sort(rng.choice(X.n, min(cfg.itq_sample, X.n), replace=False))
        Y = extend_batch(X.data[idx], model)
    else:
        Y = model.base_embedding.coords
    bare = HashModel(model.base, model.base_embedding, model.sigma, model.k, model.backend,
                     None, model.supervised_projection)
    Z = project_codes_space(Y, bare)
    return HashModel(model.base, model.base_embedding, model.sigma, model.k, model.backend,
                     fit_rotation(Z, cfg), model.supervised_projection)
