"""Supervised variant: per-class K-means base set, manifold embedding, then LDA on the base embedding."""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Dict, Optional

import numpy as np
import scipy.linalg

from .affinity import build_affinities, estimate_sigma
from .base import per_class_kmeans
from .embed import embed_base
from .hashing import TrainConfig, with_rotation
from .types import Embedding, FeatureMatrix, HashModel

RIDGE = 1e-6


@dataclass(frozen=True)
class LdaProjection:
    matrix: np.ndarray
    class_count: int
    eigenvalues: np.ndarray


def scatter_matrices(Y: np.ndarray, labels: np.ndarray):
    """Within-class and between-class scatter."""
    mu = Y.mean(axis=0)
    r = Y.shape[1]
    Sw = np.zeros((r, r))
    Sb = np.zeros((r, r))
    for c in np.unique(labels):
        Yc = Y[labels == c]
        mc = Yc.mean(axis=0)
        D = Yc - mc
        Sw += D.T @ D
        dm = (mc - mu)[:, None]
        Sb += Yc.shape[0] * (dm @ dm.T)
    return Sw, Sb


def regularized_within(Sw: np.ndarray) -> np.ndarray:
    r = Sw.shape[0]
    return Sw + RIDGE * np.trace(Sw) / r * np.eye(r)


def lda_fit(Y_B, class_of_center, r_out: int) -> LdaProjection:
    """Top ``r_out`` generalized eigenvectors of S_b w = lambda S_w w (ridge-regularized S_w).

    Columns are S_w-orthonormal with respect to the regularized S_w and signed
    so their largest-magnitude entry is positive.
    """
    Y = Y_B.coords if isinstance(Y_B, Embedding) else np.asarray(Y_B, dtype=np.float64)
    labels = np.asarray(class_of_center)
    t = np.unique(labels).size
    if t < 2:
        raise ValueError("LDA needs at least two classes")
    r_in = Y.shape[1]
    if not 1 <= r_out <= min(r_in, t - 1):
        raise ValueError(f"r_out must lie in [1, {min(r_in, t - 1)}], got {r_out}")
    Sw, Sb = scatter_matrices(Y, labels)
    vals, vecs = scipy.linalg.eigh(Sb, regularized_within(Sw))
    order = np.argsort(vals)[::-1][:r_out]
    W = vecs[:, order]
    signs = np.sign(W[np.abs(W).argmax(axis=0), np.arange(r_out)])
    signs[signs == 0] = 1.0
    return LdaProjection(W * signs, t, vals[order])


@dataclass(frozen=True)
class SupervisedConfig:
    m_per_class: int = 100
    bits: int = 9
    r_in: Optional[int] = None

    @property
    def embed_dim(self) -> int:
        return self.r_in if self.r_in is not None else max(2 * self.bits, 16)


def imhs_train(Xs: FeatureMatrix, scfg: SupervisedConfig = SupervisedConfig(),
               cfg: TrainConfig = TrainConfig(), timings: Optional[Dict[str, float]] = None) -> HashModel:
    """Per-class K-means, embedding of the base set, LDA projection; codes have ``scfg.bits`` bits."""
    if Xs.labels is None:
        raise ValueError("supervised training needs labels")
    clock = {} if timings is None else timings
    t0 = time.perf_counter()
    base = per_class_kmeans(Xs, scfg.m_per_class, cfg.kmeans)
    sigma = cfg.sigma if cfg.sigma is not None else estimate_sigma(Xs, base)
    t1 = time.perf_counter()
    clock["base"] = t1 - t0
    k = min(cfg.k, base.m)
    aff = build_affinities(Xs, base, k, sigma) if cfg.backend == "le_relaxed" else None
    emb = embed_base(cfg.backend, base, scfg.embed_dim, sigma=sigma, aff=aff, lam=cfg.lam, tsne=cfg.tsne)
    lda = lda_fit(emb, base.class_of_center, scfg.bits)
    t2 = time.perf_counter()
    clock["embedding"] = t2 - t1
    model = HashModel(base=base, base_embedding=emb, sigma=sigma, k=k, backend=cfg.backend,
                      supervised_projection=lda.matrix)
    if cfg.rotation:
        model = with_rotation(model, Xs, replace(cfg, m=base.m, k=k))
    clock["rotation"] = time.perf_counter() - t2
    return model
