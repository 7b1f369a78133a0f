"""Base-set generation: random sampling, K-medians, K-means and per-class K-means."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence, Union

import numpy as np
from scipy.spatial.distance import cdist

from .types import BaseSet, FeatureMatrix

_CHUNK = 4096


@dataclass(frozen=True)
class KMeansConfig:
    m: int
    max_iters: int = 100
    seed: int = 0
    init: str = "kmeanspp"
    empty_cluster_policy: str = "reseed_farthest"
    tol: float = 1e-6

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.init not in ("kmeanspp", "random_points"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.empty_cluster_policy != "reseed_farthest":
            raise ValueError(f"unknown empty cluster policy {self.empty_cluster_policy!r}")


@dataclass
class ClusteringResult:
    centers: np.ndarray
    labels: np.ndarray
    sq_dist: np.ndarray
    history: List[float] = field(default_factory=list)
    iters: int = 0


def _data(X) -> np.ndarray:
    return X.data if isinstance(X, FeatureMatrix) else np.asarray(X, dtype=np.float64)


def sq_dist_matrix(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances via the Gram expansion, clipped at zero."""
    d2 = (X * X).sum(1)[:, None] - 2.0 * (X @ C.T) + (C * C).sum(1)[None, :]
    np.maximum(d2, 0.0, out=d2)
    return d2


def nearest_center(X: np.ndarray, C: np.ndarray):
    """Index of and exact squared distance to the nearest center for each row."""
    labels = np.empty(X.shape[0], dtype=np.int64)
    for s in range(0, X.shape[0], _CHUNK):
        labels[s:s + _CHUNK] = sq_dist_matrix(X[s:s + _CHUNK], C).argmin(axis=1)
    diff = X - C[labels]
    return labels, np.einsum("ij,ij->i", diff, diff)


def _kmeanspp(X: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    xx = (X * X).sum(axis=1)

    def dist_to(i: int) -> np.ndarray:
        d2 = xx - 2.0 * (X @ X[i]) + xx[i]
        return np.maximum(d2, 0.0, out=d2)

    chosen = [int(rng.integers(n))]
    closest = dist_to(chosen[0])
    closest[chosen[0]] = 0.0
    taken = np.zeros(n, dtype=bool)
    taken[chosen[0]] = True
    for _ in range(1, m):
        cum = np.cumsum(closest)
        total = cum[-1]
        if total > 0:
            # inverse-CDF draw proportional to squared distance
            idx = min(int(np.searchsorted(cum, rng.random() * total, side="right")), n - 1)
        else:
            # all remaining mass is zero (duplicates): pick an unused point uniformly
            idx = int(rng.choice(np.flatnonzero(~taken)))
        chosen.append(idx)
        taken[idx] = True
        np.minimum(closest, dist_to(idx), out=closest)
        closest[idx] = 0.0
    return X[np.array(chosen)].copy()


def _init_centers(X: np.ndarray, cfg: KMeansConfig, rng: np.random.Generator) -> np.ndarray:
    if cfg.init == "kmeanspp":
        return _kmeanspp(X, cfg.m, rng)
    return X[rng.choice(X.shape[0], cfg.m, replace=False)].copy()


def _check_m(n: int, m: int):
    if m > n:
        raise ValueError(f"cannot pick m={m} base points from n={n} samples")


def _reseed_empty(labels: np.ndarray, dist: np.ndarray, m: int) -> np.ndarray:
    labels = labels.copy()
    dist = dist.copy()
    for _ in range(m):
        counts = np.bincount(labels, minlength=m)
        empty = np.flatnonzero(counts == 0)
        if empty.size == 0:
            break
        for j in empty:
            movable = counts[labels] > 1
            cand = np.where(movable, dist, -1.0)
            far = int(np.argmax(cand))
            counts[labels[far]] -= 1
            labels[far] = j
            counts[j] += 1
            dist[far] = 0.0
    return labels


def _cluster_means(X: np.ndarray, labels: np.ndarray, m: int) -> np.ndarray:
    order = np.argsort(labels, kind="stable")
    counts = np.bincount(labels, minlength=m)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    sums = np.add.reduceat(X[order], starts, axis=0)
    return sums / counts[:, None]


def kmeans_fit(X, cfg: KMeansConfig) -> ClusteringResult:
    """Lloyd iterations from a seeded k-means++ start.

    ``history`` holds the within-cluster SSE after every assignment step; it
    is non-increasing. Stops at an assignment fixpoint, when the relative SSE
    drop falls below ``cfg.tol``, or after ``cfg.max_iters`` iterations.
    """
    X = _data(X)
    n = X.shape[0]
    _check_m(n, cfg.m)
    rng = np.random.default_rng(cfg.seed)
    centers = _init_centers(X, cfg, rng)
    history: List[float] = []
    prev = None
    it = 0
    for it in range(1, cfg.max_iters + 1):
        labels, d2 = nearest_center(X, centers)
        history.append(float(d2.sum()))
        if prev is not None and np.array_equal(labels, prev):
            break
        labels = _reseed_empty(labels, d2, cfg.m)
        centers = _cluster_means(X, labels, cfg.m)
        if len(history) > 1 and history[-2] - history[-1] <= cfg.tol * history[-2]:
            break
        prev = labels
    labels, d2 = nearest_center(X, centers)
    return ClusteringResult(centers, labels, d2, history, it)


def kmeans(X: FeatureMatrix, cfg: KMeansConfig) -> BaseSet:
    res = kmeans_fit(X, cfg)
    return BaseSet(res.centers, "kmeans", res.sq_dist)


def _l1_assign(X: np.ndarray, C: np.ndarray):
    labels = np.empty(X.shape[0], dtype=np.int64)
    dist = np.empty(X.shape[0])
    for s in range(0, X.shape[0], _CHUNK):
        D = cdist(X[s:s + _CHUNK], C, metric="cityblock")
        labels[s:s + _CHUNK] = D.argmin(axis=1)
        dist[s:s + _CHUNK] = D[np.arange(D.shape[0]), labels[s:s + _CHUNK]]
    return labels, dist


def _snapped_median(P: np.ndarray) -> np.ndarray:
    med = np.median(P, axis=0)
    l1 = np.abs(P - med).sum(axis=1)
    return P[int(np.argmin(l1))]


def kmedians_fit(X, cfg: KMeansConfig) -> ClusteringResult:
    """K-medians under L1 whose centers are snapped to real samples.

    A snapped median replaces a center only when it does not raise that
    cluster's L1 cost, which keeps the L1 distortion non-increasing.
    """
    X = _data(X)
    n = X.shape[0]
    _check_m(n, cfg.m)
    rng = np.random.default_rng(cfg.seed)
    centers = _init_centers(X, cfg, rng)
    history: List[float] = []
    prev = None
    it = 0
    for it in range(1, cfg.max_iters + 1):
        labels, dist = _l1_assign(X, centers)
        history.append(float(dist.sum()))
        if prev is not None and np.array_equal(labels, prev):
            break
        labels = _reseed_empty(labels, dist, cfg.m)
        new_centers = centers.copy()
        for j in range(cfg.m):
            members = X[labels == j]
            cand = _snapped_median(members)
            if np.abs(members - cand).sum() <= np.abs(members - centers[j]).sum():
                new_centers[j] = cand
        centers = new_centers
        prev = labels
    labels, _ = _l1_assign(X, centers)
    diff = X - centers[labels]
    return ClusteringResult(centers, labels, np.einsum("ij,ij->i", diff, diff), history, it)


def kmedians(X: FeatureMatrix, cfg: KMeansConfig) -> BaseSet:
    res = kmedians_fit(X, cfg)
    return BaseSet(res.centers, "kmedians", res.sq_dist)


def random_sample(X: FeatureMatrix, m: int, seed: int) -> BaseSet:
    data = _data(X)
    _check_m(data.shape[0], m)
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    idx = np.random.default_rng(seed).choice(data.shape[0], m, replace=False)
    centers = data[idx].copy()
    _, d2 = nearest_center(data, centers)
    return BaseSet(centers, "random", d2)


def per_class_kmeans(
    Xs: FeatureMatrix, m_per_class: Union[int, Sequence[int]], cfg: KMeansConfig
) -> BaseSet:
    """Concatenate class-local K-means centers, classes in ascending id order."""
    if Xs.labels is None:
        raise ValueError("per-class K-means needs labelled data")
    classes = np.unique(Xs.labels)
    if np.isscalar(m_per_class):
        ms = [int(m_per_class)] * len(classes)
    else:
        ms = [int(v) for v in m_per_class]
        if len(ms) != len(classes):
            raise ValueError(f"got {len(ms)} per-class sizes for {len(classes)} classes")
    blocks = []
    owner = []
    for c, mc in zip(classes, ms):
        members = Xs.data[Xs.labels == c]
        if not 1 <= mc <= members.shape[0]:
            raise ValueError(f"class {c} has {members.shape[0]} points, cannot form {mc} centers")
        sub = KMeansConfig(mc, cfg.max_iters, cfg.seed + int(c), cfg.init, cfg.empty_cluster_policy, cfg.tol)
        blocks.append(kmeans_fit(members, sub).centers)
        owner.append(np.full(mc, c, dtype=np.int64))
    centers = np.vstack(blocks)
    _, d2 = nearest_center(Xs.data, centers)
    return BaseSet(centers, "per_class_kmeans", d2, np.concatenate(owner))


def select_base(X: FeatureMatrix, method: str, cfg: KMeansConfig) -> BaseSet:
    if method == "kmeans":
        return kmeans(X, cfg)
    if method == "kmedians":
        return kmedians(X, cfg)
    if method == "random":
        return random_sample(X, cfg.m, cfg.seed)
    raise ValueError(f"unknown base selection method {method!r}")
