"""Gaussian affinities between points and base centers.

k-NN weight rows are stored as parallel ``(index, weight)`` arrays of width k;
there is no sparse matrix type.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .base import nearest_center, sq_dist_matrix
from .types import BaseSet, FeatureMatrix

SIGMA_SQ_FLOOR = 1e-12
_CHUNK = 2048
_SLACK = 8


def gaussian_weight(x, c, sigma: float) -> float:
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    diff = np.asarray(x, dtype=np.float64) - np.asarray(c, dtype=np.float64)
    return float(np.exp(-np.dot(diff, diff) / sigma**2))


def estimate_sigma(X: FeatureMatrix, base: BaseSet) -> float:
    """sqrt of the mean squared distance from training points to their nearest center."""
    d2 = base.assign_dist
    if d2 is None or d2.shape[0] != X.n:
        _, d2 = nearest_center(X.data, base.centers)
    s2 = float(np.mean(d2))
    if s2 < SIGMA_SQ_FLOOR:
        warnings.warn("every point coincides with a base center; sigma set to its floor", RuntimeWarning)
        s2 = SIGMA_SQ_FLOOR
    return float(np.sqrt(s2))


@dataclass(frozen=True)
class WeightRows:
    """k-NN weight rows for a batch of points: ``index[i, j]`` gets ``weight[i, j]``."""

    index: np.ndarray
    weight: np.ndarray
    normalized: bool = False

    @property
    def k(self) -> int:
        return self.index.shape[1]

    def row(self, i: int):
        return list(zip(self.index[i].tolist(), self.weight[i].tolist()))

    def dense(self, m: int) -> np.ndarray:
        out = np.zeros((self.index.shape[0], m))
        rows = np.arange(self.index.shape[0])[:, None]
        out[rows, self.index] = self.weight
        return out


def knn_base_indices(Xb: np.ndarray, centers: np.ndarray, k: int):
    """The k nearest centers per row (ties by lower index) and their exact squared distances.

    Candidates come from the Gram expansion with a few spare slots; the final
    ranking uses directly computed distances, so a row's result does not
    depend on which batch it was computed in.
    """
    m = centers.shape[0]
    if not 1 <= k <= m:
        raise ValueError(f"k must lie in [1, {m}], got {k}")
    nb = Xb.shape[0]
    c = min(m, k + _SLACK)
    if c == m:
        cand = np.broadcast_to(np.arange(m), (nb, m))
    else:
        approx = sq_dist_matrix(Xb, centers)
        cand = np.sort(np.argpartition(approx, c - 1, axis=1)[:, :c], axis=1)
    diff = Xb[:, None, :] - centers[cand]
    exact = (diff * diff).sum(axis=-1)
    # cand is ascending per row, so a stable sort breaks distance ties by lower index
    order = np.argsort(exact, axis=1, kind="stable")[:, :k]
    rows = np.arange(nb)[:, None]
    return np.ascontiguousarray(cand[rows, order]), np.ascontiguousarray(exact[rows, order])


def knn_base_weights_batch(X: np.ndarray, centers: np.ndarray, k: int, sigma: float) -> WeightRows:
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    idx = np.empty((X.shape[0], k), dtype=np.int64)
    w = np.empty((X.shape[0], k))
    # bound the (batch, candidates, d) difference tensor to ~64 MB
    step = max(1, min(_CHUNK, (8 << 20) // max(1, min(centers.shape[0], k + _SLACK) * X.shape[1])))
    for s in range(0, X.shape[0], step):
        i, d2 = knn_base_indices(X[s:s + step], centers, k)
        idx[s:s + step] = i
        w[s:s + step] = np.exp(-d2 / sigma**2)
    return WeightRows(idx, w, normalized=False)


def knn_base_weights(x, base: BaseSet, k: int, sigma: float) -> WeightRows:
    return knn_base_weights_batch(np.asarray(x, dtype=np.float64)[None, :], base.centers, k, sigma)


def normalize_rows(rows: WeightRows) -> WeightRows:
    """Divide each row by its sum; rows whose weights all underflow become uniform."""
    if rows.k == 0:
        raise ValueError("cannot normalize an empty weight row")
    w = rows.weight
    total = w[:, 0].copy()
    for j in range(1, w.shape[1]):
        total += w[:, j]
    out = np.empty_like(w)
    ok = total > 0
    out[ok] = w[ok] / total[ok, None]
    out[~ok] = 1.0 / w.shape[1]
    return WeightRows(rows.index, out, normalized=True)


def normalize_row(row: WeightRows) -> WeightRows:
    return normalize_rows(row)


@dataclass(frozen=True)
class AffinityMatrices:
    """W_B dense (m x m); W_XB and its row-normalized form as k-NN rows; diagonals as vectors."""

    W_B: np.ndarray
    W_XB: WeightRows
    Wbar_XB: WeightRows
    D_B: np.ndarray
    D_BX: np.ndarray

    @property
    def m(self) -> int:
        return self.W_B.shape[0]

    def T(self) -> np.ndarray:
        """D_BX - Wbar_XB^T W_XB, accumulated pairwise over the k entries of each row."""
        m = self.m
        idx, wbar, w = self.W_XB.index, self.Wbar_XB.weight, self.W_XB.weight
        flat = np.zeros(m * m)
        k = idx.shape[1]
        for a in range(k):
            for b in range(k):
                flat += np.bincount(idx[:, a] * m + idx[:, b], weights=wbar[:, a] * w[:, b], minlength=m * m)
        return np.diag(self.D_BX) - flat.reshape(m, m)

    def M(self) -> np.ndarray:
        return np.diag(self.D_B) - self.W_B


def base_affinity(centers: np.ndarray, sigma: float) -> np.ndarray:
    """Dense Gaussian affinity among centers with zero diagonal, symmetric by construction."""
    m = centers.shape[0]
    W = np.zeros((m, m))
    iu, ju = np.triu_indices(m, k=1)
    if iu.size:
        d2 = sq_dist_matrix(centers, centers)[iu, ju]
        vals = np.exp(-d2 / sigma**2)
        W[iu, ju] = vals
        W[ju, iu] = vals
    return W


def build_affinities(X: FeatureMatrix, base: BaseSet, k: int, sigma: float) -> AffinityMatrices:
    if X.d != base.d:
        raise ValueError(f"data dimension {X.d} does not match base dimension {base.d}")
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    W_B = base_affinity(base.centers, sigma)
    raw = knn_base_weights_batch(X.data, base.centers, k, sigma)
    norm = normalize_rows(raw)
    D_B = W_B.sum(axis=1)
    D_BX = np.bincount(raw.index.ravel(), weights=raw.weight.ravel(), minlength=base.m)
    return AffinityMatrices(W_B, raw, norm, D_B, D_BX)
