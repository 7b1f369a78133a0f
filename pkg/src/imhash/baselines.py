"""Linear sanity baselines: sign of PCA projections and random-hyperplane LSH."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embed import pca_directions
from .hashing import binarize, rowwise_matmul
from .types import BinaryCodes, FeatureMatrix

KINDS = ("pca_sign", "random_hyperplane")


@dataclass(frozen=True)
class LinearHashModel:
    """Codes are ``x W + b > 0``, bit by bit."""

    projection: np.ndarray
    bias: np.ndarray
    kind: str

    def __post_init__(self):
        W = np.asarray(self.projection, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if W.ndim != 2 or b.shape != (W.shape[1],):
            raise ValueError(f"projection {W.shape} and bias {b.shape} do not agree")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise ValueError("projection and bias must be finite")
        if self.kind not in KINDS:
            raise ValueError(f"unknown baseline kind {self.kind!r}")
        object.__setattr__(self, "projection", W)
        object.__setattr__(self, "bias", b)

    @property
    def d(self) -> int:
        return self.projection.shape[0]

    @property
    def code_length(self) -> int:
        return self.projection.shape[1]

    def project(self, X) -> np.ndarray:
        data = X.data if isinstance(X, FeatureMatrix) else np.atleast_2d(np.asarray(X, dtype=np.float64))
        if data.shape[1] != self.d:
            raise ValueError(f"query dimension {data.shape[1]} does not match model dimension {self.d}")
        # row-at-a-time products keep codes independent of batching
        return rowwise_matmul(data, self.projection) + self.bias

    def encode(self, X) -> BinaryCodes:
        return binarize(self.project(X))


def pcah_train(X, r: int) -> LinearHashModel:
    """Top-r principal directions of the centered data, offset so the mean maps to zero."""
    data = X.data if isinstance(X, FeatureMatrix) else np.asarray(X, dtype=np.float64)
    if r > data.shape[1]:
        raise ValueError(f"r = {r} exceeds the data dimension {data.shape[1]}")
    mean, W, _ = pca_directions(data, r)
    bias = -rowwise_matmul(mean[None, :], W)[0]
    return LinearHashModel(W, bias, "pca_sign")


def lsh_train(d: int, r: int, seed: int = 0) -> LinearHashModel:
    """Standard-normal hyperplanes through the origin."""
    if r < 1 or d < 1:
        raise ValueError(f"d and r must be >= 1, got d={d}, r={r}")
    W = np.random.default_rng(seed).standard_normal((d, r))
    return LinearHashModel(W, np.zeros(r), "random_hyperplane")
