"""Shared data model: feature matrices, base sets, embeddings, packed codes, models."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

BASE_METHODS = ("random", "kmedians", "kmeans", "per_class_kmeans")
BACKENDS = ("le_base", "le_relaxed", "tsne", "pca")


def _as_f64(a, name: str, ndim: int) -> np.ndarray:
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    arr.setflags(write=False)
    return arr


def _as_labels(labels, n: int) -> np.ndarray:
    lab = np.ascontiguousarray(labels, dtype=np.int64)
    if lab.shape != (n,):
        raise ValueError(f"labels must have length {n}, got shape {lab.shape}")
    if lab.size and lab.min() < 0:
        raise ValueError("labels must be non-negative class ids")
    lab.setflags(write=False)
    return lab


def _same(a: Optional[np.ndarray], b: Optional[np.ndarray]) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return a.dtype == b.dtype and a.shape == b.shape and a.tobytes() == b.tobytes()


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """n x d dense float64 descriptors with optional integer class ids."""

    data: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        data = _as_f64(self.data, "data", 2)
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"feature matrix must be non-empty, got shape {data.shape}")
        object.__setattr__(self, "data", data)
        if self.labels is not None:
            object.__setattr__(self, "labels", _as_labels(self.labels, data.shape[0]))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def take(self, idx) -> "FeatureMatrix":
        idx = np.asarray(idx, dtype=np.int64)
        labels = None if self.labels is None else self.labels[idx]
        return FeatureMatrix(self.data[idx], labels)

    def __eq__(self, other):
        if not isinstance(other, FeatureMatrix):
            return NotImplemented
        return _same(self.data, other.data) and _same(self.labels, other.labels)


@dataclass(frozen=True, eq=False)
class BaseSet:
    centers: np.ndarray
    method: str = "kmeans"
    assign_dist: Optional[np.ndarray] = None
    class_of_center: Optional[np.ndarray] = None

    def __post_init__(self):
        centers = _as_f64(self.centers, "centers", 2)
        if centers.shape[0] < 1:
            raise ValueError("base set needs at least one center")
        object.__setattr__(self, "centers", centers)
        if self.method not in BASE_METHODS:
            raise ValueError(f"unknown base method {self.method!r}")
        if self.assign_dist is not None:
            ad = _as_f64(self.assign_dist, "assign_dist", 1)
            if np.any(ad < 0):
                raise ValueError("assign_dist must be non-negative")
            object.__setattr__(self, "assign_dist", ad)
        if self.class_of_center is not None:
            object.__setattr__(
                self, "class_of_center", _as_labels(self.class_of_center, centers.shape[0])
            )

    @property
    def m(self) -> int:
        return self.centers.shape[0]

    @property
    def d(self) -> int:
        return self.centers.shape[1]

    def __eq__(self, other):
        if not isinstance(other, BaseSet):
            return NotImplemented
        return (
            self.method == other.method
            and _same(self.centers, other.centers)
            and _same(self.assign_dist, other.assign_dist)
            and _same(self.class_of_center, other.class_of_center)
        )


@dataclass(frozen=True, eq=False)
class Embedding:
    coords: np.ndarray
    centered: bool = True

    def __post_init__(self):
        coords = _as_f64(self.coords, "coords", 2)
        if coords.shape[1] < 1:
            raise ValueError("embedding needs r >= 1 columns")
        object.__setattr__(self, "coords", coords)
        if self.centered:
            mean = np.abs(coords.mean(axis=0))
            tol = 1e-9 * coords.std(axis=0) + 1e-12
            if np.any(mean > tol):
                raise ValueError(f"embedding flagged centered but column means reach {mean.max():.3g}")

    @classmethod
    def centered_from(cls, coords) -> "Embedding":
        coords = np.asarray(coords, dtype=np.float64)
        coords = coords - coords.mean(axis=0)
        # a second pass removes the rounding residue of the first
        coords = coords - coords.mean(axis=0)
        return cls(coords, centered=True)

    @property
    def r(self) -> int:
        return self.coords.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Embedding):
            return NotImplemented
        return self.centered == other.centered and _same(self.coords, other.coords)


@dataclass(frozen=True, eq=False)
class BinaryCodes:
    """n x r bit matrix packed little-endian into uint64 words.

    Bit ``j`` of a row lives in word ``j // 64`` at position ``j % 64``;
    pad bits beyond ``r`` are always zero.
    """

    words: np.ndarray
    r: int

    def __post_init__(self):
        words = np.ascontiguousarray(self.words, dtype=np.uint64)
        if words.ndim != 2 or words.shape[1] != n_words(self.r):
            raise ValueError(f"words shape {words.shape} does not fit r={self.r}")
        rem = self.r % 64
        if rem and words.size and np.any(words[:, -1] >> np.uint64(rem)):
            raise ValueError("non-zero pad bits in packed codes")
        words.setflags(write=False)
        object.__setattr__(self, "words", words)

    @classmethod
    def from_bits(cls, bits) -> "BinaryCodes":
        bits = np.asarray(bits, dtype=bool)
        if bits.ndim == 1:
            bits = bits[None, :]
        n, r = bits.shape
        w = n_words(r)
        padded = np.zeros((n, w * 64), dtype=bool)
        padded[:, :r] = bits
        packed = np.packbits(padded, axis=1, bitorder="little")
        words = packed.view("<u8").astype(np.uint64)
        return cls(words.reshape(n, w), r)

    def to_bits(self) -> np.ndarray:
        raw = np.ascontiguousarray(self.words.astype("<u8")).view(np.uint8)
        bits = np.unpackbits(raw, axis=1, bitorder="little")
        return bits[:, : self.r].astype(bool)

    def __len__(self) -> int:
        return self.words.shape[0]

    def __getitem__(self, idx) -> "BinaryCodes":
        words = self.words[idx]
        if words.ndim == 1:
            words = words[None, :]
        return BinaryCodes(words, self.r)

    def __eq__(self, other):
        if not isinstance(other, BinaryCodes):
            return NotImplemented
        return self.r == other.r and _same(self.words, other.words)


def n_words(r: int) -> int:
    if r < 1:
        raise ValueError(f"code length must be >= 1, got {r}")
    return (r + 63) // 64


@dataclass(frozen=True, eq=False)
class HashModel:
    """A trained inductive hash function.

    ``base_embedding`` has ``r_in`` columns; the emitted code length is
    ``r_out`` of the supervised projection when present, else ``r_in``.
    ``sigma`` is the kernel bandwidth in the units of ``exp(-dist^2 / sigma^2)``.
    """

    base: BaseSet
    base_embedding: Embedding
    sigma: float
    k: int
    backend: str = "tsne"
    rotation: Optional[np.ndarray] = None
    supervised_projection: Optional[np.ndarray] = None
    embed_mean: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown backend {self.backend!r}")
        m = self.base.m
        if self.base_embedding.coords.shape[0] != m:
            raise ValueError(
                f"base embedding has {self.base_embedding.coords.shape[0]} rows, base set has {m}"
            )
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"sigma must be finite and > 0, got {self.sigma}")
        object.__setattr__(self, "sigma", float(self.sigma))
        if not 1 <= int(self.k) <= m:
            raise ValueError(f"k must lie in [1, {m}], got {self.k}")
        object.__setattr__(self, "k", int(self.k))
        r = self.base_embedding.r
        if self.supervised_projection is not None:
            proj = _as_f64(self.supervised_projection, "supervised_projection", 2)
            if proj.shape[0] != r:
                raise ValueError(f"supervised_projection must have {r} rows, got {proj.shape[0]}")
            object.__setattr__(self, "supervised_projection", proj)
            r = proj.shape[1]
        if self.rotation is not None:
            rot = _as_f64(self.rotation, "rotation", 2)
            if rot.shape != (r, r):
                raise ValueError(f"rotation must be {r}x{r}, got {rot.shape}")
            if np.abs(rot.T @ rot - np.eye(r)).max() > 1e-8:
                raise ValueError("rotation is not orthogonal within 1e-8")
            object.__setattr__(self, "rotation", rot)
        mean = self.base_embedding.coords.mean(axis=0)
        mean.setflags(write=False)
        object.__setattr__(self, "embed_mean", mean)

    @property
    def d(self) -> int:
        return self.base.d

    @property
    def m(self) -> int:
        return self.base.m

    @property
    def code_length(self) -> int:
        if self.supervised_projection is not None:
            return self.supervised_projection.shape[1]
        return self.base_embedding.r

    def __eq__(self, other):
        if not isinstance(other, HashModel):
            return NotImplemented
        return (
            self.backend == other.backend
            and self.k == other.k
            and np.float64(self.sigma).tobytes() == np.float64(other.sigma).tobytes()
            and self.base == other.base
            and self.base_embedding == other.base_embedding
            and _same(self.rotation, other.rotation)
            and _same(self.supervised_projection, other.supervised_projection)
        )
