"""Readers for benchmark feature files (MNIST IDX, fvecs/bvecs, CSV) and train/test splitting."""

from __future__ import annotations

import csv
import gzip
import os
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import FormatError
from .types import FeatureMatrix

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def _read_bytes(path) -> bytes:
    path = os.fspath(path)
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "rb") as fh:
        return fh.read()


def _idx_header(raw: bytes, expected_magic: int, ndims: int, path) -> Tuple[int, ...]:
    need = 4 + 4 * ndims
    if len(raw) < need:
        raise FormatError(f"{path}: IDX header truncated ({len(raw)} bytes)")
    magic = int.from_bytes(raw[:4], "big")
    if magic != expected_magic:
        raise FormatError(f"{path}: IDX magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    return tuple(int.from_bytes(raw[4 + 4 * i: 8 + 4 * i], "big") for i in range(ndims))


def _matrix(path, data, labels=None) -> FeatureMatrix:
    try:
        return FeatureMatrix(data, labels)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


def load_idx(images_path, labels_path=None) -> FeatureMatrix:
    """Read an IDX image file (optionally with its label file); pixels scaled to [0, 1]."""
    raw = _read_bytes(images_path)
    n, rows, cols = _idx_header(raw, IDX_IMAGES_MAGIC, 3, images_path)
    d = rows * cols
    body = raw[16:]
    if len(body) < n * d:
        raise FormatError(f"{images_path}: expected {n * d} pixel bytes, found {len(body)}")
    pixels = np.frombuffer(body, dtype=np.uint8, count=n * d).reshape(n, d)
    data = pixels.astype(np.float64) / 255.0

    labels = None
    if labels_path is not None:
        lraw = _read_bytes(labels_path)
        (nl,) = _idx_header(lraw, IDX_LABELS_MAGIC, 1, labels_path)
        if nl != n:
            raise FormatError(f"image file has {n} items but label file {labels_path} has {nl}")
        if len(lraw) - 8 < nl:
            raise FormatError(f"{labels_path}: expected {nl} label bytes, found {len(lraw) - 8}")
        labels = np.frombuffer(lraw[8:], dtype=np.uint8, count=nl).astype(np.int64)
    return FeatureMatrix(data, labels)


def write_idx(images_path, pixels: np.ndarray, labels_path=None, labels=None) -> None:
    """Write uint8 images (n, rows, cols) in IDX format; used to build fixtures."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    n, rows, cols = pixels.shape
    with open(images_path, "wb") as fh:
        fh.write(IDX_IMAGES_MAGIC.to_bytes(4, "big"))
        for v in (n, rows, cols):
            fh.write(v.to_bytes(4, "big"))
        fh.write(pixels.tobytes())
    if labels_path is not None:
        lab = np.asarray(labels, dtype=np.uint8)
        with open(labels_path, "wb") as fh:
            fh.write(IDX_LABELS_MAGIC.to_bytes(4, "big"))
            fh.write(len(lab).to_bytes(4, "big"))
            fh.write(lab.tobytes())


def load_vecs(path, fmt: str = "fvecs", limit: Optional[int] = None) -> FeatureMatrix:
    """Read a TEXMEX fvecs/bvecs file: per record a little-endian int32 dim, then the payload."""
    if fmt not in ("fvecs", "bvecs"):
        raise ValueError(f"format must be fvecs or bvecs, got {fmt!r}")
    if limit is not None and limit < 1:
        raise ValueError(f"limit must be >= 1, got {limit}")
    item = 4 if fmt == "fvecs" else 1
    raw = _read_bytes(path)
    rows = []
    pos = 0
    d = None
    rec = 0
    while pos < len(raw) and (limit is None or rec < limit):
        if pos + 4 > len(raw):
            raise FormatError(f"{path}: truncated dimension header at record {rec}")
        dim = int.from_bytes(raw[pos:pos + 4], "little", signed=True)
        pos += 4
        if dim < 1:
            raise FormatError(f"{path}: record {rec} has invalid dimension {dim}")
        if d is None:
            d = dim
        elif dim != d:
            raise FormatError(f"{path}: record {rec} has dimension {dim}, expected {d}")
        end = pos + dim * item
        if end > len(raw):
            raise FormatError(
                f"{path}: record {rec} truncated, needs {dim * item} payload bytes, has {len(raw) - pos}"
            )
        if fmt == "fvecs":
            rows.append(np.frombuffer(raw[pos:end], dtype="<f4"))
        else:
            rows.append(np.frombuffer(raw[pos:end], dtype=np.uint8))
        pos = end
        rec += 1
    if not rows:
        raise FormatError(f"{path}: no records")
    return _matrix(path, np.vstack(rows).astype(np.float64))


def write_vecs(path, data: np.ndarray, fmt: str = "fvecs") -> None:
    data = np.asarray(data)
    dtype = "<f4" if fmt == "fvecs" else np.uint8
    with open(path, "wb") as fh:
        for row in data:
            fh.write(np.int32(len(row)).astype("<i4").tobytes())
            fh.write(np.asarray(row, dtype=dtype).tobytes())


def load_csv(path, has_labels: bool = False) -> FeatureMatrix:
    """Strict numeric CSV without header; the label, if any, is the last column."""
    values = []
    labels = []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise FormatError(f"{path}: line {lineno} has {len(row)} columns, expected {width}")
            try:
                nums = [float(c) for c in row]
            except ValueError as exc:
                raise FormatError(f"{path}: line {lineno}: non-numeric cell ({exc})") from None
            if has_labels:
                lab = nums.pop()
                if not np.isfinite(lab) or lab != int(lab):
                    raise FormatError(f"{path}: line {lineno}: label {lab} is not an integer")
                labels.append(int(lab))
            values.append(nums)
    if not values:
        raise FormatError(f"{path}: no data rows")
    if has_labels and width < 2:
        raise FormatError(f"{path}: a labelled row needs at least one feature column")
    return _matrix(path, np.array(values, dtype=np.float64), labels if has_labels else None)


def split_train_test(X: FeatureMatrix, test_count: int, seed: int) -> Tuple[FeatureMatrix, FeatureMatrix]:
    """Seeded random partition into (train, test) with ``test_count`` test rows."""
    if not 1 <= test_count < X.n:
        raise ValueError(f"test_count must lie in [1, {X.n - 1}], got {test_count}")
    perm = np.random.default_rng(seed).permutation(X.n)
    test_idx = np.sort(perm[:test_count])
    train_idx = np.sort(perm[test_count:])
    return X.take(train_idx), X.take(test_idx)


@dataclass(frozen=True)
class DatasetSpec:
    paths: Tuple[str, ...]
    format: str
    limit: Optional[int] = None
    has_labels: bool = False

    def __post_init__(self):
        if self.format not in ("idx", "fvecs", "bvecs", "csv"):
            raise ValueError(f"unknown dataset format {self.format!r}")
        if self.limit is not None and self.limit < 1:
            raise ValueError(f"limit must be >= 1, got {self.limit}")


def load_dataset(spec: DatasetSpec) -> FeatureMatrix:
    if spec.format == "idx":
        X = load_idx(spec.paths[0], spec.paths[1] if len(spec.paths) > 1 else None)
    elif spec.format in ("fvecs", "bvecs"):
        X = load_vecs(spec.paths[0], spec.format, spec.limit)
    else:
        X = load_csv(spec.paths[0], spec.has_labels)
    if spec.limit is not None and X.n > spec.limit:
        X = X.take(np.arange(spec.limit))
    return X


def sample_rows(X: FeatureMatrix, count: int, seed: int) -> FeatureMatrix:
    """A seeded subset of ``count`` rows, kept in their original order."""
    if not 1 <= count <= X.n:
        raise ValueError(f"sample size must lie in [1, {X.n}], got {count}")
    if count == X.n:
        return X
    idx = np.sort(np.random.default_rng(seed).choice(X.n, count, replace=False))
    return X.take(idx)


def database_and_queries(X: FeatureMatrix, queries: int, seed: int,
                         sample: Optional[int] = None) -> Tuple[FeatureMatrix, FeatureMatrix]:
    """Optionally subsample, then hold out ``queries`` rows; both draws use ``seed``."""
    if sample is not None:
        X = sample_rows(X, sample, seed)
    return split_train_test(X, queries, seed)
