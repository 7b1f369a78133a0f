"""Binary model file format.

Layout (all little-endian)::

    "IMH1"
    u8 backend, u8 base method, u32 m, u32 d, u32 r, u32 k, f64 sigma, u8 centered
    f64[m*d] centers
    f64[m*r] base embedding
    u8 flag [u64 n, f64[n]]          assign_dist
    u8 flag [i64[m]]                 class_of_center
    u8 flag [u32 r_out, f64[r*r_out]] supervised projection
    u8 flag [u32 q, f64[q*q]]        rotation

Linear baselines use ``"LHM1", u8 kind, u32 d, u32 r, f64[d*r] W, f64[r] b``
and code files ``"IMHC", u32 r, u64 n, u64[n*words] packed bits``.
"""

from __future__ import annotations

import io
import os
import struct
from typing import BinaryIO, Union

import numpy as np

from .errors import FormatError
from .baselines import KINDS, LinearHashModel
from .types import BACKENDS, BASE_METHODS, BaseSet, BinaryCodes, Embedding, HashModel, n_words

MAGIC = b"IMH1"
LINEAR_MAGIC = b"LHM1"
CODES_MAGIC = b"IMHC"
_HEAD = struct.Struct("<BBIIIIdB")
_LINEAR_HEAD = struct.Struct("<BII")
_CODES_HEAD = struct.Struct("<IQ")


def _pack_array(a: np.ndarray, dtype: str) -> bytes:
    return np.ascontiguousarray(a, dtype=dtype).tobytes()


def _dumps_linear(model: LinearHashModel) -> bytes:
    d, r = model.projection.shape
    return (LINEAR_MAGIC + _LINEAR_HEAD.pack(KINDS.index(model.kind), d, r)
            + _pack_array(model.projection, "<f8") + _pack_array(model.bias, "<f8"))


def dumps(model) -> bytes:
    if isinstance(model, LinearHashModel):
        return _dumps_linear(model)
    buf = io.BytesIO()
    buf.write(MAGIC)
    m, d = model.base.centers.shape
    r = model.base_embedding.r
    buf.write(
        _HEAD.pack(
            BACKENDS.index(model.backend),
            BASE_METHODS.index(model.base.method),
            m,
            d,
            r,
            model.k,
            model.sigma,
            int(model.base_embedding.centered),
        )
    )
    buf.write(_pack_array(model.base.centers, "<f8"))
    buf.write(_pack_array(model.base_embedding.coords, "<f8"))

    ad = model.base.assign_dist
    if ad is None:
        buf.write(b"\x00")
    else:
        buf.write(b"\x01" + struct.pack("<Q", ad.shape[0]) + _pack_array(ad, "<f8"))

    coc = model.base.class_of_center
    buf.write(b"\x00" if coc is None else b"\x01" + _pack_array(coc, "<i8"))

    proj = model.supervised_projection
    if proj is None:
        buf.write(b"\x00")
    else:
        buf.write(b"\x01" + struct.pack("<I", proj.shape[1]) + _pack_array(proj, "<f8"))

    rot = model.rotation
    if rot is None:
        buf.write(b"\x00")
    else:
        buf.write(b"\x01" + struct.pack("<I", rot.shape[0]) + _pack_array(rot, "<f8"))
    return buf.getvalue()


def _write(payload: bytes, destination, what: str) -> None:
    if hasattr(destination, "write"):
        try:
            destination.write(payload)
        except OSError as exc:
            raise OSError(f"failed writing {what} stream: {exc}") from exc
        return
    try:
        with open(destination, "wb") as fh:
            fh.write(payload)
    except OSError as exc:
        raise OSError(f"failed writing {what} to {os.fspath(destination)}: {exc}") from exc


def save_model(model, destination: Union[str, os.PathLike, BinaryIO]) -> None:
    _write(dumps(model), destination, "model")


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, nbytes: int, what: str) -> bytes:
        end = self.pos + nbytes
        if end > len(self.data):
            raise FormatError(
                f"truncated model stream: {what} needs {nbytes} bytes at offset {self.pos}, "
                f"{len(self.data) - self.pos} left"
            )
        chunk = self.data[self.pos:end]
        self.pos = end
        return chunk

    def unpack(self, fmt: str, what: str):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size, what))

    def array(self, count: int, dtype: str, what: str) -> np.ndarray:
        itemsize = np.dtype(dtype).itemsize
        raw = self.take(count * itemsize, what)
        return np.frombuffer(raw, dtype=dtype).astype(dtype[1:] if dtype[0] == "<" else dtype)

    def flag(self, what: str) -> bool:
        (f,) = self.unpack("<B", what + " flag")
        if f not in (0, 1):
            raise FormatError(f"{what} flag must be 0 or 1, got {f}")
        return bool(f)


def _check_end(rd: _Reader, what: str):
    if rd.pos != len(rd.data):
        raise FormatError(f"{len(rd.data) - rd.pos} trailing bytes after {what} payload")


def _loads_linear(rd: _Reader) -> LinearHashModel:
    kind_i, d, r = rd.unpack(_LINEAR_HEAD.format, "linear header")
    if kind_i >= len(KINDS):
        raise FormatError(f"header field kind has unknown code {kind_i}")
    if d < 1 or r < 1:
        raise FormatError(f"header dimensions must be positive, got d={d} r={r}")
    W = rd.array(d * r, "<f8", "projection payload").reshape(d, r)
    b = rd.array(r, "<f8", "bias payload")
    _check_end(rd, "model")
    try:
        return LinearHashModel(W, b, KINDS[kind_i])
    except ValueError as exc:
        raise FormatError(f"model invariant violated: {exc}") from exc


def loads(data: bytes):
    """Decode either an inductive hash model or a linear baseline model."""
    rd = _Reader(bytes(data))
    magic = rd.take(4, "magic")
    if magic == LINEAR_MAGIC:
        return _loads_linear(rd)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r} or {LINEAR_MAGIC!r}")
    backend_i, method_i, m, d, r, k, sigma, centered = rd.unpack(_HEAD.format, "header")
    if backend_i >= len(BACKENDS):
        raise FormatError(f"header field backend has unknown code {backend_i}")
    if method_i >= len(BASE_METHODS):
        raise FormatError(f"header field base method has unknown code {method_i}")
    if m < 1 or d < 1 or r < 1:
        raise FormatError(f"header dimensions must be positive, got m={m} d={d} r={r}")
    centers = rd.array(m * d, "<f8", "centers payload").reshape(m, d)
    coords = rd.array(m * r, "<f8", "base embedding payload").reshape(m, r)

    assign_dist = None
    if rd.flag("assign_dist"):
        (n,) = rd.unpack("<Q", "assign_dist length")
        assign_dist = rd.array(n, "<f8", "assign_dist payload")
    class_of_center = None
    if rd.flag("class_of_center"):
        class_of_center = rd.array(m, "<i8", "class_of_center payload")
    projection = None
    if rd.flag("supervised_projection"):
        (r_out,) = rd.unpack("<I", "supervised_projection width")
        projection = rd.array(r * r_out, "<f8", "supervised_projection payload").reshape(r, r_out)
    rotation = None
    if rd.flag("rotation"):
        (q,) = rd.unpack("<I", "rotation size")
        rotation = rd.array(q * q, "<f8", "rotation payload").reshape(q, q)
    _check_end(rd, "model")

    try:
        base = BaseSet(centers, BASE_METHODS[method_i], assign_dist, class_of_center)
        emb = Embedding(coords, centered=bool(centered))
        return HashModel(
            base=base,
            base_embedding=emb,
            sigma=sigma,
            k=k,
            backend=BACKENDS[backend_i],
            rotation=rotation,
            supervised_projection=projection,
        )
    except ValueError as exc:
        raise FormatError(f"model invariant violated: {exc}") from exc


def _read(source) -> bytes:
    if isinstance(source, (bytes, bytearray, memoryview)):
        return bytes(source)
    if hasattr(source, "read"):
        return source.read()
    with open(source, "rb") as fh:
        return fh.read()


def load_model(source: Union[str, os.PathLike, BinaryIO, bytes]):
    return loads(_read(source))


def dumps_codes(codes: BinaryCodes) -> bytes:
    return CODES_MAGIC + _CODES_HEAD.pack(codes.r, len(codes)) + _pack_array(codes.words, "<u8")


def loads_codes(data: bytes) -> BinaryCodes:
    rd = _Reader(bytes(data))
    magic = rd.take(4, "magic")
    if magic != CODES_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {CODES_MAGIC!r}")
    r, n = rd.unpack(_CODES_HEAD.format, "codes header")
    if r < 1:
        raise FormatError(f"code length must be positive, got {r}")
    words = rd.array(n * n_words(r), "<u8", "codes payload").reshape(n, n_words(r))
    _check_end(rd, "codes")
    try:
        return BinaryCodes(words, r)
    except ValueError as exc:
        raise FormatError(f"codes invariant violated: {exc}") from exc


def save_codes(codes: BinaryCodes, destination) -> None:
    _write(dumps_codes(codes), destination, "codes")


def load_codes(source) -> BinaryCodes:
    return loads_codes(_read(source))
