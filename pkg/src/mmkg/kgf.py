"""Reader/writer for the little-endian ``KGF1`` binary container.

Layout::

    "KGF1"  u32 version  u32 kind  u32 rows  u32 dim
    kind 0 (dense):    rows x dim f32
    kind 1 (indexed):  rows x (u32 node index, dim f32)
    kind 2 (sections): dim bytes of UTF-8 JSON metadata, then ``rows`` sections of
                       u32 name_len, name, u32 ndim, ndim x u32 extents, f32 data
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError

MAGIC = b"KGF1"
VERSION = 1
KIND_DENSE = 0
KIND_INDEXED = 1
KIND_SECTIONS = 2

_HEADER = struct.Struct("<4sIIII")


def _header(kind, rows, dim) -> bytes:
    return _HEADER.pack(MAGIC, VERSION, kind, rows, dim)


def write_matrix(path, matrix, node_index=None) -> None:
    """Write a dense (kind 0) or node-indexed (kind 1) f32 matrix."""
    m = np.ascontiguousarray(matrix, dtype="<f4")
    if m.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {m.shape}")
    rows, dim = m.shape
    with open(path, "wb") as fh:
        if node_index is None:
            fh.write(_header(KIND_DENSE, rows, dim))
            fh.write(m.tobytes())
        else:
            idx = np.asarray(node_index, dtype="<u4")
            if idx.shape != (rows,):
                raise ValueError("node_index must have one entry per row")
            rec = np.empty(rows, dtype=[("i", "<u4"), ("v", "<f4", (dim,))])
            rec["i"] = idx
            rec["v"] = m
            fh.write(_header(KIND_INDEXED, rows, dim))
            fh.write(rec.tobytes())


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"{self.path}: truncated while reading {what}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def _open(path) -> tuple[_Reader, int, int, int]:
    data = Path(path).read_bytes()
    r = _Reader(data, path)
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, kind, rows, dim = _HEADER.unpack(r.take(_HEADER.size, "header"))
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if kind not in (KIND_DENSE, KIND_INDEXED, KIND_SECTIONS):
        raise FormatError(f"{path}: unknown kind {kind}")
    return r, kind, rows, dim


def read_matrix(path) -> tuple[np.ndarray, np.ndarray | None]:
    """Return ``(matrix, node_index)``; ``node_index`` is None for dense files."""
    r, kind, rows, dim = _open(path)
    if kind == KIND_DENSE:
        m = np.frombuffer(r.take(rows * dim * 4, "matrix data"), dtype="<f4").reshape(rows, dim)
        idx = None
    elif kind == KIND_INDEXED:
        dt = np.dtype([("i", "<u4"), ("v", "<f4", (dim,))])
        rec = np.frombuffer(r.take(rows * dt.itemsize, "indexed rows"), dtype=dt)
        m, idx = rec["v"].reshape(rows, dim), rec["i"].astype(np.int64)
    else:
        raise FormatError(f"{path}: expected a matrix file, found a sectioned container")
    if r.pos != len(r.data):
        raise FormatError(f"{path}: {len(r.data) - r.pos} trailing bytes")
    m = m.astype(np.float32)
    if not np.isfinite(m).all():
        raise DataError(f"{path}: non-finite values")
    return m, idx


def write_sections(path, sections: dict[str, np.ndarray], meta: dict | None = None) -> None:
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_header(KIND_SECTIONS, len(sections), len(meta_bytes)))
        fh.write(meta_bytes)
        for name, arr in sections.items():
            a = np.ascontiguousarray(arr, dtype="<f4")
            nb = name.encode("utf-8")
            fh.write(struct.pack("<I", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<I", a.ndim))
            fh.write(struct.pack(f"<{a.ndim}I", *a.shape))
            fh.write(a.tobytes())


def read_sections(path) -> tuple[dict[str, np.ndarray], dict]:
    r, kind, rows, dim = _open(path)
    if kind != KIND_SECTIONS:
        raise FormatError(f"{path}: expected a sectioned container, found kind {kind}")
    try:
        meta = json.loads(r.take(dim, "metadata").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable metadata ({exc})") from None
    out: dict[str, np.ndarray] = {}
    for s in range(rows):
        n = r.u32(f"section {s} name length")
        try:
            name = r.take(n, f"section {s} name").decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError(f"{path}: section {s} name is not UTF-8") from None
        ndim = r.u32(f"section {name!r} rank")
        shape = struct.unpack(f"<{ndim}I", r.take(4 * ndim, f"section {name!r} shape"))
        count = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(r.take(4 * count, f"section {name!r} data"), dtype="<f4")
        out[name] = data.reshape(shape).astype(np.float32)
    if r.pos != len(r.data):
        raise FormatError(f"{path}: {len(r.data) - r.pos} trailing bytes")
    return out, meta
