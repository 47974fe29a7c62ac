"""Id-aligned embedding files.

Binary layout (little-endian)::

    magic "AMRV" | version u32 | count u32 | dim u32 | config digest 16B
    count x (id length u32, id UTF-8 bytes)
    count x dim float32, row-major

Vectors are widened to float64 on load. Plain-text dumps from external
embedding systems (first line ``count dim``, then ``id v1 ... vd``) are
read by the same entry point.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, DimensionMismatch

MAGIC = b"AMRV"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIII16s")
_LEN = struct.Struct("<I")


@dataclass
class VectorStore:
    ids: list[str]
    vectors: np.ndarray
    digest: bytes = bytes(16)

    def __post_init__(self):
        self.ids = [str(i) for i in self.ids]
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2:
            self.vectors = self.vectors.reshape(len(self.ids), -1)
        if self.vectors.shape[0] != len(self.ids):
            raise DimensionMismatch(f"{len(self.ids)} ids but {self.vectors.shape[0]} vectors")
        if len(set(self.ids)) != len(self.ids):
            raise DataError("vector ids are not unique")
        self._row = {k: i for i, k in enumerate(self.ids)}

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, key: str) -> bool:
        return key in self._row

    def get(self, key: str) -> np.ndarray:
        try:
            return self.vectors[self._row[key]]
        except KeyError:
            raise DataError(f"no vector for id {key!r}") from None

    def rows(self, keys: Sequence[str]) -> np.ndarray:
        return np.stack([self.get(k) for k in keys]) if keys else np.zeros((0, self.dim))

    def to_bytes(self) -> bytes:
        parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, len(self.ids), self.dim, self.digest)]
        for key in self.ids:
            raw = key.encode("utf-8")
            parts += [_LEN.pack(len(raw)), raw]
        parts.append(self.vectors.astype("<f4").tobytes())
        return b"".join(parts)

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())


def from_bytes(data: bytes, source: str = "<bytes>") -> VectorStore:
    if len(data) < _HEADER.size:
        raise DataError(f"{source}: truncated vector store")
    magic, version, count, dim, digest = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DataError(f"{source}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise DataError(f"{source}: unsupported vector store version {version}")
    pos = _HEADER.size
    ids = []
    for _ in range(count):
        if pos + 4 > len(data):
            raise DataError(f"{source}: truncated id table")
        (n,) = _LEN.unpack_from(data, pos)
        pos += 4
        ids.append(data[pos:pos + n].decode("utf-8"))
        pos += n
    payload = data[pos:]
    if len(payload) != 4 * count * dim:
        raise DataError(f"{source}: expected {count}x{dim} floats, found {len(payload) // 4}")
    vectors = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(count, dim)
    return VectorStore(ids, vectors, digest)


def read_text_vectors(path: str | Path) -> VectorStore:
    lines = [l for l in Path(path).read_text(encoding="utf-8").splitlines() if l.strip()]
    if not lines:
        raise DataError(f"{path}: empty vector file")
    try:
        count, dim = (int(x) for x in lines[0].split())
    except ValueError as exc:
        raise DataError(f"{path}: first line must be 'count dim'") from exc
    if len(lines) - 1 != count:
        raise DataError(f"{path}: header announces {count} vectors, found {len(lines) - 1}")
    ids, rows = [], []
    for lineno, line in enumerate(lines[1:], 2):
        parts = line.split()
        if len(parts) != dim + 1:
            raise DimensionMismatch(f"{path}:{lineno}: expected {dim} values")
        ids.append(parts[0])
        rows.append([float(x) for x in parts[1:]])
    return VectorStore(ids, np.array(rows, dtype=np.float64).reshape(count, dim))


def load_vectors(path: str | Path) -> VectorStore:
    data = Path(path).read_bytes()
    if data[:4] == MAGIC:
        return from_bytes(data, str(path))
    return read_text_vectors(path)
