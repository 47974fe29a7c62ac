"""Reference AMR encoder: token embeddings, mean pooling, affine + tanh.

It is the smallest differentiable stand-in for a transformer encoder that
still lets the contrastive objective be trained and gradient-checked end
to end. All parameters live in one flat float64 vector so optimizers and
finite-difference checks can treat the model as ``theta``.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path
from typing import Any, Protocol, Sequence

import numpy as np

from .errors import DataError
from .vocab import Vocabulary, tokenize

MAGIC = b"AMRE"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIII16s")


class Encoder(Protocol):
    """What the trainer needs from an encoder."""

    params: np.ndarray
    dim: int

    def forward(self, seqs: Sequence[Sequence[str]]) -> tuple[np.ndarray, Any]: ...

    def backward(self, cache: Any, grad_out: np.ndarray) -> np.ndarray: ...


class ReferenceEncoder:
    def __init__(self, vocab: Vocabulary, dim: int = 64, hidden: int = 64, seed: int = 0,
                 params: np.ndarray | None = None):
        self.vocab = vocab
        self.vocab_size = vocab.size
        self.dim = dim
        self.hidden = hidden
        n = self.vocab_size * hidden + dim * hidden + dim
        if params is None:
            rng = np.random.default_rng(seed)
            params = np.concatenate([
                rng.standard_normal(self.vocab_size * hidden),
                rng.standard_normal(dim * hidden) / np.sqrt(hidden),
                np.zeros(dim),
            ])
        params = np.ascontiguousarray(params, dtype=np.float64)
        if params.shape != (n,):
            raise DataError(f"expected {n} parameters, got {params.shape}")
        self.params = params
        self._ids: dict[tuple[str, ...], np.ndarray] = {}

    @property
    def params(self) -> np.ndarray:
        return self._params

    @params.setter
    def params(self, value: np.ndarray):
        self._params = np.ascontiguousarray(value, dtype=np.float64)
        v, k, d = self.vocab_size, self.hidden, self.dim
        self.E = self._params[: v * k].reshape(v, k)
        self.W = self._params[v * k: v * k + d * k].reshape(d, k)
        self.b = self._params[v * k + d * k:]

    def token_ids(self, seq: Sequence[str]) -> np.ndarray:
        key = tuple(seq)
        ids = self._ids.get(key)
        if ids is None:
            ids = np.asarray(tokenize(key, self.vocab), dtype=np.int64)
            if ids.size == 0:
                raise DataError("cannot encode an empty token sequence")
            self._ids[key] = ids
        return ids

    def forward(self, seqs):
        id_lists = [self.token_ids(s) for s in seqs]
        pooled = np.stack([self.E[ids].mean(axis=0) for ids in id_lists]) if id_lists \
            else np.zeros((0, self.hidden))
        out = np.tanh(pooled @ self.W.T + self.b)
        return out, (id_lists, pooled, out)

    def backward(self, cache, grad_out: np.ndarray) -> np.ndarray:
        id_lists, pooled, out = cache
        grad = np.zeros_like(self._params)
        v, k, d = self.vocab_size, self.hidden, self.dim
        gE = grad[: v * k].reshape(v, k)
        gW = grad[v * k: v * k + d * k].reshape(d, k)
        gb = grad[v * k + d * k:]
        dz = grad_out * (1.0 - out**2)
        gW += dz.T @ pooled
        gb += dz.sum(axis=0)
        dpooled = dz @ self.W
        for ids, row in zip(id_lists, dpooled):
            np.add.at(gE, ids, row / len(ids))
        return grad

    def embed(self, seqs) -> np.ndarray:
        return self.forward(seqs)[0]

    def copy(self) -> "ReferenceEncoder":
        return ReferenceEncoder(self.vocab, self.dim, self.hidden, params=self._params.copy())


def config_digest(config_hash: str | None) -> bytes:
    if not config_hash:
        return bytes(16)
    return hashlib.sha256(config_hash.encode("utf-8")).digest()[:16]


def save_encoder(enc: ReferenceEncoder, path: str | Path, config_hash: str | None = None) -> None:
    """Write the versioned little-endian model file.

    Layout: magic ``AMRE``, format version, output dim, vocabulary size,
    hidden size (all u32), a 16-byte config digest, then the flat
    parameter vector as f64.
    """
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, enc.dim, enc.vocab_size, enc.hidden,
                          config_digest(config_hash))
    Path(path).write_bytes(header + enc.params.astype("<f8").tobytes())


def read_encoder_header(path: str | Path) -> dict:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise DataError(f"{path}: truncated model file")
    magic, version, dim, vocab_size, hidden, digest = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DataError(f"{path}: not a model file (bad magic {magic!r})")
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported model format version {version}")
    return {"dim": dim, "vocab_size": vocab_size, "hidden": hidden, "digest": digest,
            "payload": data[_HEADER.size:]}


def load_encoder(path: str | Path, vocab: Vocabulary) -> ReferenceEncoder:
    h = read_encoder_header(path)
    if h["vocab_size"] != vocab.size:
        raise DataError(f"{path}: model expects vocabulary size {h['vocab_size']}, got {vocab.size}")
    expected = (h["vocab_size"] + h["dim"]) * h["hidden"] + h["dim"]
    if len(h["payload"]) != 8 * expected:
        raise DataError(f"{path}: parameter blob has wrong length")
    params = np.frombuffer(h["payload"], dtype="<f8").astype(np.float64)
    return ReferenceEncoder(vocab, h["dim"], h["hidden"], params=params)
