"""Deterministic bag-of-words hashing encoder standing in for g(x).

Real runs ingest text embeddings from an external system through a vector
file; this stub only exists so the fixture pipeline has a text channel.
"""

from __future__ import annotations

import hashlib
from functools import lru_cache
from typing import Sequence

import numpy as np


class HashingTextEncoder:
    def __init__(self, dim: int = 32, seed: int = 0):
        self.dim = dim
        self.seed = seed
        self._vec = lru_cache(maxsize=None)(self._token_vector)

    def _token_vector(self, token: str) -> np.ndarray:
        digest = hashlib.blake2b(f"{self.seed}\x00{token}".encode("utf-8"), digest_size=8).digest()
        return np.random.default_rng(int.from_bytes(digest, "little")).standard_normal(self.dim)

    def embed_one(self, sentence: str) -> np.ndarray:
        tokens = sentence.lower().split() or [""]
        return np.sum([self._vec(t) for t in tokens], axis=0)

    def embed(self, sentences: Sequence[str]) -> np.ndarray:
        if not sentences:
            return np.zeros((0, self.dim))
        return np.stack([self.embed_one(s) for s in sentences])
