from collections import Counter

import numpy as np
import pytest

from amr_retrofit.vocab import build_vocab


def token_vocab(triplets):
    """Vocabulary where every token of the triplets is one whole id."""
    counts = Counter(t for tr in triplets for s in (tr.anchor, tr.positive, tr.negative) for t in s)
    return build_vocab(counts, threshold=1)


class LinearEncoder:
    """Bag-of-tokens times a matrix; output is linear in the parameters."""

    def __init__(self, tokens, dim=4, seed=0):
        self.index = {t: k for k, t in enumerate(sorted(tokens))}
        self.dim = dim
        self.params = np.random.default_rng(seed).standard_normal(dim * len(self.index))

    def _bags(self, seqs):
        bags = np.zeros((len(seqs), len(self.index)))
        for r, seq in enumerate(seqs):
            for t in seq:
                bags[r, self.index[t]] += 1.0
        return bags

    def forward(self, seqs):
        bags = self._bags(seqs)
        return bags @ self.params.reshape(self.dim, -1).T, bags

    def backward(self, bags, grad_out):
        return (grad_out.T @ bags).ravel()


def central_difference(f, params, coords, eps=1e-6):
    out = np.empty(len(coords))
    for k, i in enumerate(coords):
        old = params[i]
        params[i] = old + eps
        up = f()
        params[i] = old - eps
        down = f()
        params[i] = old
        out[k] = (up - down) / (2 * eps)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def rel_error(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return float(np.linalg.norm(a - b) / scale) if scale > 0 else 0.0
