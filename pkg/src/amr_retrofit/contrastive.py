"""Contrastive training with in-batch negatives over a siamese encoder.

For a batch of M triplets (anchor, positive, negative) the loss of anchor
i is the cross-entropy of picking its own positive among all 2M candidate
sentences of the batch (every positive and every negative), with cosine
similarities scaled by ``1 / temperature``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .encoder import Encoder
from .errors import DataError, NumericError, ZeroVector

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Triplet:
    anchor: tuple[str, ...]
    positive: tuple[str, ...]
    negative: tuple[str, ...]
    lang: str = "en"

    def __post_init__(self):
        for name in ("anchor", "positive", "negative"):
            value = getattr(self, name)
            if isinstance(value, str):
                value = value.split()
            value = tuple(value)
            if not value:
                raise DataError(f"triplet {name} is empty")
            object.__setattr__(self, name, value)


@dataclass(frozen=True)
class TrainConfig:
    temperature: float = 0.05
    batch_size: int = 32
    learning_rate: float = 5e-5
    epochs: int = 9
    seed: int = 0

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ZeroVector("cosine similarity of a zero vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def _normalize(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ZeroVector("encoder produced a zero embedding")
    return x / norms, norms


def _normalize_backward(unit: np.ndarray, norms: np.ndarray, grad_unit: np.ndarray) -> np.ndarray:
    return (grad_unit - unit * np.sum(unit * grad_unit, axis=1, keepdims=True)) / norms


def _logsumexp(z: np.ndarray) -> np.ndarray:
    zmax = z.max(axis=1, keepdims=True)
    return (zmax + np.log(np.exp(z - zmax).sum(axis=1, keepdims=True)))[:, 0]


def embedding_loss(anchors: np.ndarray, positives: np.ndarray, negatives: np.ndarray,
                   temperature: float, with_grad: bool = False):
    """Loss on precomputed embeddings (rows are examples).

    Returns ``(mean, per_example)``; with ``with_grad`` also the gradients
    of the mean w.r.t. the three embedding matrices.
    """
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    a_hat, a_norm = _normalize(np.asarray(anchors, dtype=np.float64))
    p_hat, p_norm = _normalize(np.asarray(positives, dtype=np.float64))
    n_hat, n_norm = _normalize(np.asarray(negatives, dtype=np.float64))
    m = a_hat.shape[0]
    # candidates: negatives first, then positives; anchor i's target is column m + i
    cand = np.vstack([n_hat, p_hat])
    logits = (a_hat @ cand.T) / temperature
    target = m + np.arange(m)
    lse = _logsumexp(logits)
    # softplus of the competitors' log-mass relative to the target keeps
    # tiny losses strictly positive instead of rounding to zero
    rel = logits - logits[np.arange(m), target][:, None]
    rel[np.arange(m), target] = -np.inf
    per_example = np.logaddexp(0.0, _logsumexp(rel))
    mean = float(per_example.mean())
    if not np.isfinite(mean):
        raise NumericError("contrastive loss is not finite")
    if not with_grad:
        return mean, per_example

    g = np.exp(logits - lse[:, None])
    g[np.arange(m), target] -= 1.0
    g /= temperature * m
    d_a_hat = g @ cand
    d_cand = g.T @ a_hat
    grads = (
        _normalize_backward(a_hat, a_norm, d_a_hat),
        _normalize_backward(p_hat, p_norm, d_cand[m:]),
        _normalize_backward(n_hat, n_norm, d_cand[:m]),
    )
    return mean, per_example, grads


def _encode_batch(batch: Sequence[Triplet], encoder: Encoder):
    seqs = [t.anchor for t in batch] + [t.positive for t in batch] + [t.negative for t in batch]
    out, cache = encoder.forward(seqs)
    m = len(batch)
    return out[:m], out[m:2 * m], out[2 * m:], cache


def batch_loss(batch: Sequence[Triplet], encoder: Encoder, temperature: float):
    """Mean and per-example contrastive loss of one batch."""
    if not batch:
        raise DataError("empty batch")
    a, p, n, _ = _encode_batch(batch, encoder)
    return embedding_loss(a, p, n, temperature)


def loss_gradient(batch: Sequence[Triplet], encoder: Encoder, temperature: float):
    """Return ``(mean loss, gradient w.r.t. encoder.params)``."""
    if not batch:
        raise DataError("empty batch")
    a, p, n, cache = _encode_batch(batch, encoder)
    mean, _, (ga, gp, gn) = embedding_loss(a, p, n, temperature, with_grad=True)
    return mean, encoder.backward(cache, np.vstack([ga, gp, gn]))


def retrieval_accuracy(triplets: Sequence[Triplet], encoder: Encoder) -> float:
    """Fraction of anchors whose positive beats every other candidate of the batch."""
    a, p, n, _ = _encode_batch(triplets, encoder)
    a_hat, _ = _normalize(a)
    cand = np.vstack([_normalize(n)[0], _normalize(p)[0]])
    sims = a_hat @ cand.T
    m = len(triplets)
    own = sims[np.arange(m), m + np.arange(m)].copy()
    sims[np.arange(m), m + np.arange(m)] = -np.inf
    return float(np.mean(own > sims.max(axis=1)))


def sgd_step(encoder: Encoder, grad: np.ndarray, lr: float) -> None:
    encoder.params = encoder.params - lr * grad


@dataclass
class TrainResult:
    encoder: Encoder
    losses: list[float] = field(default_factory=list)
    scores: list[float] = field(default_factory=list)
    best_epoch: int | None = None


def iter_batches(n: int, batch_size: int, rng: np.random.Generator) -> Iterable[np.ndarray]:
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def train(dataset: Sequence[Triplet], config: TrainConfig, encoder: Encoder,
          select: Callable[[Encoder], float] | None = None) -> TrainResult:
    """Plain SGD over shuffled mini-batches; the last short batch is kept.

    ``losses[e]`` is the mean batch loss seen during epoch ``e``. When
    ``select`` is given it scores the encoder after each epoch and the
    best-scoring parameters are restored at the end.
    """
    if not dataset:
        raise DataError("training set is empty")
    rng = np.random.default_rng(config.seed)
    result = TrainResult(encoder)
    best_params, best_score = None, -np.inf
    for epoch in range(config.epochs):
        batch_losses = []
        for idx in iter_batches(len(dataset), config.batch_size, rng):
            loss, grad = loss_gradient([dataset[i] for i in idx], encoder, config.temperature)
            sgd_step(encoder, grad, config.learning_rate)
            batch_losses.append(loss)
        result.losses.append(float(np.mean(batch_losses)))
        if select is not None:
            score = float(select(encoder))
            result.scores.append(score)
            if score > best_score:
                best_score, best_params, result.best_epoch = score, encoder.params.copy(), epoch
        log.debug("epoch %d loss %.6f", epoch, result.losses[-1])
    if best_params is not None:
        encoder.params = best_params
    return result


def read_triplets(path: str | Path) -> list[Triplet]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                out.append(Triplet(obj["anchor"], obj["positive"], obj["negative"], obj.get("lang", "en")))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: bad triplet record ({exc})") from exc
    return out


def write_triplets(triplets: Iterable[Triplet], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in triplets:
            fh.write(json.dumps({"anchor": list(t.anchor), "positive": list(t.positive),
                                 "negative": list(t.negative), "lang": t.lang},
                                ensure_ascii=False) + "\n")
