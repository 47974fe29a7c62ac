"""Evaluation harness: STS by Spearman correlation and zero-shot transfer.

Transfer follows the frozen-feature protocol: one logistic-regression
classifier per task, trained on English only, with its regularization
picked on the pooled development sets of every language, then scored on
each language's test split.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, DimensionMismatch, NumericError, ZeroVector

DEFAULT_GRID = tuple(2.0**k for k in range(-5, 6))


class ZeroVariance(NumericError):
    pass


class LengthMismatch(DataError):
    pass


class DegenerateLabels(DataError):
    pass


class MissingSplit(DataError):
    pass


# --------------------------------------------------------------------------
# Rank correlation


def rankdata(values) -> np.ndarray:
    """1-based ranks with ties sharing the average of their positions."""
    values = np.asarray(values, dtype=np.float64)
    _, inverse, counts = np.unique(values, return_inverse=True, return_counts=True)
    start = np.cumsum(counts) - counts
    return (start + (counts + 1) / 2.0)[inverse]


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xc, yc = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt(xc @ xc), np.sqrt(yc @ yc)
    if sx == 0 or sy == 0:
        raise ZeroVariance("correlation undefined for a constant list")
    return float(np.clip(xc @ yc / (sx * sy), -1.0, 1.0))


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    if len(x) != len(y):
        raise LengthMismatch(f"lists differ in length: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise LengthMismatch("need at least two observations")
    return pearson(rankdata(x), rankdata(y))


# --------------------------------------------------------------------------
# STS


@dataclass(frozen=True)
class StsPair:
    a: np.ndarray
    b: np.ndarray
    gold: float
    group: str = "ALL"

    def __post_init__(self):
        if not 0.0 <= self.gold <= 5.0:
            raise DataError(f"gold score {self.gold} outside [0, 5]")


def cosine_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    if np.any(na == 0) or np.any(nb == 0):
        raise ZeroVector("zero embedding in STS pair")
    return np.einsum("ij,ij->i", a, b) / (na * nb)


@dataclass
class StsResult:
    groups: dict[str, float]

    @property
    def average(self) -> float:
        return float(np.mean(list(self.groups.values())))

    def as_dict(self) -> dict:
        return {"groups": dict(self.groups), "avg": self.average}


def sts_evaluate(pairs: Iterable[StsPair]) -> StsResult:
    by_group: dict[str, list[StsPair]] = defaultdict(list)
    for p in pairs:
        by_group[p.group].append(p)
    if not by_group:
        raise DataError("no STS pairs")
    scores = {}
    for group, items in by_group.items():
        predicted = cosine_rows(np.stack([p.a for p in items]), np.stack([p.b for p in items]))
        scores[group] = spearman(predicted, [p.gold for p in items])
    return StsResult(scores)


def read_sts_tsv(path: str | Path) -> list[tuple[str, str, float, str]]:
    """Rows of ``id1<TAB>id2<TAB>gold[<TAB>group]``."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) not in (3, 4):
            raise DataError(f"{path}:{lineno}: expected 3 or 4 tab-separated fields")
        try:
            gold = float(parts[2])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: bad gold score {parts[2]!r}") from exc
        rows.append((parts[0], parts[1], gold, parts[3] if len(parts) == 4 else "ALL"))
    return rows


# --------------------------------------------------------------------------
# Logistic regression


@dataclass
class LogRegModel:
    weights: np.ndarray  # (classes, features)
    bias: np.ndarray
    reg: float
    n_iter: int = 0
    losses: list[float] = field(default_factory=list, repr=False)

    def scores(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.weights.T + self.bias

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.scores(X), axis=1)

    def accuracy(self, X, y) -> float:
        return float(np.mean(self.predict(X) == np.asarray(y)))


def _objective(W, b, X, Y, reg):
    z = X @ W.T + b
    z -= z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = X.shape[0]
    loss = -np.sum(Y * logp) / n + reg / (2 * n) * np.sum(W * W)
    resid = (np.exp(logp) - Y) / n
    return loss, resid.T @ X + reg / n * W, resid.sum(axis=0)


def fit_logreg(X, y, reg: float = 1.0, seed: int = 0, tol: float = 1e-5,
               max_iter: int = 1000) -> LogRegModel:
    """Multinomial logistic regression by full-batch gradient descent.

    Minimizes mean cross-entropy plus ``reg / (2n) * ||W||^2`` (bias not
    penalized). A step that raises the objective is rejected and the step
    size halved, so the recorded losses never increase.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DimensionMismatch("features and labels are not aligned")
    k = int(y.max()) + 1 if y.size else 0
    if k < 2 or np.unique(y).size < 2:
        raise DegenerateLabels("need at least two classes to fit a classifier")
    n, f = X.shape
    Y = np.eye(k)[y]
    rng = np.random.default_rng(seed)
    W = rng.normal(scale=1e-3, size=(k, f))
    b = np.zeros(k)
    # Lipschitz bound of the gradient: softmax curvature is at most 1/2
    spectral = np.linalg.norm(np.hstack([X, np.ones((n, 1))]), ord=2) if n else 0.0
    step = 1.0 / (0.5 * spectral**2 / n + reg / n + 1e-12)
    loss, gW, gb = _objective(W, b, X, Y, reg)
    losses = [loss]
    for _ in range(max_iter):
        if np.sqrt(np.sum(gW * gW) + np.sum(gb * gb)) < tol:
            break
        while True:
            W_new, b_new = W - step * gW, b - step * gb
            new_loss, new_gW, new_gb = _objective(W_new, b_new, X, Y, reg)
            if new_loss <= loss or step < 1e-12:
                break
            step /= 2.0
        if new_loss > loss:
            break
        W, b, loss, gW, gb = W_new, b_new, new_loss, new_gW, new_gb
        losses.append(loss)
        step *= 1.25
    if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
        raise NumericError("logistic regression diverged")
    return LogRegModel(W, b, reg, len(losses) - 1, losses)


# --------------------------------------------------------------------------
# Zero-shot transfer


def pair_features(a, b) -> np.ndarray:
    """``[a, b, |a - b|, a * b]`` for vectors or row-aligned matrices."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"cannot pair {a.shape} with {b.shape}")
    return np.concatenate([a, b, np.abs(a - b), a * b], axis=-1)


@dataclass
class TransferDataset:
    features: np.ndarray
    labels: np.ndarray
    langs: np.ndarray
    splits: np.ndarray
    name: str = "task"
    seen: frozenset = frozenset()

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.langs = np.asarray(self.langs, dtype=object)
        self.splits = np.asarray(self.splits, dtype=object)
        self.seen = frozenset(self.seen)
        n = len(self.labels)
        if self.features.shape[0] != n or len(self.langs) != n or len(self.splits) != n:
            raise DimensionMismatch("transfer dataset columns are not aligned")
        bad = set(self.splits) - {"train", "dev", "test"}
        if bad:
            raise DataError(f"unknown splits {sorted(bad)}")
        train_langs = set(self.langs[self.splits == "train"])
        if train_langs - {"en"}:
            raise DataError(f"zero-shot training must be English-only, found {sorted(train_langs)}")
        present = np.unique(self.labels)
        if present.size and not np.array_equal(present, np.arange(present.size)):
            raise DataError("labels must be contiguous from 0")

    def select(self, split: str, lang: str | None = None) -> np.ndarray:
        mask = self.splits == split
        if lang is not None:
            mask &= self.langs == lang
        return mask


@dataclass
class TransferReport:
    task: str
    reg: float
    dev_accuracy: float
    grid: dict[float, float]
    dev: dict[str, float]
    test: dict[str, float]
    seen_languages: list[str]
    n_models: int = 1

    @staticmethod
    def _macro(scores: Mapping[str, float], langs) -> float | None:
        vals = [scores[l] for l in langs if l in scores]
        return float(np.mean(vals)) if vals else None

    @property
    def all_average(self) -> float:
        return self._macro(self.test, self.test)

    @property
    def seen_average(self) -> float | None:
        return self._macro(self.test, self.seen_languages)

    def as_dict(self) -> dict:
        return {
            "task": self.task,
            "selected_reg": self.reg,
            "pooled_dev_accuracy": self.dev_accuracy,
            "grid": {repr(k): v for k, v in self.grid.items()},
            "dev": dict(self.dev),
            "test": dict(self.test),
            "seen_languages": list(self.seen_languages),
            "seen_avg": self.seen_average,
            "all_avg": self.all_average,
            "n_models": self.n_models,
        }


def transfer_evaluate(task: TransferDataset, fit: Callable[..., LogRegModel] = fit_logreg,
                      grid: Sequence[float] = DEFAULT_GRID, seed: int = 0) -> TransferReport:
    """Fit on English train, select on pooled dev, report per-language test.

    Candidate fits are one per grid value and never per language; the
    single selected model scores every language.
    """
    train = task.select("train", "en")
    dev = task.select("dev")
    if not train.any():
        raise MissingSplit("no English training data")
    if not dev.any():
        raise MissingSplit("no development data")
    if not task.select("test").any():
        raise MissingSplit("no test data")
    X, y = task.features, task.labels
    best, best_acc, grid_scores = None, -1.0, {}
    for reg in grid:
        model = fit(X[train], y[train], reg=reg, seed=seed)
        acc = model.accuracy(X[dev], y[dev])
        grid_scores[float(reg)] = acc
        if acc > best_acc:
            best, best_acc = model, acc
    per_dev, per_test = {}, {}
    for lang in sorted(set(task.langs)):
        for split, store in (("dev", per_dev), ("test", per_test)):
            mask = task.select(split, lang)
            if mask.any():
                store[lang] = best.accuracy(X[mask], y[mask])
    seen = sorted(l for l in task.seen if l in per_test)
    return TransferReport(task.name, best.reg, best_acc, grid_scores, per_dev, per_test, seen)


def read_transfer_jsonl(path: str | Path, embed: Callable[[list[str]], np.ndarray], name: str | None = None,
                        seen: Iterable[str] = ()) -> TransferDataset:
    """Load ``{"text", "text2"?, "label", "lang", "split"}`` records and embed them.

    Sentence-pair records use :func:`pair_features` over the two embeddings.
    """
    records = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            records.append((obj["text"], obj.get("text2"), int(obj["label"]), obj["lang"], obj["split"]))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}:{lineno}: bad transfer record ({exc})") from exc
    if not records:
        raise DataError(f"{path}: no records")
    paired = [r[1] is not None for r in records]
    if any(paired) and not all(paired):
        raise DataError(f"{path}: mixes single-sentence and sentence-pair records")
    first = embed([r[0] for r in records])
    feats = pair_features(first, embed([r[1] for r in records])) if all(paired) else first
    return TransferDataset(
        feats,
        [r[2] for r in records],
        [r[3] for r in records],
        [r[4] for r in records],
        name or Path(path).stem,
        frozenset(seen),
    )
