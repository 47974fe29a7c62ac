"""Fusing a text embedding with an AMR embedding."""

from __future__ import annotations

import enum

import numpy as np

from .errors import DimensionMismatch, ZeroVector


class Strategy(str, enum.Enum):
    CONCAT = "concat"
    SUM = "sum"
    NORM_CONCAT = "norm-concat"
    NORM_SUM = "norm-sum"


DEFAULT_STRATEGY = Strategy.NORM_CONCAT


def _unit(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise ZeroVector("cannot normalize a zero embedding")
    return x / norms


def integrate(s, h, strategy: Strategy | str = DEFAULT_STRATEGY) -> np.ndarray:
    """Combine text embedding(s) ``s`` and AMR embedding(s) ``h``.

    Works on single vectors or on row-aligned matrices.

    >>> integrate([3.0, 4.0], [0.0, 2.0], "norm-concat")
    array([0.6, 0.8, 0. , 1. ])
    """
    strategy = Strategy(strategy)
    s = np.asarray(s, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if s.shape[:-1] != h.shape[:-1]:
        raise DimensionMismatch(f"cannot pair {s.shape} with {h.shape}")
    if strategy in (Strategy.SUM, Strategy.NORM_SUM) and s.shape[-1] != h.shape[-1]:
        raise DimensionMismatch(f"{strategy.value} needs equal dims, got {s.shape[-1]} and {h.shape[-1]}")
    if strategy is Strategy.CONCAT:
        return np.concatenate([s, h], axis=-1)
    if strategy is Strategy.SUM:
        return s + h
    if strategy is Strategy.NORM_CONCAT:
        return np.concatenate([_unit(s), _unit(h)], axis=-1)
    return _unit(s) + _unit(h)
