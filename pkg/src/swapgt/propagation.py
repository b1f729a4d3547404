"""Personalized-PageRank feature propagation for the topology view."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PropagationConfig:
    K: int = 10
    beta: float = 0.15

    def __post_init__(self):
        if self.K < 0:
            raise ValueError("K must be >= 0")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must be in [0, 1]")


def ppr_propagate(adj, X, cfg: PropagationConfig = PropagationConfig()) -> np.ndarray:
    """Run ``H <- (1 - beta) * adj @ H + beta * X`` for ``K`` steps from ``H = X``.

    ``adj`` may be a scipy sparse matrix or a dense array. Arithmetic is
    float64 and the result is float64.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or adj.shape != (X.shape[0], X.shape[0]):
        raise ValueError(f"shape mismatch: adj {adj.shape} vs X {X.shape}")
    H = X.copy()
    if cfg.beta == 1.0:
        return H
    teleport = cfg.beta * X
    for _ in range(cfg.K):
        H = (1.0 - cfg.beta) * (adj @ H) + teleport
    return np.asarray(H)
