"""Slow reference implementations used to cross-check the fast paths.

These deliberately share no code with the modules they check: plain Python
loops, exact integer arithmetic and dense matrices only.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np


def _integer_row(row):
    """Scale a float row to Python ints by a common power of two (exact)."""
    ratios = [float(v).as_integer_ratio() for v in row]
    shift = max(den for _, den in ratios).bit_length() - 1
    return [num << (shift - (den.bit_length() - 1)) for num, den in ratios]


def brute_force_topk(F, k):
    """All pairs scored in exact integer arithmetic, sorted by (-cosine, id).

    For a fixed query ``i`` the cosine with ``j`` orders like
    ``sign(dot) * dot**2 / |x_j|**2``, so no square roots are needed and
    mathematically tied cosines compare equal.
    """
    rows = [_integer_row(r) for r in np.asarray(F, dtype=np.float64)]
    sq = [sum(v * v for v in r) for r in rows]
    n = len(rows)
    out = []
    for i in range(n):
        scored = []
        for j in range(n):
            if j == i:
                continue
            dot = sum(a * b for a, b in zip(rows[i], rows[j]))
            score = Fraction(dot * abs(dot), sq[j]) if sq[j] else Fraction(0)
            scored.append((-score, j))
        scored.sort()
        out.append([j for _, j in scored[:k]])
    return np.asarray(out, dtype=np.int64).reshape(n, k)


def dense_normalized_adjacency(n, edges):
    A = np.zeros((n, n))
    for u, v in edges:
        if u != v:
            A[u, v] = A[v, u] = 1.0
    deg = A.sum(axis=1)
    Dm = np.diag(1.0 / np.sqrt(deg + 1.0))
    return Dm @ (A + np.eye(n)) @ Dm


def dense_ppr(adj_dense, X, K, beta):
    H = np.array(X, dtype=np.float64)
    X = H.copy()
    for _ in range(K):
        H = (1.0 - beta) * adj_dense @ H + beta * X
    return H


def bfs_hops(rows, i, hops):
    """Set of nodes within ``hops`` arcs of ``i``; ``rows[u]`` lists u's out-neighbours."""
    frontier = {i}
    seen = {i}
    for _ in range(hops):
        nxt = set()
        for u in frontier:
            for v in rows[u]:
                if int(v) not in seen:
                    nxt.add(int(v))
        seen |= nxt
        frontier = nxt
    return seen
