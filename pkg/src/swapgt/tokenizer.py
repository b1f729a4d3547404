"""Token tables, token swapping and token-sequence assembly.

A :class:`TokenTable` row ``i`` lists the ``k`` nodes most similar to node
``i``. Read as adjacency rows, the table is the k-NN digraph with arcs
``i -> N_i``. Token swapping walks that digraph: each swap round replaces a
token ``v`` (with probability ``p``) by a uniform draw from ``N_v``, so after
``t`` rounds every token is within ``t + 1`` hops of the target.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .propagation import PropagationConfig, ppr_propagate

VIEWS = ("attribute", "topology")
_VIEW_CODE = {"attribute": 0, "topology": 1}


@dataclass(frozen=True, eq=False)
class TokenTable:
    view: str
    ids: np.ndarray  # (n, k) int64

    @property
    def n(self) -> int:
        return self.ids.shape[0]

    @property
    def k(self) -> int:
        return self.ids.shape[1]

    def validate(self):
        n, k = self.ids.shape
        if self.ids.size and (self.ids.min() < 0 or self.ids.max() >= n):
            raise ValueError("token id out of range")
        if np.any(self.ids == np.arange(n)[:, None]):
            raise ValueError("row contains its own target")
        srt = np.sort(self.ids, axis=1)
        if k > 1 and np.any(srt[:, 1:] == srt[:, :-1]):
            raise ValueError("duplicate id within a row")

    def prefix(self, k: int) -> "TokenTable":
        return TokenTable(self.view, np.ascontiguousarray(self.ids[:, :k]))


@dataclass(frozen=True)
class SwapConfig:
    p: float = 0.5
    t: int = 2
    s: int = 4

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must be in [0, 1]")
        if self.t < 1 or self.s < 1:
            raise ValueError("t and s must be >= 1")


@dataclass(frozen=True, eq=False)
class SequenceBatch:
    """Per-node token-id grids for one view.

    ``ids[i, j]`` is sequence ``j`` of node ``i``: ``ids[i, j, 0] == i`` and
    row 0 is the unswapped table row. Token features always come from the
    raw attribute matrix ``X``.
    """

    view: str
    ids: np.ndarray  # (n, 1 + s, 1 + k) int64
    X: np.ndarray
    seed: int

    @property
    def n(self) -> int:
        return self.ids.shape[0]

    @property
    def s(self) -> int:
        return self.ids.shape[1] - 1

    @property
    def seq_len(self) -> int:
        return self.ids.shape[2]

    @property
    def features(self) -> np.ndarray:
        """Materialized ``(n, 1 + s, 1 + k, d)`` token-feature tensor."""
        return self.X[self.ids]

    def node_features(self, i) -> np.ndarray:
        return self.X[self.ids[i]]

    def with_ids(self, ids) -> "SequenceBatch":
        return SequenceBatch(self.view, ids, self.X, self.seed)


# ---------------------------------------------------------------------------
# similarity tables

def _unit_rows(F):
    F = np.asarray(F, dtype=np.float64)
    norms = np.linalg.norm(F, axis=1)
    out = np.zeros_like(F)
    nz = norms > 0
    out[nz] = F[nz] / norms[nz, None]
    return out


# scores closer than this are re-ranked exactly; float error is ~1e-15
TIE_TOL = 1e-9


class _ExactScorer:
    """Exact cosine ranking keys from integer-scaled sparse rows.

    For a fixed query ``i``, ``cos(i, j)`` orders like
    ``sign(dot) * dot**2 / |x_j|**2``; every float is ``m * 2**e`` so a row
    scaled by a common power of two is an exact integer vector.
    """

    def __init__(self, F):
        self.F = F
        self._rows = {}

    def _row(self, j):
        if j not in self._rows:
            row = self.F[j]
            cols = np.flatnonzero(row)
            ratios = [float(row[c]).as_integer_ratio() for c in cols]
            shift = max((den.bit_length() for _, den in ratios), default=1) - 1
            ints = {int(c): num << (shift - den.bit_length() + 1) for c, (num, den) in zip(cols, ratios)}
            self._rows[j] = (ints, sum(v * v for v in ints.values()))
        return self._rows[j]

    def key(self, i, j) -> Fraction:
        (a, _), (b, sq) = self._row(i), self._row(j)
        if not sq:
            return Fraction(0)
        small, large = (a, b) if len(a) <= len(b) else (b, a)
        dot = sum(v * large[c] for c, v in small.items() if c in large)
        return Fraction(dot * abs(dot), sq)


def _refine_row(i, order, scores, k, scorer):
    """Re-sort near-tied runs that reach into the top ``k`` by exact score, then id."""
    srt = scores[order]
    gaps = srt[k - 1:-1] - srt[k:] > TIE_TOL
    m = k + int(np.argmax(gaps)) if gaps.any() else order.size
    out, start = [], 0
    for pos in range(1, m + 1):
        if pos == m or srt[pos - 1] - srt[pos] > TIE_TOL:
            run = [int(j) for j in order[start:pos]]
            if len(run) > 1:
                run.sort(key=lambda j: (-scorer.key(i, j), j))
            out.extend(run)
            start = pos
            if len(out) >= k:
                break
    return out[:k]


def cosine_topk(F, k: int, view: str = "attribute", block: int = 1024) -> TokenTable:
    """Top-``k`` cosine neighbours per row, excluding the row itself.

    Ties are broken by ascending node id; cosine against a zero vector is 0.
    Float scores do the bulk ranking and near-ties are settled exactly, so
    mathematically equal cosines always fall back to the id rule.
    """
    F = np.asarray(F, dtype=np.float64)
    n = F.shape[0]
    if k >= n:
        raise ValueError(f"k={k} must be < n={n}")
    if not np.all(np.isfinite(F)):
        raise ValueError("features must be finite")
    U = _unit_rows(F)
    # GEMM may round identical columns differently; scoring against unique
    # rows gives duplicate nodes bitwise-equal scores
    uniq, inverse = np.unique(U, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    scorer = _ExactScorer(F)
    ids = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, block):
        stop = min(start + block, n)
        S = (U[start:stop] @ uniq.T)[:, inverse]
        S[np.arange(stop - start), np.arange(start, stop)] = -np.inf
        order = np.argsort(-S, axis=1, kind="stable")
        head = np.take_along_axis(S, order[:, :k + 1], axis=1)
        near = np.any(head[:, :-1] - head[:, 1:] <= TIE_TOL, axis=1)
        ids[start:stop] = order[:, :k]
        for r in np.flatnonzero(near):
            ids[start + r] = _refine_row(start + r, order[r], S[r], k, scorer)
    return TokenTable(view, ids)


def build_token_tables(g, adj, prop_cfg: PropagationConfig, k: int):
    """Attribute-view and topology-view tables for graph ``g``."""
    attr = cosine_topk(g.X, k, view="attribute")
    topo = cosine_topk(ppr_propagate(adj, g.X, prop_cfg), k, view="topology")
    return attr, topo


# ---------------------------------------------------------------------------
# token swapping

def swap_round(table: TokenTable, tokens, p: float, rng):
    """One swapping pass over ``tokens``.

    Returns the new token array and the boolean mask of positions where the
    swap branch was taken. Randomness consumed per call is fixed (one
    uniform and one index per position) regardless of ``p``.
    """
    tokens = np.asarray(tokens)
    u = rng.random(tokens.size)
    pick = rng.integers(0, table.k, size=tokens.size)
    taken = u < p
    out = np.where(taken, table.ids[tokens, pick], tokens)
    return out, taken


def swap_tokens(table: TokenTable, i: int, p: float, t: int, rng) -> np.ndarray:
    """Token swapping for target ``i``; candidates always come from the original table."""
    tokens = table.ids[i].copy()
    for _ in range(t):
        tokens, _ = swap_round(table, tokens, p, rng)
    return tokens


def node_rng(seed: int, view: str, i: int):
    """Independent generator for one (seed, view, node) triple."""
    return np.random.default_rng([seed, _VIEW_CODE[view], i])


def build_sequences(g, table: TokenTable, cfg: SwapConfig, seed: int) -> SequenceBatch:
    """Row 0 is ``[i, N_i]``; rows ``1..s`` are ``[i, swap_tokens(...)]``."""
    return _swapped_batch(g.X, table, cfg, seed)


def _swapped_batch(X, table, cfg, seed):
    n, k = table.ids.shape
    ids = np.empty((n, 1 + cfg.s, 1 + k), dtype=np.int64)
    ids[:, :, 0] = np.arange(n)[:, None]
    ids[:, 0, 1:] = table.ids
    for i in range(n):
        rng = node_rng(seed, table.view, i)
        for j in range(1, cfg.s + 1):
            ids[i, j, 1:] = swap_tokens(table, i, cfg.p, cfg.t, rng)
    return SequenceBatch(table.view, ids, X, seed)


def build_single_sequences(g, table: TokenTable, seed: int = 0) -> SequenceBatch:
    """One unswapped sequence per node, ``[i, N_i]`` (the large-k variant)."""
    n, k = table.ids.shape
    ids = np.empty((n, 1, 1 + k), dtype=np.int64)
    ids[:, 0, 0] = np.arange(n)
    ids[:, 0, 1:] = table.ids
    return SequenceBatch(table.view, ids, g.X, seed)


def build_subsampled_sequences(g, wide: TokenTable, k: int, s: int, seed: int) -> SequenceBatch:
    """Row 0 is the top-``k`` prefix of ``wide``; rows ``1..s`` draw ``k`` of its ids without replacement."""
    n, pool = wide.ids.shape
    if k > pool:
        raise ValueError("k exceeds the pool width")
    ids = np.empty((n, 1 + s, 1 + k), dtype=np.int64)
    ids[:, :, 0] = np.arange(n)[:, None]
    ids[:, 0, 1:] = wide.ids[:, :k]
    for i in range(n):
        rng = node_rng(seed, wide.view, i)
        for j in range(1, s + 1):
            ids[i, j, 1:] = wide.ids[i, rng.choice(pool, size=k, replace=False)]
    return SequenceBatch(wide.view, ids, g.X, seed)


def resample_swapped_rows(batch: SequenceBatch, table: TokenTable, cfg: SwapConfig, seed: int) -> SequenceBatch:
    """Redraw rows ``1..s`` under a new seed; row 0 is unchanged by construction."""
    return _swapped_batch(batch.X, table, cfg, seed)


# ---------------------------------------------------------------------------
# hop-bound oracle

def reachable_within(table: TokenTable, i: int, hops: int) -> set:
    """Nodes reachable from ``i`` in at most ``hops`` arcs of the k-NN digraph."""
    dist = {i: 0}
    queue = deque([i])
    while queue:
        u = queue.popleft()
        if dist[u] == hops:
            continue
        for v in table.ids[u]:
            v = int(v)
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return set(dist)


def hop_bound_oracle(table: TokenTable, i: int, tokens, t: int) -> bool:
    """True iff every token lies within ``t + 1`` directed hops of ``i``."""
    reach = reachable_within(table, i, t + 1)
    return all(int(v) in reach for v in tokens)
