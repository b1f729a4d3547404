"""Attributed graphs: storage, file I/O, normalization, splits and SBM data."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .config import ConfigError, read_pairs

log = logging.getLogger(__name__)


class GraphFormatError(ValueError):
    """Malformed or inconsistent graph input files."""


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected attributed graph.

    ``indptr``/``indices`` hold the symmetric adjacency in CSR form with
    sorted column indices and no self-loops. ``X`` is float32, ``y`` int64.
    """

    indptr: np.ndarray
    indices: np.ndarray
    X: np.ndarray
    y: np.ndarray
    c: int

    def __post_init__(self):
        n = self.n
        if self.indptr.shape != (n + 1,):
            raise GraphFormatError("indptr length must be n + 1")
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= n):
            raise GraphFormatError("edge endpoint out of range")
        if not np.all(np.isfinite(self.X)):
            raise GraphFormatError("non-finite feature entry")
        if self.y.shape != (n,):
            raise GraphFormatError("label vector length must equal n")
        if n and (self.y.min() < 0 or self.y.max() >= self.c):
            raise GraphFormatError("label outside [0, c)")
        for arr in (self.indptr, self.indices, self.X, self.y):
            arr.setflags(write=False)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def num_edges(self) -> int:
        return self.indices.size // 2

    def adjacency(self) -> sp.csr_matrix:
        data = np.ones(self.indices.size, dtype=np.float64)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    def edge_list(self) -> np.ndarray:
        """Each undirected edge once, as rows ``(u, v)`` with ``u < v``."""
        rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        keep = rows < self.indices
        return np.stack([rows[keep], self.indices[keep]], axis=1)

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @classmethod
    def from_edges(cls, n, edges, X, y, c=None):
        """Build from an ``(m, 2)`` edge array; self-loops and duplicates dropped."""
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise GraphFormatError("edge endpoint out of range")
        edges = edges[edges[:, 0] != edges[:, 1]]
        lo = np.minimum(edges[:, 0], edges[:, 1])
        hi = np.maximum(edges[:, 0], edges[:, 1])
        und = np.unique(np.stack([lo, hi], axis=1), axis=0) if edges.size else edges
        rows = np.concatenate([und[:, 0], und[:, 1]])
        cols = np.concatenate([und[:, 1], und[:, 0]])
        A = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
        A.sort_indices()
        y = np.asarray(y, dtype=np.int64)
        if c is None:
            c = int(y.max()) + 1 if y.size else 0
        return cls(
            indptr=A.indptr.astype(np.int64),
            indices=A.indices.astype(np.int64),
            X=np.asarray(X, dtype=np.float32),
            y=y,
            c=int(c),
        )

    def same_as(self, other: "Graph") -> bool:
        return (
            self.c == other.c
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.y, other.y)
        )


# ---------------------------------------------------------------------------
# file formats

def _read_lines(path):
    with open(path) as fh:
        return fh.read().splitlines()


def load_graph(feature_path, edge_path, label_path, num_classes=None) -> Graph:
    """Read the CSV feature / edge-list / label-per-line file triple.

    Duplicate and self-loop edge lines are dropped; the number dropped is
    logged as a warning. ``num_classes``, if given, is the declared class
    count and every label must be below it.
    """
    feats = []
    for lineno, line in enumerate(_read_lines(feature_path), start=1):
        if not line.strip():
            continue
        try:
            feats.append([float(tok) for tok in line.split(",")])
        except ValueError:
            raise GraphFormatError(f"{feature_path}:{lineno}: malformed feature line") from None
    widths = {len(row) for row in feats}
    if len(widths) > 1:
        raise GraphFormatError(f"{feature_path}: rows have differing widths {sorted(widths)}")
    n = len(feats)
    X = np.asarray(feats, dtype=np.float32).reshape(n, -1)

    labels = []
    for lineno, line in enumerate(_read_lines(label_path), start=1):
        if not line.strip():
            continue
        try:
            labels.append(int(line.strip()))
        except ValueError:
            raise GraphFormatError(f"{label_path}:{lineno}: malformed label line") from None
        if labels[-1] < 0 or (num_classes is not None and labels[-1] >= num_classes):
            raise GraphFormatError(f"{label_path}:{lineno}: label {labels[-1]} outside [0, c)")
    if len(labels) != n:
        raise GraphFormatError(f"{label_path}: {len(labels)} labels for {n} nodes")

    pairs = []
    for lineno, line in enumerate(_read_lines(edge_path), start=1):
        toks = line.split()
        if not toks:
            continue
        if len(toks) != 2:
            raise GraphFormatError(f"{edge_path}:{lineno}: expected 'u v'")
        try:
            u, v = int(toks[0]), int(toks[1])
        except ValueError:
            raise GraphFormatError(f"{edge_path}:{lineno}: malformed edge line") from None
        if not (0 <= u < n and 0 <= v < n):
            raise GraphFormatError(f"{edge_path}:{lineno}: node id out of range [0, {n})")
        pairs.append((u, v))

    edges = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    g = Graph.from_edges(n, edges, X, labels, c=num_classes)
    dropped = len(pairs) - g.num_edges
    if dropped:
        log.warning("dropped %d self-loop or duplicate edge lines from %s", dropped, edge_path)
    return g


def write_graph(g: Graph, feature_path, edge_path, label_path):
    """Write ``g`` in the format read by :func:`load_graph`."""
    # repr of a float32-as-float64 value round-trips to the same float32
    with open(feature_path, "w") as fh:
        for row in g.X.astype(np.float64):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    with open(edge_path, "w") as fh:
        for u, v in g.edge_list():
            fh.write(f"{u} {v}\n")
    with open(label_path, "w") as fh:
        fh.write("".join(f"{int(v)}\n" for v in g.y))


# ---------------------------------------------------------------------------
# structure

def normalized_adjacency(g: Graph) -> sp.csr_matrix:
    """``(D+I)^-1/2 (A+I) (D+I)^-1/2`` as a float64 CSR matrix."""
    A = g.adjacency() + sp.identity(g.n, format="csr")
    inv_sqrt = 1.0 / np.sqrt(g.degrees() + 1.0)
    A = A.tocoo()
    # entrywise product keeps (i,j) and (j,i) bitwise equal
    vals = inv_sqrt[A.row] * inv_sqrt[A.col] * A.data
    out = sp.csr_matrix((vals, (A.row, A.col)), shape=(g.n, g.n))
    out.sort_indices()
    return out


def edge_homophily(g: Graph) -> float:
    """Fraction of edges whose endpoints share a label (1.0 for no edges)."""
    e = g.edge_list()
    if len(e) == 0:
        return 1.0
    return float(np.mean(g.y[e[:, 0]] == g.y[e[:, 1]]))


def dataset_statistics(g: Graph, name="") -> dict:
    """One row of the dataset statistics table."""
    return {
        "dataset": name,
        "nodes": g.n,
        "edges": g.num_edges,
        "features": g.d,
        "labels": g.c,
        "homophily": round(edge_homophily(g), 2),
    }


# ---------------------------------------------------------------------------
# splits

SPLIT_RATIOS = {"dense": (0.5, 0.25), "sparse": (0.025, 0.025)}
MIN_CLASS_SIZE = {"dense": 3, "sparse": 2}

TRAIN, VAL, TEST = 0, 1, 2


@dataclass(frozen=True, eq=False)
class SplitAssignment:
    """Per-node role (``TRAIN``/``VAL``/``TEST``) plus provenance."""

    roles: np.ndarray
    kind: str
    seed: int

    @property
    def train(self):
        return np.flatnonzero(self.roles == TRAIN)

    @property
    def val(self):
        return np.flatnonzero(self.roles == VAL)

    @property
    def test(self):
        return np.flatnonzero(self.roles == TEST)

    def mask(self, role):
        return self.roles == role


def split_counts(class_size, kind):
    """(train, val) counts for one class: floor of the ratio, at least 1 each."""
    r_train, r_val = SPLIT_RATIOS[kind]
    n_train = max(1, int(np.floor(class_size * r_train)))
    n_val = max(1, int(np.floor(class_size * r_val)))
    return n_train, n_val


def make_split(g: Graph, kind: str, seed: int) -> SplitAssignment:
    """Stratified random split; dense is 50/25/25, sparse is 2.5/2.5/95 per class."""
    if kind not in SPLIT_RATIOS:
        raise ValueError(f"unknown split kind {kind!r}")
    rng = np.random.default_rng(seed)
    roles = np.full(g.n, TEST, dtype=np.int8)
    for cls in range(g.c):
        members = np.flatnonzero(g.y == cls)
        if members.size == 0:
            continue
        if members.size < MIN_CLASS_SIZE[kind]:
            raise ValueError(
                f"class {cls} has {members.size} nodes; {kind} split needs "
                f">= {MIN_CLASS_SIZE[kind]}"
            )
        n_train, n_val = split_counts(members.size, kind)
        perm = rng.permutation(members)
        roles[perm[:n_train]] = TRAIN
        roles[perm[n_train:n_train + n_val]] = VAL
    roles.setflags(write=False)
    return SplitAssignment(roles=roles, kind=kind, seed=seed)


# ---------------------------------------------------------------------------
# synthetic data

@dataclass(frozen=True)
class SbmSpec:
    """Stochastic block model with Gaussian class-conditional features.

    Class means sit on scaled coordinate axes so that any two means are
    ``separation`` apart; features are mean plus N(0, noise^2) per entry.
    """

    block_sizes: tuple
    p_in: float
    p_out: float
    feature_dim: int
    separation: float
    noise: float = 1.0

    def __post_init__(self):
        if not self.block_sizes or any(b <= 0 for b in self.block_sizes):
            raise ValueError("block sizes must be positive")
        if not (0.0 <= self.p_in <= 1.0 and 0.0 <= self.p_out <= 1.0):
            raise ValueError("edge probabilities must lie in [0, 1]")
        if self.feature_dim < len(self.block_sizes):
            raise ValueError("feature_dim must be >= number of blocks")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")

    @classmethod
    def from_pairs(cls, pairs):
        """Build from ``sbm.*`` style keys (prefix already stripped)."""
        known = {"blocks", "block_size", "sizes", "p_in", "p_out", "feature_dim", "separation", "noise", "seed"}
        unknown = set(pairs) - known
        if unknown:
            raise ConfigError(f"unknown sbm keys: {sorted(unknown)}")
        try:
            if "sizes" in pairs:
                sizes = tuple(int(s) for s in pairs["sizes"].split(","))
            else:
                sizes = (int(pairs.get("block_size", 50)),) * int(pairs.get("blocks", 4))
            return cls(
                block_sizes=sizes,
                p_in=float(pairs.get("p_in", 0.1)),
                p_out=float(pairs.get("p_out", 0.01)),
                feature_dim=int(pairs.get("feature_dim", 32)),
                separation=float(pairs.get("separation", 2.0)),
                noise=float(pairs.get("noise", 1.0)),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path):
        pairs = read_pairs(path)
        return cls.from_pairs({k.removeprefix("sbm."): v for k, v in pairs.items()})


def generate_sbm(spec: SbmSpec, seed: int) -> Graph:
    rng = np.random.default_rng(seed)
    sizes = np.asarray(spec.block_sizes)
    n = int(sizes.sum())
    y = np.repeat(np.arange(len(sizes)), sizes)

    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(y[iu] == y[ju], spec.p_in, spec.p_out)
    keep = rng.random(iu.size) < prob
    edges = np.stack([iu[keep], ju[keep]], axis=1)

    means = np.zeros((len(sizes), spec.feature_dim))
    means[np.arange(len(sizes)), np.arange(len(sizes))] = spec.separation / np.sqrt(2.0)
    X = means[y] + spec.noise * rng.standard_normal((n, spec.feature_dim))
    return Graph.from_edges(n, edges, X, y, c=len(sizes))
