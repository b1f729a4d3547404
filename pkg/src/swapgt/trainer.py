"""Training loop, evaluation, multi-run experiments and ablation variants."""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import engine as E
from .config import TrainConfig
from .graph import TEST, TRAIN, VAL, Graph, SplitAssignment, make_split, normalized_adjacency
from .model import forward_full, init_params
from .propagation import PropagationConfig
from .tokenizer import (
    SwapConfig,
    TokenTable,
    build_sequences,
    build_single_sequences,
    build_subsampled_sequences,
    build_token_tables,
    resample_swapped_rows,
)

log = logging.getLogger(__name__)

INIT_SEED_OFFSET = 10_000
EVAL_CHUNK = 512


class TrainingDiverged(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# variants

@dataclass(frozen=True)
class VariantSetup:
    """Tokenizer/loss settings a variant actually runs with."""

    variant: str
    sequences: str  # "swap" | "single" | "subsample"
    table_k: int
    k: int
    s: int
    p: float
    t: int
    lam: float

    @property
    def seq_len(self) -> int:
        return 1 + (self.table_k if self.sequences == "single" else self.k)


def apply_variant(config: TrainConfig) -> VariantSetup:
    """Map a variant tag to its effective tokenizer and loss settings.

    ``no-cal`` drops the alignment loss; ``large-k`` uses one unswapped
    sequence over a 2k table; ``random-subsample`` draws k of the top-2k ids
    per augmented sequence instead of swapping.
    """
    k, s, p, t, lam = config.k, config.aug_s, config.swap_p, config.swap_t, config.lam
    if config.variant == "full":
        return VariantSetup("full", "swap", k, k, s, p, t, lam)
    if config.variant == "no-cal":
        return VariantSetup("no-cal", "swap", k, k, s, p, t, 0.0)
    if config.variant == "large-k":
        return VariantSetup("large-k", "single", 2 * k, k, 0, 0.0, 0, lam)
    if config.variant == "random-subsample":
        return VariantSetup("random-subsample", "subsample", 2 * k, k, s, 0.0, 0, lam)
    raise ValueError(f"unknown variant {config.variant!r}")


def build_tables(config: TrainConfig, graph: Graph, width=None):
    """Attribute and topology tables of the width the variant needs."""
    width = width or apply_variant(config).table_k
    adj = normalized_adjacency(graph)
    prop = PropagationConfig(K=config.ppr_steps, beta=config.ppr_beta)
    return build_token_tables(graph, adj, prop, width)


def make_sequences(config: TrainConfig, graph: Graph, tables, seed: int):
    """Sequence batches for both views; ``tables`` may be wider than needed."""
    setup = apply_variant(config)
    out = []
    for table in tables:
        if table.k < setup.table_k:
            raise ValueError(f"table width {table.k} < required {setup.table_k}")
        table = table.prefix(setup.table_k)
        if setup.sequences == "swap":
            out.append(build_sequences(graph, table, SwapConfig(setup.p, setup.t, setup.s), seed))
        elif setup.sequences == "single":
            out.append(build_single_sequences(graph, table, seed))
        else:
            out.append(build_subsampled_sequences(graph, table, setup.k, setup.s, seed))
    return tuple(out)


# ---------------------------------------------------------------------------
# optimizer

class Adam:
    """Adam with L2 weight decay folded into the gradient."""

    def __init__(self, params: E.ParamStore, lr, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.weight_decay = weight_decay
        self.m = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.steps = 0

    def step(self):
        self.steps += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.steps
        c2 = 1.0 - b2**self.steps
        for k, t in self.params.items():
            g = t.grad if t.grad is not None else np.zeros_like(t.data)
            if self.weight_decay:
                g = g + self.weight_decay * t.data
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            t.data = t.data - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


# ---------------------------------------------------------------------------
# evaluation

def predict_logits(params, sequences, nodes=None, chunk=EVAL_CHUNK) -> np.ndarray:
    """Eval-mode logits for ``nodes`` (default all), computed in chunks."""
    A, T = sequences
    nodes = np.arange(A.n) if nodes is None else np.asarray(nodes)
    alpha = params.meta["alpha"]
    parts = []
    for start in range(0, nodes.size, chunk):
        sel = nodes[start:start + chunk]
        logits, _ = forward_full(A, T, params, alpha, 0.0, labels=None, mode="eval", nodes=sel)
        parts.append(logits.data)
    if not parts:
        return np.zeros((0, params.meta["n_classes"]))
    return np.concatenate(parts, axis=0)


def accuracy(logits, labels) -> float:
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def evaluate(params, graph: Graph, sequences, split: SplitAssignment, role=TEST) -> float:
    """Fraction of ``role`` nodes whose argmax logit is the true label."""
    nodes = np.flatnonzero(split.roles == role)
    if nodes.size == 0:
        raise ValueError("no nodes hold the requested role")
    return accuracy(predict_logits(params, sequences, nodes), graph.y[nodes])


# ---------------------------------------------------------------------------
# training

@dataclass
class TrainOutcome:
    params: E.ParamStore
    best_val_acc: float
    test_acc: float
    best_epoch: int
    epochs: int
    curve: list = field(default_factory=list)  # per epoch: {ce, ca, total, val_acc}

    def __iter__(self):
        # unpacks as (params, best validation accuracy, test accuracy)
        return iter((self.params, self.best_val_acc, self.test_acc))


def _mean_nll(logits, labels) -> float:
    if len(labels) == 0:
        return 0.0
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(len(labels)), labels].mean())


def _seed_int(*parts) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def train_one(config: TrainConfig, graph: Graph, split: SplitAssignment, seed: int,
              tables=None, sequences=None) -> TrainOutcome:
    """Train from scratch under ``seed``; keep the best-validation snapshot.

    ``seed`` drives parameter init, sequence generation, dropout and batch
    order. Precomputed ``tables`` (or ``sequences``) skip the tokenizer.
    """
    setup = apply_variant(config)
    if tables is None and (sequences is None or config.resample_each_epoch):
        tables = build_tables(config, graph)
    if sequences is None:
        sequences = make_sequences(config, graph, tables, seed)
    A, T = sequences

    params = init_params(graph.d, graph.c, config.hidden_dim, config.ffn_dim, config.layers,
                         config.heads, config.share_encoder, seed=seed)
    params.meta["alpha"] = config.alpha
    opt = Adam(params, config.learning_rate, weight_decay=config.weight_decay)
    rng = np.random.default_rng([seed, 1])

    train_nodes = split.train
    eval_nodes = np.flatnonzero(split.roles != TRAIN)
    val_sel = split.roles[eval_nodes] == VAL
    test_sel = split.roles[eval_nodes] == TEST
    y = graph.y

    best_val, best_loss, best_test, best_epoch, best_state = -1.0, math.inf, 0.0, -1, None
    curve = []
    epoch = 0
    for epoch in range(config.max_epochs):
        if config.resample_each_epoch and epoch > 0 and setup.sequences == "swap":
            cfg = SwapConfig(setup.p, setup.t, setup.s)
            ep_seed = _seed_int(seed, epoch)
            A = resample_swapped_rows(A, tables[0].prefix(setup.table_k), cfg, ep_seed)
            T = resample_swapped_rows(T, tables[1].prefix(setup.table_k), cfg, ep_seed)

        if config.batch_size and config.batch_size < train_nodes.size:
            order = rng.permutation(train_nodes)
            batches = [order[i:i + config.batch_size] for i in range(0, order.size, config.batch_size)]
        else:
            batches = [train_nodes]

        sums = np.zeros(3)
        for nodes in batches:
            params.zero_grad()
            _, lb = forward_full(A, T, params, config.alpha, setup.lam, y[nodes], mode="train",
                                 nodes=nodes, dropout=config.dropout, rng=rng)
            if not math.isfinite(lb.total):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch} (ce={lb.ce}, ca={lb.ca})")
            lb.objective.backward()
            opt.step()
            sums += np.array([lb.ce, lb.ca, lb.total]) * nodes.size
        sums /= train_nodes.size

        logits = predict_logits(params, (A, T), eval_nodes)
        hits = np.argmax(logits, axis=1) == y[eval_nodes]
        val_acc = float(hits[val_sel].mean()) if val_sel.any() else 0.0
        test_acc = float(hits[test_sel].mean()) if test_sel.any() else 0.0
        val_loss = _mean_nll(logits[val_sel], y[eval_nodes][val_sel])
        curve.append({"ce": float(sums[0]), "ca": float(sums[1]), "total": float(sums[2]),
                      "val_acc": val_acc, "val_loss": val_loss})

        # accuracy first; equal accuracy improves only on lower validation loss
        if val_acc > best_val or (val_acc == best_val and val_loss < best_loss):
            best_val, best_loss, best_test, best_epoch = val_acc, val_loss, test_acc, epoch
            best_state = params.state()
        if epoch - best_epoch >= config.patience:
            break

    params.load_state(best_state)
    return TrainOutcome(params, best_val, best_test, best_epoch, epoch + 1, curve)


# ---------------------------------------------------------------------------
# experiments

@dataclass
class RunResult:
    config: TrainConfig
    accuracies: list
    val_accuracies: list
    epochs: list
    curves: list
    params: list = field(default_factory=list, repr=False)

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std(self) -> float:
        # sample std; a single run reports 0
        if len(self.accuracies) < 2:
            return 0.0
        return float(np.std(self.accuracies, ddof=1))

    def records(self, dataset=None):
        """One JSON-serializable dict per run, each embedding the config."""
        cfg = self.config.to_pairs()
        out = []
        for r, (acc, val, ep, curve) in enumerate(zip(self.accuracies, self.val_accuracies, self.epochs, self.curves)):
            out.append({
                "dataset": dataset or self.config.dataset,
                "run": r,
                "split_seed": self.config.base_seed + r,
                "init_seed": self.config.base_seed + INIT_SEED_OFFSET + r,
                "test_acc": acc,
                "best_val_acc": val,
                "epochs": ep,
                "curve": curve,
                "config": cfg,
            })
        return out

    def csv_row(self, dataset=None) -> dict:
        c = self.config
        setup = apply_variant(c)
        return {
            "dataset": dataset or c.dataset,
            "variant": c.variant,
            "split": c.split,
            "k": c.k,
            "p": c.swap_p,
            "t": c.swap_t,
            "s": c.aug_s,
            "alpha": c.alpha,
            "lambda": setup.lam,
            "mean_acc": repr(self.mean),
            "std_acc": repr(self.std),
            "config": ";".join(f"{k}={v}" for k, v in c.to_pairs().items()),
        }


CSV_FIELDS = ["dataset", "variant", "split", "k", "p", "t", "s", "alpha", "lambda", "mean_acc", "std_acc", "config"]


def format_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def format_records(records) -> str:
    return "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in records)


def run_experiment(config: TrainConfig, graph: Graph, tables=None, keep_params=False) -> RunResult:
    """``config.runs`` independent runs; split seeds ``base_seed + r``, init seeds offset by 10000.

    Splits are redrawn for every run.
    """
    if tables is None:
        tables = build_tables(config, graph)
    accs, vals, epochs, curves, params = [], [], [], [], []
    for r in range(config.runs):
        split = make_split(graph, config.split, config.base_seed + r)
        out = train_one(config, graph, split, config.base_seed + INIT_SEED_OFFSET + r, tables=tables)
        log.info("run %d: test %.4f (val %.4f, %d epochs)", r, out.test_acc, out.best_val_acc, out.epochs)
        accs.append(out.test_acc)
        vals.append(out.best_val_acc)
        epochs.append(out.epochs)
        curves.append(out.curve)
        if keep_params:
            params.append(out.params)
    return RunResult(config, accs, vals, epochs, curves, params)


# ---------------------------------------------------------------------------
# baselines

def majority_rate(graph: Graph, split: SplitAssignment) -> float:
    """Test accuracy of always predicting the most frequent training label."""
    top = np.bincount(graph.y[split.train], minlength=graph.c).argmax()
    return float(np.mean(graph.y[split.test] == top))


def train_logistic(graph: Graph, split: SplitAssignment, seed=0, lr=0.01, weight_decay=5e-4,
                   max_epochs=500, patience=50) -> float:
    """Softmax regression on raw features, early-stopped on validation accuracy."""
    rng = np.random.default_rng(seed)
    X = np.asarray(graph.X, dtype=np.float64)
    params = E.ParamStore()
    bound = math.sqrt(6.0 / (graph.d + graph.c))
    params.add("w", rng.uniform(-bound, bound, size=(graph.d, graph.c)))
    params.add("b", np.zeros(graph.c))
    opt = Adam(params, lr, weight_decay=weight_decay)
    Xt = E.Tensor(X[split.train])
    best_val, best_test, best_epoch = -1.0, 0.0, -1
    for epoch in range(max_epochs):
        params.zero_grad()
        loss = E.softmax_cross_entropy(Xt @ params["w"] + params["b"], graph.y[split.train])
        loss.backward()
        opt.step()
        pred = np.argmax(X @ params["w"].data + params["b"].data, axis=1)
        val = float(np.mean(pred[split.val] == graph.y[split.val]))
        if val > best_val:
            best_val, best_epoch = val, epoch
            best_test = float(np.mean(pred[split.test] == graph.y[split.test]))
        if epoch - best_epoch >= patience:
            break
    return best_test


# ---------------------------------------------------------------------------
# hyperparameter grid

GRID = {
    "learning_rate": (0.001, 0.005, 0.01),
    "dropout": (0.3, 0.5, 0.7),
    "hidden_dim": (256, 512),
    "k": (4, 6, 8),
    "alpha": (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9),
}


def grid_configs(base: TrainConfig, grid=None):
    """Every combination of the search axes applied to ``base``."""
    grid = GRID if grid is None else grid
    keys = list(grid)
    for combo in itertools.product(*(grid[k] for k in keys)):
        yield base.with_updates({k: str(v) for k, v in zip(keys, combo)})


def tune(base: TrainConfig, graph: Graph, grid=None, runs=1, tables=None):
    """Pick the grid point with the best mean validation accuracy.

    Each candidate is scored over ``runs`` seeds; ties keep the earlier
    candidate. Returns ``(best_config, scores)`` with one
    ``(config, mean_val)`` pair per candidate.
    """
    scores = []
    best, best_val = None, -1.0
    cached = {}
    for cfg in grid_configs(base.with_updates({"runs": str(runs)}), grid):
        width = apply_variant(cfg).table_k
        if tables is None and width not in cached:
            cached[width] = build_tables(cfg, graph)
        res = run_experiment(cfg, graph, tables=tables or cached[width])
        val = float(np.mean(res.val_accuracies))
        scores.append((cfg, val))
        if val > best_val:
            best, best_val = cfg, val
    return best.with_updates({"runs": str(base.runs)}), scores
