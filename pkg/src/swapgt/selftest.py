"""Built-in numerical checks run by ``swapgt selftest``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import oracles
from .config import TrainConfig
from .engine import grad_errors
from .graph import Graph, SbmSpec, generate_sbm, make_split, normalized_adjacency
from .model import forward_full, init_params
from .propagation import PropagationConfig, ppr_propagate
from .tokenizer import SwapConfig, TokenTable, build_sequences, build_token_tables, cosine_topk, hop_bound_oracle, swap_tokens
from .trainer import train_one

GRAD_TOL = 1e-4
PPR_TOL = 1e-10


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def gradient_instance(seed=0):
    """The 20-node instance used for full-loss gradient checks."""
    g = generate_sbm(SbmSpec((10, 10), 0.4, 0.05, 8, 3.0), seed=seed)
    adj = normalized_adjacency(g)
    tables = build_token_tables(g, adj, PropagationConfig(), 3)
    cfg = SwapConfig(p=0.5, t=2, s=2)
    A, T = (build_sequences(g, tab, cfg, seed) for tab in tables)
    params = init_params(8, g.c, hidden_dim=16, ffn_dim=32, layers=1, heads=2, seed=seed + 1)
    mask = make_split(g, "dense", seed).roles == 0

    def objective():
        return forward_full(A, T, params, 0.4, 0.7, g.y, mask, mode="eval")[1].objective

    return params, objective


def check_gradients(eps=1e-5) -> CheckResult:
    params, objective = gradient_instance()
    errors = grad_errors(objective, params, eps)
    worst = max(errors, key=errors.get)
    return CheckResult("gradient", errors[worst] <= GRAD_TOL,
                       f"max relative error {errors[worst]:.3e} ({worst}) over {params.num_values()} values")


def check_topk(instances=10, seed=0) -> CheckResult:
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(instances):
        n = int(rng.integers(5, 60))
        k = int(rng.integers(1, min(10, n - 1) + 1))
        F = rng.standard_normal((n, int(rng.integers(1, 12))))
        F[rng.random(n) < 0.1] = 0.0
        dup = rng.integers(0, n, size=n // 5)
        F[dup] = F[0]
        if not np.array_equal(cosine_topk(F, k).ids, oracles.brute_force_topk(F, k)):
            bad += 1
    return CheckResult("top-k oracle", bad == 0, f"{instances - bad}/{instances} instances identical")


def _random_table(rng, n, k):
    ids = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        others = np.delete(np.arange(n), i)
        ids[i] = rng.choice(others, size=k, replace=False)
    return TokenTable("attribute", ids)


def check_hop_bound(trials=200, seed=0) -> CheckResult:
    rng = np.random.default_rng(seed)
    failures = 0
    for _ in range(trials):
        n = int(rng.integers(6, 40))
        k = int(rng.integers(1, min(6, n - 1) + 1))
        table = _random_table(rng, n, k)
        i = int(rng.integers(n))
        p = float(rng.random())
        t = int(rng.integers(1, 5))
        tokens = swap_tokens(table, i, p, t, rng)
        if not hop_bound_oracle(table, i, tokens, t):
            failures += 1
    return CheckResult("hop bound", failures == 0, f"{trials - failures}/{trials} trials within t+1 hops")


def check_ppr(instances=5, seed=0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        n = int(rng.integers(2, 60))
        m = int(rng.integers(0, 3 * n))
        edges = rng.integers(0, n, size=(m, 2))
        g = Graph.from_edges(n, edges, rng.standard_normal((n, 4)), np.zeros(n, dtype=int), c=1)
        K = int(rng.integers(0, 11))
        beta = float(rng.random())
        fast = ppr_propagate(normalized_adjacency(g), g.X, PropagationConfig(K, beta))
        slow = oracles.dense_ppr(oracles.dense_normalized_adjacency(n, g.edge_list()), g.X, K, beta)
        worst = max(worst, float(np.max(np.abs(fast - slow))))
    return CheckResult("ppr oracle", worst <= PPR_TOL, f"max abs deviation {worst:.3e}")


def check_determinism() -> CheckResult:
    g = generate_sbm(SbmSpec((15, 15), 0.3, 0.05, 6, 3.0), seed=3)
    cfg = TrainConfig(k=3, aug_s=2, hidden_dim=8, ffn_dim=16, heads=2, max_epochs=5, patience=5, runs=1)
    split = make_split(g, "dense", 0)
    a = train_one(cfg, g, split, seed=7)
    b = train_one(cfg, g, split, seed=7)
    same = a.test_acc == b.test_acc and a.curve == b.curve and all(
        np.array_equal(a.params[k].data, b.params[k].data) for k in a.params
    )
    return CheckResult("determinism", same, "identical parameters and curves" if same else "runs differ")


CHECKS = (check_gradients, check_topk, check_hop_bound, check_ppr, check_determinism)


def run_selftest(echo=print):
    results = []
    for check in CHECKS:
        try:
            res = check()
        except Exception as exc:  # report, keep going
            res = CheckResult(check.__name__.removeprefix("check_"), False, f"raised {exc!r}")
        results.append(res)
        if echo:
            echo(res.line())
    return results
