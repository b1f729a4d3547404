"""Acceptance gate: one test per criterion, each at its pinned tolerance.

Every test appends a ``PASS``/``FAIL``/``SKIP`` line to ``REPORT``; the
conftest hook prints them at the end of the session. Run just this file
with ``pytest tests/test_acceptance.py -v``.

Criterion 8 needs Citeseer files in the loader format. Point
``SWAPGT_CITESEER_DIR`` at a directory holding ``features.csv``,
``edges.txt`` and ``labels.txt`` to enable it.
"""

import csv
import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

from swapgt import cli, oracles
from swapgt.config import TrainConfig
from swapgt.engine import Tensor, grad_errors
from swapgt.graph import Graph, SbmSpec, generate_sbm, load_graph, make_split, normalized_adjacency
from swapgt.model import ViewRepresentations, center_alignment, total_loss
from swapgt.propagation import PropagationConfig, ppr_propagate
from swapgt.selftest import gradient_instance
from swapgt.tokenizer import TokenTable, cosine_topk, hop_bound_oracle, swap_tokens
from swapgt.trainer import (
    apply_variant,
    build_tables,
    format_csv,
    majority_rate,
    make_sequences,
    run_experiment,
    train_logistic,
    tune,
)

REPORT = []

GRAD_TOL = 1e-4
GRAD_BUDGET_S = 60.0
PPR_TOL = 1e-10
CA_ZERO_TOL = 1e-12
RECOMPOSE_TOL = 1e-12
MARGIN = 0.05
E2E_BUDGET_S = 300.0
CITESEER_DENSE, CITESEER_DENSE_TOL = 0.7849, 0.020
CITESEER_SPARSE, CITESEER_SPARSE_TOL = 0.6991, 0.030
CITESEER_BUDGET_S = 2 * 3600.0

# synthetic end-to-end setting: 4 blocks of 50, separation twice the noise scale
E2E_SPEC = SbmSpec((50,) * 4, 0.1, 0.01, feature_dim=8, separation=2.0, noise=1.0)
E2E_CONFIG = TrainConfig(
    split="sparse", k=6, aug_s=4, swap_t=2, swap_p=0.5, hidden_dim=32, ffn_dim=64, heads=4, layers=1,
    alpha=0.2, lam=1.0, dropout=0.5, learning_rate=0.01, max_epochs=200, patience=50, runs=5,
)


def report(number, passed, detail):
    REPORT.append(f"{'PASS' if passed else 'FAIL'}  criterion {number}: {detail}")
    assert passed, detail


def test_c1_gradient_correctness():
    start = time.perf_counter()
    params, objective = gradient_instance(seed=0)
    errors = grad_errors(objective, params, eps=1e-5)
    elapsed = time.perf_counter() - start
    worst = max(errors, key=errors.get)
    report(1, errors[worst] <= GRAD_TOL and elapsed < GRAD_BUDGET_S,
           f"max rel error {errors[worst]:.2e} at {worst} over {len(errors)} tensors "
           f"(tol {GRAD_TOL:g}), {elapsed:.1f}s (budget {GRAD_BUDGET_S:.0f}s)")


def _topk_instance(rng, i):
    n = int(rng.integers(2, 201))
    d = int(rng.integers(1, 17))
    kind = i % 4
    if kind == 0:
        F = rng.standard_normal((n, d))
    elif kind == 1:
        F = rng.integers(0, 2, (n, d)).astype(float)
    elif kind == 2:
        base = rng.standard_normal((max(1, n // 4), d))
        F = base[rng.integers(0, base.shape[0], n)]
    else:
        F = rng.integers(-2, 3, (n, d)).astype(float)
        F[rng.random(n) < 0.1] = 0.0
    k = int(rng.integers(1, min(10, n - 1) + 1))
    return F, k


def test_c2_topk_oracle_equivalence():
    rng = np.random.default_rng(2)
    mismatches = []
    for i in range(50):
        F, k = _topk_instance(rng, i)
        if not np.array_equal(cosine_topk(F, k).ids, oracles.brute_force_topk(F, k)):
            mismatches.append(i)
    report(2, not mismatches, f"{50 - len(mismatches)}/50 instances identical to the brute-force oracle")


def test_c3_hop_bound():
    rng = np.random.default_rng(3)
    failures = 0
    for trial in range(1000):
        n = int(rng.integers(4, 80))
        k = int(rng.integers(1, min(8, n - 1) + 1))
        if trial % 2:
            table = cosine_topk(rng.standard_normal((n, 3)), k)
        else:
            table = TokenTable("topology", np.stack(
                [rng.choice(np.delete(np.arange(n), i), k, replace=False) for i in range(n)]))
        i = int(rng.integers(n))
        p = float(rng.random())
        t = int(rng.integers(1, 5))
        tokens = swap_tokens(table, i, p, t, rng)
        ok = hop_bound_oracle(table, i, tokens, t) and set(map(int, tokens)) <= oracles.bfs_hops(table.ids, i, t + 1)
        failures += not ok
    report(3, failures == 0, f"{1000 - failures}/1000 trials within t+1 hops")


def test_c4_ppr_oracle():
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(40):
        n = int(rng.integers(1, 201))
        m = int(rng.integers(0, 4 * n + 1))
        g = Graph.from_edges(n, rng.integers(0, n, (m, 2)), rng.standard_normal((n, 5)), np.zeros(n, int), c=1)
        K = int(rng.integers(0, 11))
        beta = float(rng.random())
        fast = ppr_propagate(normalized_adjacency(g), g.X, PropagationConfig(K, beta))
        slow = oracles.dense_ppr(oracles.dense_normalized_adjacency(n, g.edge_list()), g.X, K, beta)
        worst = max(worst, float(np.max(np.abs(fast - slow))))
    report(4, worst <= PPR_TOL, f"max abs deviation {worst:.2e} over 40 instances (tol {PPR_TOL:g})")


def test_c5_loss_properties():
    rng = np.random.default_rng(5)
    lo, hi = np.inf, -np.inf
    for i in range(10_000):
        s, d = int(rng.integers(1, 9)), int(rng.integers(1, 17))
        Z = rng.standard_normal((1, 1 + s, d)) * 10.0 ** rng.uniform(-6, 6)
        if i % 10 == 0:
            Z[0, 1::2] = -Z[0, 0]  # near-cancelling centroid
        ca = center_alignment(ViewRepresentations("attribute", Tensor(Z))).item()
        lo, hi = min(lo, ca), max(hi, ca)
    in_range = lo >= 0.0 and hi <= 2.0

    same = 0.0
    for _ in range(200):
        row = rng.standard_normal(int(rng.integers(1, 17))) * 10.0 ** rng.uniform(-3, 3)
        Z = np.tile(row, (int(rng.integers(1, 4)), int(rng.integers(2, 9)), 1))
        same = max(same, center_alignment(ViewRepresentations("attribute", Tensor(Z))).item())

    recompose = 0.0
    for _ in range(500):
        nodes, c = int(rng.integers(1, 8)), int(rng.integers(2, 6))
        s, d, lam = int(rng.integers(1, 6)), int(rng.integers(1, 9)), float(rng.uniform(0, 5))
        repA = ViewRepresentations("attribute", Tensor(rng.standard_normal((nodes, 1 + s, d))))
        repT = ViewRepresentations("topology", Tensor(rng.standard_normal((nodes, 1 + s, d))))
        lb = total_loss(Tensor(rng.standard_normal((nodes, c))), rng.integers(0, c, nodes), None, repA, repT, lam)
        recompose = max(recompose, abs(lb.total - (lb.ce + lam * lb.ca)))

    report(5, in_range and same < CA_ZERO_TOL and recompose <= RECOMPOSE_TOL,
           f"ca range [{lo:.3g}, {hi:.3g}] over 1e4 sets, identical rows max {same:.1e}, "
           f"recomposition error {recompose:.1e}")


@pytest.fixture(scope="module")
def e2e():
    start = time.perf_counter()
    graph = generate_sbm(E2E_SPEC, seed=0)
    result = run_experiment(E2E_CONFIG, graph)
    elapsed = time.perf_counter() - start
    return graph, result, elapsed


def test_c6_determinism(e2e):
    graph, first, _ = e2e
    second = run_experiment(E2E_CONFIG, graph)
    a, b = format_csv([first.csv_row("sbm")]), format_csv([second.csv_row("sbm")])
    report(6, a.encode() == b.encode(), f"two {E2E_CONFIG.runs}-run experiments, CSV rows "
           f"{'byte-identical' if a == b else 'differ'}")


def test_c7_synthetic_end_to_end(e2e):
    graph, result, elapsed = e2e
    majority, logistic = [], []
    for r in range(E2E_CONFIG.runs):
        split = make_split(graph, E2E_CONFIG.split, E2E_CONFIG.base_seed + r)
        majority.append(majority_rate(graph, split))
        logistic.append(train_logistic(graph, split, seed=r))
    swapgt = result.mean
    gap = swapgt - max(np.mean(majority), np.mean(logistic))
    report(7, gap >= MARGIN and elapsed < E2E_BUDGET_S,
           f"SwapGT {100 * swapgt:.1f}% vs majority {100 * np.mean(majority):.1f}%, "
           f"logistic {100 * np.mean(logistic):.1f}% (margin {100 * gap:.1f} >= {100 * MARGIN:.0f} points), "
           f"{elapsed:.0f}s (budget {E2E_BUDGET_S:.0f}s)")


def test_c8_citeseer_reproduction():
    root = os.environ.get("SWAPGT_CITESEER_DIR")
    paths = [Path(root or ".") / name for name in ("features.csv", "edges.txt", "labels.txt")]
    if not root or not all(p.exists() for p in paths):
        REPORT.append("SKIP  criterion 8: Citeseer files not supplied (set SWAPGT_CITESEER_DIR)")
        pytest.skip("Citeseer files not supplied")
    start = time.perf_counter()
    graph = load_graph(*paths)
    details, ok = [], True
    for split, target, tol in (("dense", CITESEER_DENSE, CITESEER_DENSE_TOL),
                               ("sparse", CITESEER_SPARSE, CITESEER_SPARSE_TOL)):
        best, _ = tune(TrainConfig(split=split, runs=10), graph)
        mean = run_experiment(best, graph).mean
        ok &= abs(mean - target) <= tol
        details.append(f"{split} {100 * mean:.2f}% (target {100 * target:.2f} +- {100 * tol:.0f})")
    elapsed = time.perf_counter() - start
    report(8, ok and elapsed <= CITESEER_BUDGET_S, ", ".join(details) + f", {elapsed / 60:.0f} min")


def test_c9_ablation_machinery(tmp_path):
    pairs = ["sbm.sizes=15,15,15", "sbm.p_in=0.2", "sbm.p_out=0.02", "sbm.feature_dim=6", "sbm.separation=2.0",
             "k=4", "aug_s=3", "hidden_dim=8", "ffn_dim=16", "heads=2", "max_epochs=15", "patience=15", "runs=2"]
    argv = ["ablate", "--out", str(tmp_path)]
    for pair in pairs:
        argv += ["--set", pair]
    code = cli.main(argv)
    with open(tmp_path / "ablation.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    records = [json.loads(line) for line in (tmp_path / "ablation.jsonl").read_text().splitlines()]
    variants = [r["variant"] for r in rows]
    no_cal = [r for r in records if r["config"]["variant"] == "no-cal"]
    ca_zero = bool(no_cal) and all(epoch["ca"] == 0.0 for r in no_cal for epoch in r["curve"])

    cfg = TrainConfig.from_pairs(dict(p.split("=", 1) for p in pairs)).with_updates({"variant": "random-subsample"})
    graph = cli.load_dataset(cfg)
    setup = apply_variant(cfg)
    tables = build_tables(cfg, graph)
    subset = True
    for r in range(cfg.runs):
        seqs = make_sequences(cfg, graph, tables, cfg.base_seed + 10_000 + r)
        for table, batch in zip(tables, seqs):
            pool = table.ids
            for i in range(graph.n):
                row_pool = set(pool[i])
                subset &= all(len(set(row)) == setup.k and set(row) <= row_pool for row in batch.ids[i, 1:, 1:])
    ordering = ", ".join(f"{r['variant']} {100 * float(r['mean_acc']):.1f}" for r in rows)
    report(9, code == 0 and variants == ["full", "no-cal", "large-k", "random-subsample"] and ca_zero and subset,
           f"variants {variants}, no-cal ca identically 0: {ca_zero}, subsample rows within 2k pool: {subset} "
           f"(accuracies, not gated: {ordering})")
