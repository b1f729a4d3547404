"""Command-line entry point: ``swapgt {prepare,train,eval,ablate,sweep,selftest}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 check failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import cache
from .config import VARIANTS, ConfigError, TrainConfig, parse_pairs
from .engine import ParamStore
from .graph import GraphFormatError, SbmSpec, generate_sbm, load_graph, make_split
from .tokenizer import SequenceBatch, TokenTable
from .trainer import (
    INIT_SEED_OFFSET,
    TrainingDiverged,
    apply_variant,
    build_tables,
    evaluate,
    format_csv,
    format_records,
    make_sequences,
    run_experiment,
)

log = logging.getLogger("swapgt")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CHECK = 0, 1, 2, 3
SWEEP_DEFAULTS = {"t": (1, 2, 3, 4), "s": tuple(range(1, 9))}
SWEEP_KEYS = {"t": "swap_t", "s": "aug_s"}
CACHE_NAME = "tokens.swgt"


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# helpers

def load_config(args) -> TrainConfig:
    try:
        overrides = parse_pairs(args.set or [], source="--set")
        if args.config:
            return TrainConfig.from_file(args.config, overrides)
        return TrainConfig.from_pairs(overrides)
    except FileNotFoundError as exc:
        raise DataError(f"config file not found: {exc.filename}") from exc
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc


def load_dataset(cfg: TrainConfig):
    try:
        if cfg.features_path:
            return load_graph(cfg.features_path, cfg.edges_path, cfg.labels_path)
        spec = SbmSpec.from_pairs({k: v for k, v in cfg.sbm.items() if k != "seed"})
        return generate_sbm(spec, int(cfg.sbm.get("seed", 0)))
    except FileNotFoundError as exc:
        raise DataError(f"missing dataset file: {exc.filename}") from exc
    except (GraphFormatError, ConfigError, ValueError) as exc:
        raise DataError(str(exc)) from exc


def _tokenizer_pairs(cfg: TrainConfig):
    keep = ("dataset", "features_path", "edges_path", "labels_path", "k", "ppr_steps", "ppr_beta",
            "swap_p", "swap_t", "aug_s", "variant", "base_seed")
    pairs = cfg.to_pairs()
    out = {k: pairs[k] for k in keep}
    out.update({k: v for k, v in pairs.items() if k.startswith("sbm.")})
    return out


def prepare(cfg: TrainConfig, graph, out_dir: Path):
    """Build (or reuse) the token cache. Returns ``(tables, sequences, hit)``."""
    setup = apply_variant(cfg)
    seed = cfg.base_seed + INIT_SEED_OFFSET
    header = cache.CacheHeader(graph.n, graph.d, setup.table_k, setup.s, seed,
                               cache.graph_digest(graph, _tokenizer_pairs(cfg)))
    path = out_dir / CACHE_NAME
    if path.exists():
        try:
            if cache.read_header(path) == header:
                _, arrays = cache.read_cache(path)
                tables = tuple(TokenTable(v, a) for v, a in zip(("attribute", "topology"), arrays[:2]))
                seqs = tuple(SequenceBatch(v, a, graph.X, seed) for v, a in zip(("attribute", "topology"), arrays[2:]))
                return tables, seqs, True
            log.warning("cache header mismatch at %s; regenerating", path)
        except cache.CacheError as exc:
            log.warning("unreadable cache %s (%s); regenerating", path, exc)
    tables = build_tables(cfg, graph)
    seqs = make_sequences(cfg, graph, tables, seed)
    out_dir.mkdir(parents=True, exist_ok=True)
    cache.write_cache(path, header, [tables[0].ids, tables[1].ids, seqs[0].ids, seqs[1].ids])
    return tables, seqs, False


def save_checkpoint(path, params: ParamStore, cfg: TrainConfig, run: int):
    arrays = {f"param:{k}": v for k, v in params.state().items()}
    arrays["meta"] = np.array(json.dumps(params.meta, sort_keys=True))
    arrays["config"] = np.array(cfg.to_text())
    arrays["run"] = np.array(run)
    np.savez(path, **arrays)


def load_checkpoint(path):
    try:
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            cfg = TrainConfig.from_pairs(parse_pairs(str(z["config"]).splitlines()))
            run = int(z["run"])
            params = ParamStore(meta)
            for key in z.files:
                if key.startswith("param:"):
                    params.add(key[6:], z[key])
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"{path} is not a trained checkpoint ({exc})") from exc
    return params, cfg, run


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _experiment(cfg: TrainConfig, graph, tables):
    return run_experiment(cfg, graph, tables=tables, keep_params=True)


def _job(args):
    cfg_text, graph, tables = args
    cfg = TrainConfig.from_pairs(parse_pairs(cfg_text.splitlines()))
    return run_experiment(cfg, graph, tables=tables)


def run_many(configs, graph, tables, jobs):
    """Run experiments, possibly in parallel; results keep the input order."""
    payload = [(c.to_text(), graph, tables) for c in configs]
    if jobs <= 1 or len(configs) <= 1:
        return [_job(p) for p in payload]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_job, payload))


# ---------------------------------------------------------------------------
# commands

def cmd_prepare(args):
    cfg = load_config(args)
    graph = load_dataset(cfg)
    out = Path(args.out)
    _, _, hit = prepare(cfg, graph, out)
    print(f"cache {'hit' if hit else 'written'}: {out / CACHE_NAME}")
    return EXIT_OK


def cmd_train(args):
    cfg = load_config(args)
    graph = load_dataset(cfg)
    out = Path(args.out)
    tables, _, _ = prepare(cfg, graph, out)
    result = _experiment(cfg, graph, tables)
    name = cfg.dataset
    _write(out / "config.txt", cfg.to_text())
    _write(out / "runs.jsonl", format_records(result.records(name)))
    _write(out / "results.csv", format_csv([result.csv_row(name)]))
    for r, params in enumerate(result.params):
        save_checkpoint(out / f"checkpoint_run{r}.npz", params, cfg, r)
    print(f"{name} {cfg.variant} {cfg.split}: {100 * result.mean:.2f} +- {100 * result.std:.2f} "
          f"over {cfg.runs} runs")
    return EXIT_OK


def cmd_eval(args):
    params, cfg, run = load_checkpoint(args.checkpoint)
    graph = load_dataset(cfg)
    if graph.d != params.meta["d_in"] or graph.c != params.meta["n_classes"]:
        raise DataError("checkpoint does not match the dataset dimensions")
    tables = build_tables(cfg, graph)
    seed = cfg.base_seed + INIT_SEED_OFFSET + run
    seqs = make_sequences(cfg, graph, tables, seed)
    split = make_split(graph, cfg.split, cfg.base_seed + run)
    acc = evaluate(params, graph, seqs, split)
    record = {"checkpoint": str(args.checkpoint), "run": run, "test_acc": acc, "config": cfg.to_pairs()}
    if args.out:
        _write(Path(args.out) / "eval.json", json.dumps(record, sort_keys=True, indent=1) + "\n")
    print(f"test accuracy {100 * acc:.2f}")
    return EXIT_OK


def cmd_ablate(args):
    cfg = load_config(args)
    graph = load_dataset(cfg)
    # the 2k tables serve every variant through their k-prefix
    tables = build_tables(cfg.with_updates({"variant": "large-k"}), graph)
    configs = [cfg.with_updates({"variant": v}) for v in VARIANTS]
    results = run_many(configs, graph, tables, args.jobs)
    return _emit_rows(Path(args.out) / "ablation.csv", results, cfg.dataset)


def cmd_sweep(args):
    cfg = load_config(args)
    graph = load_dataset(cfg)
    if args.values:
        try:
            values = [int(v) for v in args.values.split(",")]
        except ValueError as exc:
            raise UsageError(f"bad --values {args.values!r}") from exc
    else:
        values = SWEEP_DEFAULTS[args.param]
    try:
        configs = [cfg.with_updates({SWEEP_KEYS[args.param]: str(v)}) for v in values]
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc
    tables = build_tables(cfg, graph)
    results = run_many(configs, graph, tables, args.jobs)
    return _emit_rows(Path(args.out) / f"sweep_{args.param}.csv", results, cfg.dataset)


def _emit_rows(path, results, name):
    rows = [r.csv_row(name) for r in results]
    _write(path, format_csv(rows))
    _write(path.with_suffix(".jsonl"), "".join(format_records(r.records(name)) for r in results))
    for row in rows:
        print(f"{row['variant']:>16} t={row['t']} s={row['s']}: "
              f"{100 * float(row['mean_acc']):.2f} +- {100 * float(row['std_acc']):.2f}")
    return EXIT_OK


def cmd_selftest(args):
    from .selftest import run_selftest

    results = run_selftest()
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_CHECK if failed else EXIT_OK


# ---------------------------------------------------------------------------

def build_parser():
    parser = _Parser(prog="swapgt", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, out_required=True):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        p.add_argument("--out", required=out_required, help="output directory")

    common(sub.add_parser("prepare", help="build and cache token tables and sequences"))
    common(sub.add_parser("train", help="run the multi-seed experiment"))
    p = sub.add_parser("eval", help="evaluate a saved checkpoint on its test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out")
    p = sub.add_parser("ablate", help="run the four variants under one config")
    common(p)
    p.add_argument("--jobs", type=int, default=1)
    p = sub.add_parser("sweep", help="vary swap rounds t or augmentation count s")
    common(p)
    p.add_argument("--param", choices=sorted(SWEEP_KEYS), required=True)
    p.add_argument("--values", help="comma-separated values (default: 1-4 for t, 1-8 for s)")
    p.add_argument("--jobs", type=int, default=1)
    sub.add_parser("selftest", help="run the built-in numerical checks")
    return parser


COMMANDS = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "sweep": cmd_sweep,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"swapgt: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"swapgt: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDiverged as exc:
        print(f"swapgt: training diverged: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
