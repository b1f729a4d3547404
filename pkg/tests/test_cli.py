import csv
import json
import shutil
import subprocess

import pytest

from swapgt import cli

SMALL = [
    "sbm.sizes=10,10", "sbm.p_in=0.3", "sbm.p_out=0.05", "sbm.feature_dim=4", "sbm.separation=3.0",
    "k=3", "aug_s=2", "hidden_dim=8", "ffn_dim=16", "heads=2", "max_epochs=4", "patience=4", "runs=2",
]


def _args(*extra):
    out = []
    for pair in SMALL:
        out += ["--set", pair]
    return out + list(extra)


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_prepare_cache_hit_and_regeneration(tmp_path, capsys):
    assert cli.main(["prepare", *_args("--out", str(tmp_path))]) == 0
    assert "written" in capsys.readouterr().out
    first = (tmp_path / "tokens.swgt").read_bytes()
    assert cli.main(["prepare", *_args("--out", str(tmp_path))]) == 0
    assert "hit" in capsys.readouterr().out
    assert cli.main(["prepare", *_args("--set", "k=2", "--out", str(tmp_path))]) == 0
    assert "written" in capsys.readouterr().out
    assert (tmp_path / "tokens.swgt").read_bytes() != first


def test_corrupt_cache_is_regenerated(tmp_path, capsys):
    (tmp_path / "tokens.swgt").write_bytes(b"garbage")
    assert cli.main(["prepare", *_args("--out", str(tmp_path))]) == 0
    assert "written" in capsys.readouterr().out


def test_train_then_eval(tmp_path):
    assert cli.main(["train", *_args("--out", str(tmp_path))]) == 0
    for name in ("config.txt", "runs.jsonl", "results.csv", "checkpoint_run0.npz", "checkpoint_run1.npz"):
        assert (tmp_path / name).exists()
    records = [json.loads(line) for line in (tmp_path / "runs.jsonl").read_text().splitlines()]
    assert [r["run"] for r in records] == [0, 1]
    assert records[0]["config"]["k"] == "3"
    row = _rows(tmp_path / "results.csv")[0]
    assert row["variant"] == "full" and row["k"] == "3"

    assert cli.main(["eval", "--checkpoint", str(tmp_path / "checkpoint_run1.npz"), "--out", str(tmp_path)]) == 0
    result = json.loads((tmp_path / "eval.json").read_text())
    assert result["test_acc"] == pytest.approx(records[1]["test_acc"])


def test_train_output_is_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["train", *_args("--out", str(a))]) == 0
    assert cli.main(["train", *_args("--out", str(b))]) == 0
    assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()
    assert (a / "runs.jsonl").read_bytes() == (b / "runs.jsonl").read_bytes()


def test_ablate_and_sweep(tmp_path):
    assert cli.main(["ablate", *_args("--set", "runs=1", "--out", str(tmp_path))]) == 0
    rows = _rows(tmp_path / "ablation.csv")
    assert [r["variant"] for r in rows] == ["full", "no-cal", "large-k", "random-subsample"]
    assert rows[1]["lambda"] == "0.0"
    assert cli.main(["sweep", *_args("--set", "runs=1", "--param", "t", "--values", "1,3",
                                     "--out", str(tmp_path))]) == 0
    assert [r["t"] for r in _rows(tmp_path / "sweep_t.csv")] == ["1", "3"]


def test_parallel_sweep_matches_serial(tmp_path):
    common = _args("--set", "runs=1", "--param", "s", "--values", "1,2")
    assert cli.main(["sweep", *common, "--out", str(tmp_path / "serial")]) == 0
    assert cli.main(["sweep", *common, "--jobs", "2", "--out", str(tmp_path / "par")]) == 0
    assert (tmp_path / "serial" / "sweep_s.csv").read_bytes() == (tmp_path / "par" / "sweep_s.csv").read_bytes()


@pytest.mark.parametrize("argv", [
    [],
    ["bogus"],
    ["train"],
    ["train", "--out", "x", "--set", "nokey=1"],
    ["train", "--out", "x", "--set", "k=abc"],
    ["sweep", "--out", "x", "--param", "q"],
    ["sweep", "--out", "x", "--param", "t", "--values", "a,b"],
])
def test_usage_errors_exit_1(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    try:
        code = cli.main(argv)
    except SystemExit as exc:
        code = exc.code
    assert code == 1


def test_data_errors_exit_2(tmp_path):
    assert cli.main(["eval", "--checkpoint", str(tmp_path / "missing.npz")]) == 2
    assert cli.main(["train", "--config", str(tmp_path / "missing.txt"), "--out", str(tmp_path)]) == 2
    assert cli.main(["train", "--set", "features_path=" + str(tmp_path / "nope.csv"),
                     "--out", str(tmp_path)]) == 2
    (tmp_path / "bad.npz").write_bytes(b"not a checkpoint")
    assert cli.main(["eval", "--checkpoint", str(tmp_path / "bad.npz")]) == 2


def test_config_file_with_overrides(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("\n".join(SMALL) + "\nruns=1\n")
    out = tmp_path / "out"
    assert cli.main(["train", "--config", str(cfg), "--set", "alpha=0.3", "--out", str(out)]) == 0
    text = (out / "config.txt").read_text()
    assert "alpha=0.3\n" in text and "runs=1\n" in text


@pytest.mark.skipif(shutil.which("swapgt") is None, reason="console script not installed")
def test_console_script_usage_exit_code():
    proc = subprocess.run(["swapgt", "train"], capture_output=True, text=True)
    assert proc.returncode == 1
    assert "usage" in proc.stderr
