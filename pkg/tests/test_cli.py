import json
import subprocess
import sys

import numpy as np
import pytest

from qgcn.cli import main
from qgcn.graphdata import demo_graph


def run_cli(args):
    return main(args)


def test_decompose_demo_permutation(capsys):
    assert run_cli(["decompose", "--graph", "demo",
                    "--mode", "permutation"]) == 0
    report = json.loads(capsys.readouterr().out.splitlines()[0])
    assert report["terms"] == 4
    assert report["residual_norm"] == 0.0


def test_decompose_demo_pauli(capsys):
    assert run_cli(["decompose", "--graph", "demo", "--mode", "pauli",
                    "--drop-tol", "0"]) == 0
    report = json.loads(capsys.readouterr().out.splitlines()[0])
    assert report["terms"] == 11
    assert report["residual_norm"] == 0.0


def test_decompose_nsga2_deterministic(tmp_path, capsys):
    out1 = tmp_path / "a.json"
    out2 = tmp_path / "b.json"
    for out in (out1, out2):
        assert run_cli(["decompose", "--graph", "demo", "--mode", "nsga2",
                        "--seed", "4", "--generations", "8",
                        "--population", "16", "--out", str(out)]) == 0
    capsys.readouterr()
    doc1 = json.loads(out1.read_text())
    doc2 = json.loads(out2.read_text())
    assert doc1 == doc2
    assert doc1["residual_norm"] == pytest.approx(0.0, abs=1e-12)


def test_decompose_grid_sources(capsys):
    # the chain graph's mixed row-sum parity admits no exact unit-weight
    # permutation sum; the greedy still captures most of the mass
    assert run_cli(["decompose", "--graph", "grid1d:8",
                    "--mode", "permutation"]) == 0
    report = json.loads(capsys.readouterr().out.splitlines()[0])
    assert report["terms"] >= 2
    assert report["residual_norm"] < 2.0
    assert run_cli(["decompose", "--graph", "grid1d:8",
                    "--mode", "pauli"]) == 0
    report = json.loads(capsys.readouterr().out.splitlines()[0])
    assert report["residual_norm"] == pytest.approx(0.0, abs=1e-10)


def test_decompose_unknown_graph_exits_one(capsys):
    assert run_cli(["decompose", "--graph", "nope"]) == 1


def test_train_demo_writes_outputs(tmp_path, capsys):
    out = tmp_path / "run"
    code = run_cli(["train", "--synthetic", "demo", "--blocks", "2",
                    "--hidden-dim", "4", "--epochs", "5", "--lr", "0.1",
                    "--seed", "3", "--out", str(out)])
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "train"
    assert manifest["settings"]["seed"] == 3
    assert "numpy" in manifest["versions"]
    lines = (out / "metrics.jsonl").read_text().splitlines()
    assert len(lines) == 6  # 5 epochs + final evaluation entry
    for line in lines:
        row = json.loads(line)
        assert {"epoch", "loss", "train_acc", "test_acc",
                "success_prob"} <= set(row)
    csv_lines = (out / "metrics.csv").read_text().splitlines()
    assert csv_lines[0] == "epoch,loss,train_acc,test_acc"
    assert len(csv_lines) == 7
    checkpoint = json.loads((out / "checkpoint.json").read_text())
    assert checkpoint["epoch"] == 5
    assert len(checkpoint["theta"]) == 8  # 2 blocks x 4 phases on 2 qubits


def test_train_epochs_zero_emits_final_only(capsys):
    code = run_cli(["train", "--synthetic", "demo", "--blocks", "1",
                    "--hidden-dim", "4", "--epochs", "0", "--seed", "0"])
    assert code == 0
    out_lines = capsys.readouterr().out.splitlines()
    metric_rows = [json.loads(l) for l in out_lines if l.startswith("{")]
    assert len(metric_rows) == 1
    assert metric_rows[0]["epoch"] == 0


def test_train_missing_dataset_exits_two(capsys):
    assert run_cli(["train", "--dataset", "/nonexistent/prefix",
                    "--epochs", "1"]) == 2


def test_train_requires_source(capsys):
    assert run_cli(["train", "--epochs", "1"]) == 1


def test_train_reproducible_metrics(tmp_path):
    outs = []
    for name in ("r1", "r2"):
        out = tmp_path / name
        assert run_cli(["train", "--synthetic", "demo", "--blocks", "2",
                        "--hidden-dim", "4", "--epochs", "4", "--lr", "0.1",
                        "--seed", "7", "--out", str(out)]) == 0
        outs.append((out / "metrics.jsonl").read_text())
    assert outs[0] == outs[1]


def test_noise_sweep_rows_and_summary(tmp_path, capsys):
    out = tmp_path / "sweep"
    code = run_cli(["noise-sweep", "--synthetic",
                    "nodes=48,classes=3,seed=1", "--blocks", "1",
                    "--hidden-dim", "4", "--epochs", "3", "--lr", "0.05",
                    "--e-delta", "0.1", "--seeds", "0,1",
                    "--out", str(out)])
    assert code == 0
    rows = [json.loads(l) for l in
            (out / "sweep.jsonl").read_text().splitlines()]
    # one row per setting per seed: (one e_delta + ablation) x 2 seeds
    assert len(rows) == 4
    assert {r["seed"] for r in rows} == {0, 1}
    summary = json.loads((out / "summary.json").read_text())
    assert len(summary) == 2
    assert (out / "manifest.json").exists()


def test_noise_sweep_single_setting_no_ablation(tmp_path):
    out = tmp_path / "sweep1"
    code = run_cli(["noise-sweep", "--synthetic",
                    "nodes=48,classes=3,seed=1", "--blocks", "1",
                    "--hidden-dim", "4", "--epochs", "2", "--e-delta", "0.05",
                    "--seeds", "0", "--no-ablation", "--out", str(out)])
    assert code == 0
    rows = (out / "sweep.jsonl").read_text().splitlines()
    assert len(rows) == 1


def test_gradcheck_passes():
    assert run_cli(["gradcheck", "--samples", "3", "--blocks", "2",
                    "--seed", "1"]) == 0


def test_gradcheck_corrupted_shift_fails():
    assert run_cli(["gradcheck", "--samples", "2", "--seed", "1",
                    "--shift", str(np.pi / 3)]) == 1


def test_generate_demo_roundtrip(tmp_path, capsys):
    prefix = tmp_path / "demo"
    assert run_cli(["generate", "demo", "--out", str(prefix)]) == 0
    from qgcn.graphdata import load_cora
    ds = load_cora(str(prefix) + ".content", str(prefix) + ".cites")
    ref = demo_graph()
    assert ds.num_nodes == ref.num_nodes
    assert sorted(ds.edges) == sorted(ref.edges)
    np.testing.assert_allclose(ds.features, ref.features, atol=1e-6)


def test_generate_grid(tmp_path, capsys):
    out = tmp_path / "grid.csv"
    assert run_cli(["generate", "grid2d", "--n", "3",
                    "--out", str(out)]) == 0
    mat = np.loadtxt(out, delimiter=",")
    from qgcn.graphdata import grid_adjacency_2d
    np.testing.assert_allclose(mat, grid_adjacency_2d(3))


def test_generate_requires_out(capsys):
    assert run_cli(["generate", "demo"]) == 1


def test_config_file_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("epochs = 2\nblocks = 1\nhidden-dim = 4\n"
                   "# comment line\nlr = 0.1\n")
    out = tmp_path / "run"
    # --epochs on the command line overrides the config file's 2
    code = run_cli(["train", "--synthetic", "demo", "--config", str(cfg),
                    "--epochs", "3", "--seed", "0", "--out", str(out)])
    assert code == 0
    lines = (out / "metrics.jsonl").read_text().splitlines()
    assert len(lines) == 4  # 3 epochs + final, proving the flag won
    checkpoint = json.loads((out / "checkpoint.json").read_text())
    assert len(checkpoint["theta"]) == 4  # blocks=1 came from the config file


def test_config_file_missing_exits_two(capsys):
    assert run_cli(["train", "--synthetic", "demo",
                    "--config", "/nonexistent.cfg"]) == 2


def test_entry_point_subprocess():
    proc = subprocess.run(
        [sys.executable, "-m", "qgcn.cli", "decompose", "--graph", "demo",
         "--mode", "permutation"],
        capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0
    assert json.loads(proc.stdout.splitlines()[0])["terms"] == 4
