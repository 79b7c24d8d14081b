"""Command-line interface: decomposition, training, noise sweeps, gradient
checks, and synthetic graph generation.

Config precedence: command-line flags override --config file entries, which
override built-in defaults. The config file is flat ``key = value`` text with
``#`` comments; keys match the long flag names with dashes or underscores.

Exit codes: 0 success, 1 validation/assertion failure, 2 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import model as qm
from . import statevector as sv
from .decompose import Decomposition, pauli_decompose, permutation_decompose
from .graphdata import (GraphDataset, demo_adjacency_tilde, demo_graph,
                        grid_adjacency_1d, grid_adjacency_2d, load_cora,
                        normalize_adjacency, synthetic_citation)
from .lcu import assemble_lcu
from .nsga2 import SearchConfig, evaluate, search
from .train import (TrainConfig, TrainState, TrainingDivergence, build_model,
                    fit, model_forward, model_gradients, save_checkpoint)


def _read_config_file(path: str) -> dict:
    values = {}
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, val = line.split("=", 1)
            values[key.strip().replace("-", "_")] = val.strip()
    return values


def _merged(args: argparse.Namespace, key: str, default, cast=str):
    """flag > config file > default."""
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    cfg = getattr(args, "_config_values", {})
    if key in cfg:
        raw = cfg[key]
        if cast is bool:
            return raw.lower() in ("1", "true", "yes", "on")
        return cast(raw)
    return default


def _write_manifest(out_dir: Path, command: str, settings: dict):
    manifest = {
        "command": command,
        "settings": settings,
        "versions": {
            "qgcn": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)


def _load_graph_source(args) -> tuple[np.ndarray, str]:
    """Adjacency matrix (self-connected, unnormalized) for decompose."""
    source = _merged(args, "graph", "demo")
    if source == "demo":
        return demo_adjacency_tilde(), "demo"
    if source.startswith("grid1d:"):
        n = int(source.split(":", 1)[1])
        return grid_adjacency_1d(n), source
    if source.startswith("grid2d:"):
        n = int(source.split(":", 1)[1])
        return grid_adjacency_2d(n), source
    raise ValueError(f"unknown graph source {source!r} "
                     "(expected demo, grid1d:N or grid2d:N)")


def _load_dataset(args) -> GraphDataset:
    dataset = _merged(args, "dataset", None)
    if dataset is not None:
        prefix = Path(dataset)
        return load_cora(str(prefix) + ".content", str(prefix) + ".cites")
    synthetic = _merged(args, "synthetic", None)
    if synthetic == "demo":
        return demo_graph()
    if synthetic is not None:
        parts = dict(p.split("=") for p in synthetic.split(",") if "=" in p)
        return synthetic_citation(
            num_nodes=int(parts.get("nodes", 512)),
            num_features=int(parts.get("features", 64)),
            num_classes=int(parts.get("classes", 7)),
            seed=int(parts.get("seed", 0)))
    raise ValueError("no dataset: pass --dataset PREFIX or --synthetic SPEC")


def _pad_to_power_of_two(matrix: np.ndarray) -> np.ndarray:
    n = matrix.shape[0]
    size = 1
    while size < n:
        size *= 2
    if size == n:
        return matrix
    out = np.zeros((size, size))
    out[:n, :n] = matrix
    for i in range(n, size):
        out[i, i] = 1.0
    return out


def cmd_decompose(args) -> int:
    matrix, source = _load_graph_source(args)
    matrix = _pad_to_power_of_two(matrix)
    mode = _merged(args, "mode", "permutation")
    seed = _merged(args, "seed", 0, int)
    drop_tol = _merged(args, "drop_tol", 0.0, float)
    max_terms = _merged(args, "max_terms", 64, int)

    if mode == "pauli":
        decomp = pauli_decompose(matrix, drop_tol=drop_tol)
        front = [decomp]
    elif mode == "permutation":
        decomp = permutation_decompose(matrix, max_terms=max_terms)
        front = [decomp]
    elif mode == "nsga2":
        cfg = SearchConfig(population_size=_merged(args, "population", 64, int),
                           generations=_merged(args, "generations", 100, int),
                           mutation_rate=_merged(args, "mutation_rate", 0.1, float),
                           crossover_rate=_merged(args, "crossover_rate", 0.9, float),
                           seed=seed, max_terms=max_terms)
        front = search(matrix, cfg)
        if not front:
            raise ValueError("search returned an empty front")
        decomp = front[0]  # minimal residual, ties by gate cost
    else:
        raise ValueError(f"unknown mode {mode!r}")

    num_qubits = matrix.shape[0].bit_length() - 1
    ancillas = max((decomp.num_terms - 1).bit_length(), 0)
    layout = sv.RegisterLayout(ancillas, num_qubits, 0)
    plan = assemble_lcu(decomp, layout) if decomp.num_terms else None
    from .decompose import gate_complexity
    cost = sum(gate_complexity(t.circuit()) for t in decomp.terms)

    report = {
        "source": source,
        "mode": mode,
        "terms": decomp.num_terms,
        "residual_norm": decomp.residual_norm,
        "gate_cost": cost,
        "success_probability_estimate":
            plan.success_probability_estimate if plan else 0.0,
    }
    print(json.dumps(report))

    out = _merged(args, "out", None)
    if out:
        doc = decomp.to_json()
        if plan:
            doc["lcu"] = plan.to_json()
        if mode == "nsga2":
            doc["front"] = [
                {**d.to_json(),
                 "objectives": evaluate_front_entry(d)}
                for d in front]
        with open(out, "w", encoding="utf-8") as f:
            json.dump(doc, f)
        print(f"wrote {out}")
    return 0


def evaluate_front_entry(decomp: Decomposition) -> dict:
    from .decompose import gate_complexity
    cost = sum(gate_complexity(t.circuit()) for t in decomp.terms)
    return {"gate_cost": cost, "residual": decomp.residual_norm}


def _train_config(args, dataset: GraphDataset) -> TrainConfig:
    # defaults are the settings that converge across 1..14 blocks; plain
    # gradient descent oscillates at depth with larger steps
    return TrainConfig(
        blocks=_merged(args, "blocks", 10, int),
        hidden_dim=_merged(args, "hidden_dim", 16, int),
        learning_rate=_merged(args, "lr", 0.05, float),
        epochs=_merged(args, "epochs", 300, int),
        seed=_merged(args, "seed", 0, int),
        grad_mode=_merged(args, "grad_mode", "analytic"),
        freeze_classical=_merged(args, "freeze_classical", False, bool),
        use_classical=not _merged(args, "no_classical", False, bool),
        e_delta=_merged(args, "e_delta", 0.0, float),
        noise_seed=_merged(args, "noise_seed", 0, int),
        without_adjacency=_merged(args, "without_adjacency", False, bool),
        readout_gain=_merged(args, "readout_gain", None,
                             lambda s: None if s == "auto" else float(s)),
        init_phase_scale=_merged(args, "init_phase_scale", 0.02, float),
        threads=_merged(args, "threads", 1, int),
    )


def _run_training(dataset: GraphDataset, config: TrainConfig,
                  out_dir: Path | None, command: str,
                  metrics_sink=None) -> dict:
    model, state = build_model(dataset, config)
    stream = None
    if out_dir is not None:
        stream = open(out_dir / "metrics.jsonl", "a", encoding="utf-8")

    def emit(metrics):
        if metrics_sink is not None:
            metrics_sink(metrics)
        if stream is not None:
            stream.write(json.dumps(metrics) + "\n")
            stream.flush()
        else:
            print(json.dumps(metrics))

    try:
        state, history = fit(model, dataset, state, config, on_epoch=emit)
    finally:
        if stream is not None:
            stream.close()
    if out_dir is not None:
        save_checkpoint(out_dir / "checkpoint.json", state, history)
        with open(out_dir / "metrics.csv", "w", newline="",
                  encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["epoch", "loss", "train_acc", "test_acc"])
            for m in history:
                writer.writerow([m["epoch"], m["loss"],
                                 m["train_acc"], m["test_acc"]])
    return history[-1]


def cmd_train(args) -> int:
    dataset = _load_dataset(args)
    config = _train_config(args, dataset)
    out = _merged(args, "out", None)
    out_dir = None
    if out:
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_manifest(out_dir, "train", vars(config).copy()
                        | {"dataset": _merged(args, "dataset", None)
                           or _merged(args, "synthetic", "demo")})
    final = _run_training(dataset, config, out_dir, "train")
    print(f"final test accuracy: {final['test_acc']:.4f}")
    return 0


def cmd_noise_sweep(args) -> int:
    dataset = _load_dataset(args)
    e_deltas = [float(v) for v in
                _merged(args, "e_delta_list", "0.01,0.05,0.1,0.2").split(",")]
    seeds = [int(v) for v in _merged(args, "seeds", "0,1,2").split(",")]
    include_ablation = _merged(args, "ablation", True, bool)
    out = _merged(args, "out", None)
    out_dir = None
    rows_path = None
    if out:
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        rows_path = out_dir / "sweep.jsonl"
    settings = [("e_delta", e) for e in e_deltas]
    if include_ablation:
        settings.append(("without_adjacency", None))

    base = _train_config(args, dataset)
    if out_dir is not None:
        _write_manifest(out_dir, "noise-sweep",
                        vars(base).copy() | {"e_deltas": e_deltas,
                                             "seeds": seeds,
                                             "ablation": include_ablation})
    summary = []
    for kind, value in settings:
        accs = []
        for seed in seeds:
            cfg_kwargs = vars(base).copy()
            cfg_kwargs["seed"] = seed
            cfg_kwargs["noise_seed"] = seed
            if kind == "e_delta":
                cfg_kwargs["e_delta"] = value
            else:
                cfg_kwargs["e_delta"] = 0.0
                cfg_kwargs["without_adjacency"] = True
            cfg = TrainConfig(**cfg_kwargs)
            final = _run_training(dataset, cfg, None, "noise-sweep",
                                  metrics_sink=lambda m: None)
            row = {"setting": kind if kind != "e_delta" else f"e_delta={value}",
                   "e_delta": value if kind == "e_delta" else None,
                   "without_adjacency": kind == "without_adjacency",
                   "seed": seed, "test_acc": final["test_acc"],
                   "loss": final["loss"]}
            accs.append(final["test_acc"])
            line = json.dumps(row)
            if rows_path is not None:
                with open(rows_path, "a", encoding="utf-8") as f:
                    f.write(line + "\n")
            print(line)
        summary.append({"setting": kind if kind != "e_delta"
                        else f"e_delta={value}",
                        "mean_test_acc": float(np.mean(accs))})
    print(json.dumps({"summary": summary}))
    if out_dir is not None:
        with open(out_dir / "summary.json", "w", encoding="utf-8") as f:
            json.dump(summary, f, indent=2)
    return 0


def random_small_dataset(rng, num_nodes: int, num_feats: int) -> GraphDataset:
    """Random instance for gradient checks; both classes always present."""
    labels = rng.integers(0, 2, size=num_nodes)
    labels[0], labels[1] = 0, 1
    possible = [(i, j) for i in range(num_nodes) for j in range(i + 1, num_nodes)]
    edges = [e for e in possible if rng.random() < 0.4]
    features = rng.random((num_nodes, num_feats)) + 0.05
    mask = np.ones(num_nodes, dtype=bool)
    return GraphDataset(num_nodes=num_nodes, edges=edges, features=features,
                        labels=labels, train_mask=mask, test_mask=~mask)


def gradient_comparison(dataset: GraphDataset, blocks: int, seed: int,
                        shift: float = float(qm.PSR_SHIFT),
                        rtol: float = 1e-6, atol: float = 1e-9) -> dict:
    """Max scaled disagreement between psr/analytic/fd gradients.

    rel = |diff| / max(|fd|, atol/rtol), so deviations below atol pass even
    where the reference gradient vanishes.
    """
    rng = np.random.default_rng(seed)
    cfg = TrainConfig(blocks=blocks, hidden_dim=dataset.num_features,
                      use_classical=False, seed=seed, epochs=0)
    model, state = build_model(dataset, cfg)
    state.theta = rng.uniform(-np.pi / 2, np.pi / 2, state.theta.shape)
    cache = model_forward(model, dataset, state)
    g_analytic, _ = model_gradients(model, dataset, state, cache, "analytic")
    ctx = qm.LossContext(
        weights=qm.loss_weights(cache.exp_used, dataset.labels,
                                dataset.train_mask),
        gain=model.gain)
    n_q = model.layer.layout.node_qubits + model.layer.layout.dim_qubits
    input_state = sv.StateVector(n_q, cache.s0.astype(complex))
    g_psr = np.array([qm.psr_gradient(model.layer, input_state, ctx, tau,
                                      shift=shift)
                      for tau in range(model.layer.num_parameters)])
    eps = 1e-5
    g_fd = np.zeros_like(state.theta)
    for i in range(len(g_fd)):
        tp, tm = state.theta.copy(), state.theta.copy()
        tp[i] += eps
        tm[i] -= eps
        cp = model_forward(model, dataset, TrainState(tp, None, 0.0))
        cm = model_forward(model, dataset, TrainState(tm, None, 0.0))
        lp = qm.loss(cp.exp_used, dataset.labels, dataset.train_mask)
        lm = qm.loss(cm.exp_used, dataset.labels, dataset.train_mask)
        g_fd[i] = (lp - lm) / (2 * eps)
    floor = atol / rtol
    denom = np.maximum(np.abs(g_fd), floor)
    worst = {"rel": 0.0, "pair": None}
    for name, diff in (("psr-analytic", g_psr - g_analytic),
                       ("psr-fd", g_psr - g_fd),
                       ("analytic-fd", g_analytic - g_fd)):
        rel = float((np.abs(diff) / denom).max())
        if rel > worst["rel"]:
            worst = {"rel": rel, "pair": name}
    return worst


def cmd_gradcheck(args) -> int:
    seed = _merged(args, "seed", 0, int)
    blocks = _merged(args, "blocks", 2, int)
    samples = _merged(args, "samples", 8, int)
    shift = _merged(args, "shift", float(qm.PSR_SHIFT), float)
    tolerance = _merged(args, "tolerance", 1e-6, float)
    rng = np.random.default_rng(seed)
    worst = {"rel": 0.0}
    for trial in range(samples):
        num_nodes = int(rng.integers(3, 9))
        num_feats = int(rng.integers(2, 5))
        dataset = random_small_dataset(rng, num_nodes, num_feats)
        result = gradient_comparison(dataset, blocks, seed + trial,
                                     shift=shift, rtol=tolerance)
        if result["rel"] > worst["rel"]:
            worst = result | {"trial": trial, "nodes": num_nodes}
    print(json.dumps({"samples": samples, "worst": worst,
                      "tolerance": tolerance,
                      "pass": worst["rel"] < tolerance}))
    return 0 if worst["rel"] < tolerance else 1


def _write_dataset_files(dataset: GraphDataset, prefix: Path):
    ids = [f"n{i}" for i in range(dataset.num_nodes)]
    with open(str(prefix) + ".content", "w", encoding="utf-8") as f:
        for i in range(dataset.num_nodes):
            feats = "\t".join(str(int(v)) if v == int(v) else str(v)
                              for v in dataset.features[i])
            label = dataset.class_names[dataset.labels[i]] \
                if dataset.class_names else f"c{dataset.labels[i]}"
            f.write(f"{ids[i]}\t{feats}\t{label}\n")
    with open(str(prefix) + ".cites", "w", encoding="utf-8") as f:
        for a, b in dataset.edges:
            f.write(f"{ids[a]}\t{ids[b]}\n")


def cmd_generate(args) -> int:
    kind = args.kind
    out = _merged(args, "out", None)
    if out is None:
        raise ValueError("generate requires --out")
    n = _merged(args, "n", 8, int)
    if kind in ("grid1d", "grid2d"):
        matrix = grid_adjacency_1d(n) if kind == "grid1d" else grid_adjacency_2d(n)
        np.savetxt(out, matrix, fmt="%.1f", delimiter=",")
        print(f"wrote {out} ({matrix.shape[0]}x{matrix.shape[1]})")
        return 0
    if kind == "demo":
        dataset = demo_graph()
    elif kind == "synthetic":
        dataset = synthetic_citation(num_nodes=n,
                                     num_classes=_merged(args, "classes", 7, int),
                                     num_features=_merged(args, "features", 64, int),
                                     seed=_merged(args, "seed", 0, int))
    else:
        raise ValueError(f"unknown kind {kind!r}")
    _write_dataset_files(dataset, Path(out))
    print(f"wrote {out}.content and {out}.cites "
          f"({dataset.num_nodes} nodes, {len(dataset.edges)} edges)")
    return 0


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=None)
    parser.add_argument("--threads", type=int, default=None,
                        help="1 (default) for fully deterministic execution")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qgcn")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", help="decompose a graph adjacency")
    p.add_argument("--graph", default=None,
                   help="demo | grid1d:N | grid2d:N")
    p.add_argument("--mode", default=None,
                   choices=["pauli", "permutation", "nsga2"])
    p.add_argument("--drop-tol", dest="drop_tol", type=float, default=None)
    p.add_argument("--max-terms", dest="max_terms", type=int, default=None)
    p.add_argument("--population", type=int, default=None)
    p.add_argument("--generations", type=int, default=None)
    p.add_argument("--mutation-rate", dest="mutation_rate", type=float,
                   default=None)
    p.add_argument("--crossover-rate", dest="crossover_rate", type=float,
                   default=None)
    _add_common(p)
    p.set_defaults(func=cmd_decompose)

    for name, func in (("train", cmd_train), ("noise-sweep", cmd_noise_sweep)):
        p = sub.add_parser(name)
        p.add_argument("--dataset", default=None,
                       help="path prefix of .content/.cites files")
        p.add_argument("--synthetic", default=None,
                       help="'demo' or 'nodes=512,classes=7,seed=0'")
        p.add_argument("--blocks", type=int, default=None)
        p.add_argument("--hidden-dim", dest="hidden_dim", type=int,
                       default=None)
        p.add_argument("--lr", type=float, default=None)
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--grad-mode", dest="grad_mode", default=None,
                       choices=["analytic", "psr"])
        p.add_argument("--freeze-classical", dest="freeze_classical",
                       action="store_const", const=True, default=None)
        p.add_argument("--no-classical", dest="no_classical",
                       action="store_const", const=True, default=None)
        p.add_argument("--readout-gain", dest="readout_gain", default=None)
        p.add_argument("--init-phase-scale", dest="init_phase_scale",
                       type=float, default=None)
        p.add_argument("--noise-seed", dest="noise_seed", type=int,
                       default=None)
        if name == "train":
            p.add_argument("--e-delta", dest="e_delta", type=float,
                           default=None)
            p.add_argument("--without-adjacency", dest="without_adjacency",
                           action="store_const", const=True, default=None)
        else:
            p.add_argument("--e-delta", dest="e_delta_list", default=None,
                           help="comma-separated list")
            p.add_argument("--seeds", default=None,
                           help="comma-separated seed list")
            p.add_argument("--no-ablation", dest="ablation",
                           action="store_const", const=False, default=None)
        _add_common(p)
        p.set_defaults(func=func)

    p = sub.add_parser("gradcheck", help="compare psr/analytic/fd gradients")
    p.add_argument("--blocks", type=int, default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--shift", type=float, default=None,
                   help="override the parameter-shift offset (test hook)")
    p.add_argument("--tolerance", type=float, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("generate", help="emit synthetic graphs")
    p.add_argument("kind", choices=["demo", "grid1d", "grid2d", "synthetic"])
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--features", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_generate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args._config_values = {}
    if getattr(args, "config", None):
        try:
            args._config_values = _read_config_file(args.config)
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
    try:
        return args.func(args)
    except (OSError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, TrainingDivergence) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
