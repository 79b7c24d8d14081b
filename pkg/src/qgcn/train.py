"""Hybrid two-layer model (classical graph convolution feeding the quantum
layer) with full-batch gradient-descent training."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import sparse as sp

from . import model as qm
from . import statevector as sv
from .graphdata import (GraphDataset, NormalizedAdjacency, amplitude_encode,
                        next_power_of_two, normalize_adjacency, pad_features)
from .lcu import assemble_lcu
from .decompose import Decomposition


class TrainingDivergence(RuntimeError):
    """Loss became NaN/Inf; carries the offending epoch in args."""


@dataclass
class TrainConfig:
    """Settings for one training run."""

    blocks: int = 10
    hidden_dim: int = 16
    learning_rate: float = 0.2
    epochs: int = 200
    seed: int = 0
    grad_mode: str = "analytic"      # "analytic" | "psr"
    freeze_classical: bool = False
    use_classical: bool = True       # False: amplitude-encode raw features
    e_delta: float = 0.0
    noise_seed: int = 0
    without_adjacency: bool = False
    engine: str = "dense"            # "dense" | "circuit"
    readout_gain: float | None = None  # None: N_pad * D_pad
    init_phase_scale: float = np.pi / 4
    threads: int = 1                 # >1 parallelizes the psr shift loop

    def __post_init__(self):
        if self.grad_mode not in ("analytic", "psr"):
            raise ValueError(f"unknown grad mode {self.grad_mode!r}")
        if self.engine not in ("dense", "circuit"):
            raise ValueError(f"unknown engine {self.engine!r}")
        if self.epochs < 0 or self.blocks < 1 or self.hidden_dim < 1:
            raise ValueError("epochs, blocks and hidden_dim must be positive")
        if not 0.0 <= self.e_delta <= 1.0:
            raise ValueError("e_delta must lie in [0, 1]")


@dataclass
class QgcnModel:
    """Model structure; tunable parameters live in TrainState."""

    layer: qm.QgclQuantumLayer
    adjacency: NormalizedAdjacency          # clean, classical-stage view
    gain: float
    num_classes: int
    use_classical: bool
    ax_cache: np.ndarray | None = None      # A_hat[:N,:N] @ X, fixed per run

    @property
    def node_pad(self) -> int:
        return 2 ** self.layer.layout.node_qubits

    @property
    def dim_pad(self) -> int:
        return 2 ** self.layer.layout.dim_qubits


@dataclass
class TrainState:
    """Tunable parameters plus bookkeeping."""

    theta: np.ndarray
    weight: np.ndarray | None
    learning_rate: float
    epoch: int = 0
    rng_seed: int = 0

    def to_json(self) -> dict:
        return {"epoch": self.epoch,
                "theta": self.theta.tolist(),
                "weight": None if self.weight is None else self.weight.tolist(),
                "learning_rate": self.learning_rate,
                "seed": self.rng_seed}

    @staticmethod
    def from_json(doc: dict) -> "TrainState":
        w = doc.get("weight")
        return TrainState(theta=np.array(doc["theta"], dtype=float),
                          weight=None if w is None else np.array(w, dtype=float),
                          learning_rate=doc["learning_rate"],
                          epoch=doc["epoch"], rng_seed=doc["seed"])


def build_model(dataset: GraphDataset, config: TrainConfig,
                decomposition: Decomposition | None = None
                ) -> tuple[QgcnModel, TrainState]:
    """Assemble layer, adjacency operators and seeded initial parameters."""
    adj = normalize_adjacency(dataset)
    node_qubits = adj.size.bit_length() - 1
    if config.use_classical:
        d_pad = next_power_of_two(config.hidden_dim)
    else:
        d_pad = next_power_of_two(dataset.num_features)
    dim_qubits = d_pad.bit_length() - 1

    q_adj = qm.perturb_adjacency(adj, config.e_delta, config.noise_seed) \
        if config.e_delta > 0 else adj
    plan = None
    ancilla = 0
    if config.without_adjacency:
        node_operator = None
    elif config.engine == "circuit":
        if decomposition is None:
            raise ValueError("circuit engine requires a decomposition")
        node_operator = sum(t.weight * t.dense().real for t in decomposition.terms)
        ancilla = (decomposition.num_terms - 1).bit_length()
        layout = sv.RegisterLayout(ancilla, node_qubits, dim_qubits)
        plan = assemble_lcu(decomposition, layout)
    else:
        node_operator = sp.csr_matrix(q_adj.matrix)

    layout = sv.RegisterLayout(ancilla, node_qubits, dim_qubits)
    rng = np.random.default_rng(config.seed)
    blocks = [qm.PqcBlock(dim_qubits,
                          rng.uniform(-config.init_phase_scale,
                                      config.init_phase_scale,
                                      qm.block_phase_count(dim_qubits)))
              for _ in range(config.blocks)]
    layer = qm.QgclQuantumLayer(layout=layout, blocks=blocks,
                                output_dim=dataset.num_classes,
                                engine=config.engine, plan=plan,
                                node_operator=node_operator)

    weight = None
    ax_cache = None
    if config.use_classical:
        d0 = dataset.num_features
        limit = np.sqrt(6.0 / (d0 + config.hidden_dim))
        weight = rng.uniform(-limit, limit, (d0, config.hidden_dim))
        ax_cache = adj.real_block() @ dataset.features

    gain = config.readout_gain
    if gain is None:
        gain = float(2 ** node_qubits * d_pad)
    model = QgcnModel(layer=layer, adjacency=adj, gain=gain,
                      num_classes=dataset.num_classes,
                      use_classical=config.use_classical,
                      ax_cache=ax_cache)
    state = TrainState(theta=layer.get_theta(), weight=weight,
                       learning_rate=config.learning_rate,
                       rng_seed=config.seed)
    return model, state


@dataclass
class ForwardCache:
    """Everything the backward pass needs from one forward evaluation."""

    hidden_pre: np.ndarray | None
    hidden: np.ndarray | None
    encode_norm: float
    s0: np.ndarray
    pre_q: sv.StateVector
    output: sv.StateVector
    success_prob: float
    exp_cond: np.ndarray
    exp_used: np.ndarray


def model_forward(model: QgcnModel, dataset: GraphDataset,
                  state: TrainState) -> ForwardCache:
    model.layer.set_theta(state.theta)
    if model.use_classical:
        hidden_pre = model.ax_cache @ state.weight
        hidden = np.maximum(hidden_pre, 0.0)
        feats = hidden
    else:
        hidden_pre = hidden = None
        feats = dataset.features
    padded = pad_features(feats, model.node_pad, model.dim_pad)
    norm = float(np.linalg.norm(padded))
    if norm == 0:
        raise TrainingDivergence("encoded features are all zero")
    s0 = (padded / norm).reshape(-1)
    input_state = sv.StateVector(model.layer.layout.node_qubits
                                 + model.layer.layout.dim_qubits,
                                 s0.astype(complex))
    fw = qm.qgcl_forward(model.layer, input_state)
    exp_cond = qm.readout_probabilities(model.layer, fw.output)
    return ForwardCache(hidden_pre=hidden_pre, hidden=hidden,
                        encode_norm=norm, s0=s0, pre_q=fw.pre_q,
                        output=fw.output, success_prob=fw.success_prob,
                        exp_cond=exp_cond, exp_used=exp_cond * model.gain)


def _normalization_backward(grad_unit: np.ndarray, unit: np.ndarray,
                            norm: float) -> np.ndarray:
    """Gradient through v -> v/||v|| given the unit vector and ||v||."""
    return (grad_unit - unit * float(unit @ grad_unit)) / norm


def model_gradients(model: QgcnModel, dataset: GraphDataset,
                    state: TrainState, cache: ForwardCache,
                    grad_mode: str = "analytic",
                    freeze_classical: bool = False,
                    threads: int = 1) -> tuple[np.ndarray, np.ndarray | None]:
    """(dL/dtheta, dL/dW). The classical gradient is always computed
    analytically from the simulated state; theta follows grad_mode."""
    ctx = qm.LossContext(
        weights=qm.loss_weights(cache.exp_used, dataset.labels,
                                dataset.train_mask),
        gain=model.gain)
    grad_theta, grad_pre_q = qm.analytic_theta_gradient(
        model.layer, cache.pre_q, cache.output, ctx)
    if grad_mode == "psr":
        input_state = sv.StateVector(cache.pre_q.num_qubits,
                                     cache.s0.astype(complex))
        taus = range(model.layer.num_parameters)
        if threads > 1:
            # shift evaluations are independent; indexed assembly keeps the
            # result identical to the sequential order
            from concurrent.futures import ThreadPoolExecutor
            with ThreadPoolExecutor(max_workers=threads) as pool:
                grad_theta = np.array(list(pool.map(
                    lambda tau: qm.psr_gradient(model.layer, input_state,
                                                ctx, tau), taus)))
        else:
            grad_theta = np.array([
                qm.psr_gradient(model.layer, input_state, ctx, tau)
                for tau in taus])

    grad_weight = None
    if model.use_classical and not freeze_classical:
        pre_q = np.real(cache.pre_q.amplitudes)
        # ||A s0||: the circuit engine's success probability carries the
        # 1/scale^2 of the block encoding, which must be undone so the
        # normalization backward pairs with the unscaled node_operator.
        s1_norm = np.sqrt(cache.success_prob)
        if model.layer.engine == "circuit":
            s1_norm *= model.layer.plan.scale
        g1 = _normalization_backward(grad_pre_q, pre_q, s1_norm)
        g1_mat = g1.reshape(model.node_pad, model.dim_pad)
        if model.layer.node_operator is None:
            g0_mat = g1_mat
        else:
            g0_mat = np.asarray(model.layer.node_operator.T @ g1_mat)
        g0 = g0_mat.reshape(-1)
        gv = _normalization_backward(g0, cache.s0, cache.encode_norm)
        n, hid = dataset.num_nodes, cache.hidden.shape[1]
        grad_hidden = gv.reshape(model.node_pad, model.dim_pad)[:n, :hid]
        grad_pre = grad_hidden * (cache.hidden_pre > 0)
        grad_weight = model.ax_cache.T @ grad_pre
    return grad_theta, grad_weight


def accuracy(expectation_matrix: np.ndarray, labels: np.ndarray,
             mask: np.ndarray) -> float:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return float("nan")
    pred = np.argmax(expectation_matrix[:len(mask)], axis=1)
    return float(np.mean(pred[mask] == labels[mask]))


def predict(model: QgcnModel, dataset: GraphDataset,
            state: TrainState) -> np.ndarray:
    """Class per node: argmax of the readout row, ties to the lowest index."""
    cache = model_forward(model, dataset, state)
    return np.argmax(cache.exp_cond[:dataset.num_nodes], axis=1)


def train_epoch(model: QgcnModel, dataset: GraphDataset, state: TrainState,
                grad_mode: str = "analytic",
                freeze_classical: bool = False,
                threads: int = 1) -> tuple[TrainState, dict]:
    """One full-batch gradient step; returns the new state and metrics."""
    cache = model_forward(model, dataset, state)
    train_loss = qm.loss(cache.exp_used, dataset.labels, dataset.train_mask)
    if not np.isfinite(train_loss):
        raise TrainingDivergence(f"loss diverged at epoch {state.epoch}: "
                                 f"{train_loss}")
    metrics = {
        "epoch": state.epoch,
        "loss": train_loss,
        "train_acc": accuracy(cache.exp_cond, dataset.labels, dataset.train_mask),
        "test_acc": accuracy(cache.exp_cond, dataset.labels, dataset.test_mask),
        "success_prob": cache.success_prob,
    }
    grad_theta, grad_weight = model_gradients(
        model, dataset, state, cache, grad_mode, freeze_classical, threads)
    new_weight = state.weight
    if grad_weight is not None:
        new_weight = state.weight - state.learning_rate * grad_weight
    new_state = TrainState(theta=state.theta - state.learning_rate * grad_theta,
                           weight=new_weight,
                           learning_rate=state.learning_rate,
                           epoch=state.epoch + 1,
                           rng_seed=state.rng_seed)
    return new_state, metrics


def fit(model: QgcnModel, dataset: GraphDataset, state: TrainState,
        config: TrainConfig, on_epoch=None) -> tuple[TrainState, list[dict]]:
    """Run config.epochs steps; emits one metrics dict per epoch plus a final
    evaluation-only entry."""
    history = []
    for _ in range(config.epochs):
        state, metrics = train_epoch(model, dataset, state,
                                     grad_mode=config.grad_mode,
                                     freeze_classical=config.freeze_classical,
                                     threads=config.threads)
        history.append(metrics)
        if on_epoch is not None:
            on_epoch(metrics)
    cache = model_forward(model, dataset, state)
    final = {
        "epoch": state.epoch,
        "loss": qm.loss(cache.exp_used, dataset.labels, dataset.train_mask),
        "train_acc": accuracy(cache.exp_cond, dataset.labels, dataset.train_mask),
        "test_acc": accuracy(cache.exp_cond, dataset.labels, dataset.test_mask),
        "success_prob": cache.success_prob,
    }
    history.append(final)
    if on_epoch is not None:
        on_epoch(final)
    return state, history


def save_checkpoint(path, state: TrainState, history: list[dict]):
    doc = state.to_json()
    doc["metrics"] = history
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f)


def load_checkpoint(path) -> tuple[TrainState, list[dict]]:
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    return TrainState.from_json(doc), doc.get("metrics", [])
