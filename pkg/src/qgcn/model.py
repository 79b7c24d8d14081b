"""Quantum graph-convolution layer: tunable rotation blocks, forward pass,
probability readout, loss, and exact gradients (adjoint and parameter-shift).

The layer applies the (approximated) adjacency to the node register, either
by simulating the assembled post-selected circuit ("circuit" engine) or by
applying the reconstructed operator directly ("dense" engine, the ideal
zero-residual shortcut used at scales where extra ancilla qubits would be
prohibitive). Both produce the same conditional state; tests pin equality.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse as sp

from . import statevector as sv
from .graphdata import NormalizedAdjacency
from .lcu import LcuPlan, run_plan

PSR_SHIFT = np.pi / 4


def block_phase_count(num_qubits: int) -> int:
    """Phases per block: one rotation per qubit plus a controlled-rotation
    ring, so 2q; a single-qubit block degenerates to a lone rotation."""
    return 1 if num_qubits == 1 else 2 * num_qubits


@dataclass
class PqcBlock:
    """One tunable block on the dimension register."""

    num_qubits: int
    phases: np.ndarray

    def __post_init__(self):
        expected = block_phase_count(self.num_qubits)
        self.phases = np.asarray(self.phases, dtype=float)
        if self.phases.shape != (expected,):
            raise ValueError(
                f"block on {self.num_qubits} qubits needs {expected} phases, "
                f"got {self.phases.shape}")


def pqc_block_circuit(block: PqcBlock, qubit_offset: int = 0) -> list[sv.GateOp]:
    """Gate list of one block: a rotation on every qubit, then a ring of
    controlled rotations (control i -> target (i+1) mod q)."""
    q = block.num_qubits
    gates = [sv.ry(block.phases[i], qubit_offset + i) for i in range(q)]
    if q >= 2:
        for i in range(q):
            gates.append(sv.ry(block.phases[q + i], qubit_offset + (i + 1) % q,
                               controls=((qubit_offset + i, 1),)))
    return gates


@dataclass
class ProgramGate:
    """A concrete gate plus the tunable phase it depends on (if any) and the
    chain factor d(angle)/d(phase)."""

    gate: sv.GateOp
    param: int | None = None
    chain: float = 0.0


@dataclass
class QgclQuantumLayer:
    """Adjacency stage plus tunable blocks on the dimension register.

    engine: "circuit" simulates the post-selected plan (requires `plan`);
    "dense" applies `node_operator` to the node register directly (None means
    the no-adjacency ablation). `node_operator` always holds the operator the
    adjacency stage realizes; gradients and oracles use it.
    """

    layout: sv.RegisterLayout
    blocks: list[PqcBlock]
    output_dim: int
    engine: str = "dense"
    plan: LcuPlan | None = None
    node_operator: np.ndarray | sp.spmatrix | None = None

    def __post_init__(self):
        if self.engine not in ("circuit", "dense"):
            raise ValueError(f"unknown engine {self.engine!r}")
        if self.engine == "circuit" and self.plan is None:
            raise ValueError("circuit engine requires an LCU plan")
        if self.output_dim > 2 ** self.layout.dim_qubits:
            raise ValueError("output_dim exceeds the dimension register")
        for b in self.blocks:
            if b.num_qubits != self.layout.dim_qubits:
                raise ValueError("block width must match the dimension register")

    @property
    def keep_qubits(self) -> int:
        """Dimension qubits kept for readout; the rest are traced out."""
        k = max(1, (self.output_dim - 1).bit_length()) if self.output_dim > 1 else 0
        return min(k, self.layout.dim_qubits) if self.layout.dim_qubits else 0

    @property
    def num_parameters(self) -> int:
        return sum(block_phase_count(b.num_qubits) for b in self.blocks)

    def get_theta(self) -> np.ndarray:
        return np.concatenate([b.phases for b in self.blocks]) if self.blocks \
            else np.zeros(0)

    def set_theta(self, theta: np.ndarray):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.num_parameters,):
            raise ValueError("theta length mismatch")
        pos = 0
        for b in self.blocks:
            n = block_phase_count(b.num_qubits)
            b.phases = theta[pos:pos + n].copy()
            pos += n


def q_program(layer: QgclQuantumLayer, rewrite_controlled: bool = False,
              theta: np.ndarray | None = None) -> list[ProgramGate]:
    """Flattened gate program of all blocks on the node+dim register.

    With rewrite_controlled each controlled rotation CRy(t) is expanded into
    Ry(t/2) . CX . Ry(-t/2) . CX so every tunable angle sits on a plain
    rotation (the form the shift rule applies to); chain factors are +-1/2.
    """
    theta = layer.get_theta() if theta is None else np.asarray(theta, dtype=float)
    offset = layer.layout.node_qubits  # dim register within the node+dim state
    program: list[ProgramGate] = []
    pos = 0
    for block in layer.blocks:
        q = block.num_qubits
        for i in range(q):
            program.append(ProgramGate(sv.ry(theta[pos + i], offset + i),
                                       param=pos + i, chain=1.0))
        if q >= 2:
            for i in range(q):
                tau = pos + q + i
                tgt = offset + (i + 1) % q
                ctl = ((offset + i, 1),)
                if rewrite_controlled:
                    program.append(ProgramGate(sv.ry(theta[tau] / 2, tgt),
                                               param=tau, chain=0.5))
                    program.append(ProgramGate(sv.x(tgt, ctl)))
                    program.append(ProgramGate(sv.ry(-theta[tau] / 2, tgt),
                                               param=tau, chain=-0.5))
                    program.append(ProgramGate(sv.x(tgt, ctl)))
                else:
                    program.append(ProgramGate(sv.ry(theta[tau], tgt, ctl),
                                               param=tau, chain=1.0))
        pos += block_phase_count(q)
    return program


def _apply_program(amplitudes: np.ndarray, num_qubits: int,
                   program: list[ProgramGate],
                   shift_entry: int | None = None,
                   shift: float = 0.0) -> np.ndarray:
    out = amplitudes
    for idx, entry in enumerate(program):
        gate = entry.gate
        if idx == shift_entry:
            gate = gate.shifted(shift)
        out = sv.apply_matrix(out, num_qubits, gate.target_matrix(),
                              gate.targets, gate.controls)
    return out


@dataclass
class QgclForward:
    """Intermediate states of one layer evaluation."""

    input_state: sv.StateVector
    pre_q: sv.StateVector        # conditional state after adjacency stage
    output: sv.StateVector       # after the tunable blocks
    success_prob: float


def _adjacency_stage(layer: QgclQuantumLayer,
                     state: sv.StateVector) -> tuple[np.ndarray, float]:
    """Apply the adjacency operator, returning the unnormalized node+dim
    vector and the ancilla-success probability."""
    lay = layer.layout
    n_pad, d_pad = 2 ** lay.node_qubits, 2 ** lay.dim_qubits
    if state.num_qubits != lay.node_qubits + lay.dim_qubits:
        raise ValueError("input state does not span the node+dim registers")
    if layer.engine == "circuit":
        _, selected, prob = run_plan(layer.plan, state, dim_qubits=lay.dim_qubits)
        return selected.amplitudes * np.sqrt(prob), prob
    if layer.node_operator is None:
        return state.amplitudes.copy(), 1.0
    mat = state.amplitudes.reshape(n_pad, d_pad)
    out = layer.node_operator @ mat
    out = np.asarray(out).reshape(-1)
    # For an operator with spectral radius <= 1 this is the success
    # probability of its ideal minimal block encoding.
    prob = float(np.sum(np.abs(out) ** 2))
    if prob < sv.ATOL_ZERO_PROB:
        raise ValueError("adjacency stage annihilated the state")
    return out, prob


def qgcl_forward(layer: QgclQuantumLayer, state: sv.StateVector) -> QgclForward:
    """Adjacency stage, post-selection, then the tunable blocks."""
    raw, prob = _adjacency_stage(layer, state)
    cond = raw / np.linalg.norm(raw)
    program = q_program(layer)
    out = _apply_program(cond, state.num_qubits, program)
    return QgclForward(input_state=state,
                       pre_q=sv.StateVector(state.num_qubits, cond),
                       output=sv.StateVector(state.num_qubits, out),
                       success_prob=prob)


def readout_probabilities(layer: QgclQuantumLayer,
                          output_state: sv.StateVector) -> np.ndarray:
    """(N_pad, output_dim) probabilities of the kept dimension bins, with the
    discarded (most significant) dimension qubits traced out."""
    lay = layer.layout
    n_pad = 2 ** lay.node_qubits
    keep = layer.keep_qubits
    discard = lay.dim_qubits - keep
    probs = np.abs(output_state.amplitudes) ** 2
    probs = probs.reshape(n_pad, 2 ** discard, 2 ** keep).sum(axis=1)
    return probs[:, :layer.output_dim]


def expectations(layer: QgclQuantumLayer, state: sv.StateVector,
                 conditional: bool = False) -> np.ndarray:
    """Readout matrix E[j, i]: probability of (ancilla success, node j, kept
    dimension i). By default joint probabilities (rows sum to the success
    probability less discarded mass); with conditional=True the post-selected
    (renormalized) probabilities are returned instead."""
    fw = qgcl_forward(layer, state)
    probs = readout_probabilities(layer, fw.output)
    return probs if conditional else probs * fw.success_prob


def loss(expectation_matrix: np.ndarray, labels: np.ndarray,
         mask: np.ndarray) -> float:
    """Masked mean softmax cross-entropy over the readout rows."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("mask selects no nodes")
    rows = np.asarray(expectation_matrix, dtype=float)[:len(mask)][mask]
    sm = _softmax(rows)
    picked = sm[np.arange(rows.shape[0]), np.asarray(labels)[mask]]
    return float(-np.mean(np.log(picked)))


def _softmax(rows: np.ndarray) -> np.ndarray:
    shifted = rows - rows.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def loss_weights(expectation_matrix: np.ndarray, labels: np.ndarray,
                 mask: np.ndarray) -> np.ndarray:
    """dL/dE: (softmax(E_j) - onehot(y_j)) / |mask| on masked rows, 0 off."""
    mask = np.asarray(mask, dtype=bool)
    count = int(mask.sum())
    if count == 0:
        raise ValueError("mask selects no nodes")
    e = np.asarray(expectation_matrix, dtype=float)
    w = np.zeros_like(e)
    sm = _softmax(e[:len(mask)][mask])
    sm[np.arange(sm.shape[0]), np.asarray(labels)[mask]] -= 1.0
    w[:len(mask)][mask] = sm / count
    return w


@dataclass
class LossContext:
    """Fixed contraction weights for gradient evaluation at the current
    parameters: weights[j, i] = (softmax(E_j) - onehot(y_j))_i / |mask|,
    already including any readout gain applied before the loss."""

    weights: np.ndarray  # (N_pad, output_dim)
    gain: float = 1.0


def _expand_bin_weights(layer: QgclQuantumLayer, weights: np.ndarray) -> np.ndarray:
    """Scatter per-(node, kept-dim) weights onto full amplitude bins."""
    lay = layer.layout
    n_pad = 2 ** lay.node_qubits
    keep = layer.keep_qubits
    discard = lay.dim_qubits - keep
    full = np.zeros((n_pad, 2 ** keep))
    full[:weights.shape[0], :weights.shape[1]] = weights
    full = np.repeat(full[:, None, :], 2 ** discard, axis=1)
    return full.reshape(-1)


def psr_gradient(layer: QgclQuantumLayer, state: sv.StateVector,
                 ctx: LossContext, tau: int,
                 shift: float = PSR_SHIFT) -> float:
    """dL/d(theta_tau) via the parameter-shift rule.

    Controlled rotations are first rewritten into plain rotations; each
    constituent angle is shifted by +-shift in a full evaluation and the
    probability differences contract against ctx.weights with the +-1/2
    chain factors. Conditional probabilities share the (theta-independent)
    post-selection normalization, so the rule stays exact.
    """
    if not 0 <= tau < layer.num_parameters:
        raise ValueError(f"parameter index {tau} out of range")
    raw, _ = _adjacency_stage(layer, state)
    cond = raw / np.linalg.norm(raw)
    program = q_program(layer, rewrite_controlled=True)
    total = 0.0
    n = state.num_qubits
    for idx, entry in enumerate(program):
        if entry.param != tau:
            continue
        plus = _apply_program(cond, n, program, shift_entry=idx, shift=+shift)
        minus = _apply_program(cond, n, program, shift_entry=idx, shift=-shift)
        e_plus = readout_probabilities(layer, sv.StateVector(n, plus))
        e_minus = readout_probabilities(layer, sv.StateVector(n, minus))
        d_exp = (e_plus - e_minus) * ctx.gain
        total += entry.chain * float(np.sum(ctx.weights * d_exp))
    return total


def analytic_theta_gradient(layer: QgclQuantumLayer, pre_q: sv.StateVector,
                            output: sv.StateVector,
                            ctx: LossContext) -> tuple[np.ndarray, np.ndarray]:
    """Exact dL/dtheta by an adjoint sweep over the block gates.

    Returns (grad_theta, grad_pre_q) where grad_pre_q is the real gradient of
    the loss with respect to the (normalized) state entering the blocks.
    """
    n = pre_q.num_qubits
    program = q_program(layer)
    w_bins = _expand_bin_weights(layer, ctx.weights * ctx.gain)
    psi = output.amplitudes.copy()
    lam = w_bins * psi
    grads = np.zeros(layer.num_parameters)
    for entry in reversed(program):
        gate = entry.gate
        mat = gate.target_matrix()
        psi = sv.apply_matrix(psi, n, mat.conj().T, gate.targets, gate.controls)
        if entry.param is not None:
            dmat = sv.ry_matrix_deriv(gate.angle) * entry.chain
            dpsi = sv.apply_matrix(psi, n, dmat, gate.targets, gate.controls,
                                   zero_unselected=True)
            grads[entry.param] += 2.0 * float(np.real(np.vdot(lam, dpsi)))
        lam = sv.apply_matrix(lam, n, mat.conj().T, gate.targets, gate.controls)
    grad_pre_q = 2.0 * np.real(lam)
    return grads, grad_pre_q


@dataclass
class NoisyAdjacency:
    """Perturbation recipe for the quantum-stage adjacency."""

    base: NormalizedAdjacency
    e_delta: float
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.e_delta <= 1.0:
            raise ValueError("e_delta must lie in [0, 1]")

    def materialize(self) -> NormalizedAdjacency:
        return perturb_adjacency(self.base, self.e_delta, self.seed)


def perturb_adjacency(adj: NormalizedAdjacency, e_delta: float,
                      seed: int) -> NormalizedAdjacency:
    """Each off-diagonal nonzero (edge) entry is, with probability e_delta,
    shifted by +-e_delta (sign uniform), symmetrically. Deterministic in seed;
    e_delta = 0 returns an identical copy."""
    if not 0.0 <= e_delta <= 1.0:
        raise ValueError("e_delta must lie in [0, 1]")
    matrix = adj.matrix.copy()
    if e_delta == 0.0:
        return NormalizedAdjacency(matrix=matrix, pad_count=adj.pad_count)
    rows, cols = np.nonzero(np.triu(matrix, k=1))
    rng = np.random.default_rng(seed)
    hit = rng.random(rows.size) < e_delta
    signs = rng.choice((-1.0, 1.0), size=rows.size)
    delta = np.where(hit, signs * e_delta, 0.0)
    matrix[rows, cols] += delta
    matrix[cols, rows] += delta
    return NormalizedAdjacency(matrix=matrix, pad_count=adj.pad_count)
