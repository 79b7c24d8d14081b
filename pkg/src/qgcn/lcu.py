"""Post-selected linear-combination-of-unitaries circuit assembly.

Pipeline: prepare the ancilla register with a unitary whose first column is
the normalized signed weight vector, fan out each term circuit controlled on
its ancilla basis state, recombine with H on every ancilla, and post-select
the ancilla on |0...0>. The surviving node-register operator is
sum_k h_k U_k / (||h||_2 * sqrt(2^a)); the scale is tracked numerically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import statevector as sv
from .decompose import Decomposition


def v_kappa(kappa: float) -> sv.GateOp:
    """Single-qubit two-branch preparation [[sqrt(k/(k+1)), -1/sqrt(k+1)],
    [1/sqrt(k+1), sqrt(k/(k+1))]]."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    c = np.sqrt(kappa / (kappa + 1.0))
    s = 1.0 / np.sqrt(kappa + 1.0)
    return sv.unitary(np.array([[c, -s], [s, c]]), targets=(0,))


def build_prep_operator(weights, ancilla_count: int) -> np.ndarray:
    """Unitary whose first column is the weight vector, zero-padded to 2^a and
    normalized with signs preserved; remaining columns come from Gram-Schmidt
    against the standard basis, skipping dependent vectors."""
    h = np.asarray(weights, dtype=float)
    dim = 2 ** ancilla_count
    if h.size > dim:
        raise ValueError(f"{h.size} weights do not fit {ancilla_count} ancillas")
    norm = np.linalg.norm(h)
    if norm == 0:
        raise ValueError("weight vector must be nonzero")
    first = np.zeros(dim)
    first[:h.size] = h / norm
    columns = [first]
    for i in range(dim):
        if len(columns) == dim:
            break
        v = np.zeros(dim)
        v[i] = 1.0
        for c in columns:
            v = v - np.dot(c, v) * c
        n = np.linalg.norm(v)
        if n > 1e-12:
            columns.append(v / n)
    if len(columns) != dim:
        raise RuntimeError("Gram-Schmidt completion failed")
    return np.column_stack(columns)


@dataclass
class LcuPlan:
    """Assembled plan: ancilla preparation, controlled terms, and bookkeeping.

    scale = ||h||_2 * sqrt(2^a); with zero residual the post-selected operator
    equals target / scale.
    """

    ancilla_count: int
    prep: np.ndarray
    controlled_terms: list[tuple[int, list[sv.GateOp]]]
    node_qubits: int
    weight_norm: float
    success_probability_estimate: float = 0.0

    @property
    def scale(self) -> float:
        return self.weight_norm * np.sqrt(2 ** self.ancilla_count)

    def to_json(self) -> dict:
        return {"ancilla_count": self.ancilla_count,
                "prep_first_column": self.prep[:, 0].tolist(),
                "scale": self.scale,
                "success_probability_estimate": self.success_probability_estimate}


def _ancilla_controls(index: int, ancilla_count: int) -> tuple[tuple[int, int], ...]:
    # ancilla qubit 0 is the most significant bit of the branch index
    return tuple((q, (index >> (ancilla_count - 1 - q)) & 1)
                 for q in range(ancilla_count))


def assemble_lcu(decomp: Decomposition, layout: sv.RegisterLayout) -> LcuPlan:
    """Build the plan for a decomposition on the given register stack."""
    m = decomp.num_terms
    if m < 1:
        raise ValueError("decomposition needs at least one term")
    a = layout.ancilla_qubits
    if m > 2 ** a:
        raise ValueError(f"{m} terms exceed {a} ancilla qubits")
    weights = decomp.weights
    prep = build_prep_operator(weights, a)
    controlled = [(k, term.circuit()) for k, term in enumerate(decomp.terms)]
    plan = LcuPlan(ancilla_count=a, prep=prep, controlled_terms=controlled,
                   node_qubits=layout.node_qubits,
                   weight_norm=float(np.linalg.norm(weights)))
    uniform = sv.from_amplitudes(
        np.full(2 ** layout.node_qubits, 1.0 / np.sqrt(2 ** layout.node_qubits)))
    plan.success_probability_estimate = success_probability(plan, uniform)
    return plan


def plan_gates(plan: LcuPlan, dim_qubits: int = 0) -> list[sv.GateOp]:
    """Full-register gate list: prep on ancillas, controlled terms on the node
    register, then H on every ancilla. Node-register gates are shifted past
    the ancillas; dimension qubits (if any) are bystanders."""
    a = plan.ancilla_count
    gates: list[sv.GateOp] = []
    if a > 0:
        gates.append(sv.unitary(plan.prep, targets=tuple(range(a))))
    for index, circuit in plan.controlled_terms:
        anc = _ancilla_controls(index, a)
        for g in circuit:
            gates.append(sv.GateOp(
                g.kind,
                tuple(t + a for t in g.targets),
                anc + tuple((q + a, p) for q, p in g.controls),
                angle=g.angle, matrix=g.matrix))
    for q in range(a):
        gates.append(sv.h(q))
    return gates


def run_plan(plan: LcuPlan, state: sv.StateVector,
             dim_qubits: int = 0) -> tuple[sv.StateVector, sv.StateVector, float]:
    """Run the plan on a node(+dim) register state.

    Returns (joint state after recombination, post-selected state, success
    probability). Raises on zero success probability.
    """
    a = plan.ancilla_count
    expected = plan.node_qubits + dim_qubits
    if state.num_qubits != expected:
        raise ValueError(f"state has {state.num_qubits} qubits, plan needs {expected}")
    joint_amps = np.zeros(2 ** (a + expected), dtype=complex)
    joint_amps[:state.dim] = state.amplitudes  # ancilla |0...0>
    joint = sv.StateVector(a + expected, joint_amps)
    joint = sv.apply_circuit(joint, plan_gates(plan, dim_qubits))
    if a == 0:
        return joint, joint, 1.0
    selected, prob = sv.postselect(joint, list(range(a)), [0] * a)
    return joint, selected, prob


def success_probability(plan: LcuPlan, state: sv.StateVector,
                        dim_qubits: int = 0) -> float:
    """Exact probability of reading the ancillas as |0...0>."""
    a = plan.ancilla_count
    expected = plan.node_qubits + dim_qubits
    if state.num_qubits != expected:
        raise ValueError(f"state has {state.num_qubits} qubits, plan needs {expected}")
    joint_amps = np.zeros(2 ** (a + expected), dtype=complex)
    joint_amps[:state.dim] = state.amplitudes
    joint = sv.StateVector(a + expected, joint_amps)
    joint = sv.apply_circuit(joint, plan_gates(plan, dim_qubits))
    block = joint.amplitudes[:state.dim]
    return float(np.sum(np.abs(block) ** 2))


def postselected_operator(plan: LcuPlan) -> np.ndarray:
    """Node-register operator extracted column-by-column from basis inputs,
    including the 1/scale factor (no renormalization)."""
    dim = 2 ** plan.node_qubits
    out = np.empty((dim, dim), dtype=complex)
    for col in range(dim):
        joint, _, _ = _run_unchecked(plan, sv.basis_state(plan.node_qubits, col))
        out[:, col] = joint.amplitudes[:dim]
    return out


def _run_unchecked(plan: LcuPlan, state: sv.StateVector):
    """run_plan without the zero-probability guard (columns may vanish)."""
    a = plan.ancilla_count
    joint_amps = np.zeros(2 ** (a + state.num_qubits), dtype=complex)
    joint_amps[:state.dim] = state.amplitudes
    joint = sv.StateVector(a + state.num_qubits, joint_amps)
    joint = sv.apply_circuit(joint, plan_gates(plan))
    return joint, None, None
