"""Dense complex statevector simulation with controlled gates and post-selection.

Qubit ordering is big-endian: qubit 0 is the most significant bit of the
basis-state index. Register stacks follow ancilla (most significant), then
node, then dimension qubits.

Rotation convention: ``ry(theta)`` implements exp(-i*theta*Y), the full-angle
convention, so Ry(theta)|0> = cos(theta)|0> + sin(theta)|1>. This is half the
angle of the Ry found in most circuit toolkits; the matching parameter-shift
offset is pi/4, not pi/2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ATOL_UNITARY = 1e-10
ATOL_ZERO_PROB = 1e-14

_SINGLE = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
    "h": np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2),
}


def ry_matrix(theta: float) -> np.ndarray:
    """Matrix of exp(-i*theta*Y) = [[cos, -sin], [sin, cos]]."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]], dtype=complex)


def ry_matrix_deriv(theta: float) -> np.ndarray:
    """d/dtheta of ry_matrix(theta)."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[-s, -c], [c, -s]], dtype=complex)


@dataclass(frozen=True, eq=False)
class GateOp:
    """A gate acting on target qubits, optionally conditioned on controls.

    controls is a tuple of (qubit, polarity) pairs; polarity 0 means the gate
    fires when that qubit is |0>.
    """

    kind: str  # "x" | "y" | "z" | "h" | "ry" | "unitary"
    targets: tuple[int, ...]
    controls: tuple[tuple[int, int], ...] = ()
    angle: float | None = None
    matrix: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("x", "y", "z", "h", "ry", "unitary"):
            raise ValueError(f"unknown gate kind {self.kind!r}")
        tset = set(self.targets)
        cset = {q for q, _ in self.controls}
        if len(tset) != len(self.targets):
            raise ValueError("duplicate target qubits")
        if tset & cset:
            raise ValueError("targets and controls must be disjoint")
        for _, pol in self.controls:
            if pol not in (0, 1):
                raise ValueError("control polarity must be 0 or 1")
        if self.kind == "ry" and self.angle is None:
            raise ValueError("ry gate requires an angle")
        if self.kind == "unitary":
            m = self.matrix
            dim = 2 ** len(self.targets)
            if m is None or m.shape != (dim, dim):
                raise ValueError("unitary matrix shape must match target count")
            err = np.abs(m.conj().T @ m - np.eye(dim)).max()
            if err > ATOL_UNITARY:
                raise ValueError(f"matrix is not unitary (deviation {err:.3e})")

    def target_matrix(self) -> np.ndarray:
        """The 2^k x 2^k matrix applied on the targets when controls fire."""
        if self.kind == "ry":
            return ry_matrix(self.angle)
        if self.kind == "unitary":
            return self.matrix
        return _SINGLE[self.kind]

    def shifted(self, delta: float) -> "GateOp":
        """Copy of a ry gate with the angle shifted by delta."""
        if self.kind != "ry":
            raise ValueError("only ry gates carry a shiftable angle")
        return GateOp("ry", self.targets, self.controls, self.angle + delta)


def x(target: int, controls=()) -> GateOp:
    return GateOp("x", (target,), tuple(controls))


def y(target: int, controls=()) -> GateOp:
    return GateOp("y", (target,), tuple(controls))


def z(target: int, controls=()) -> GateOp:
    return GateOp("z", (target,), tuple(controls))


def h(target: int, controls=()) -> GateOp:
    return GateOp("h", (target,), tuple(controls))


def ry(theta: float, target: int, controls=()) -> GateOp:
    return GateOp("ry", (target,), tuple(controls), angle=float(theta))


def unitary(matrix: np.ndarray, targets, controls=()) -> GateOp:
    targets = tuple(targets)
    return GateOp("unitary", targets, tuple(controls),
                  matrix=np.asarray(matrix, dtype=complex))


@dataclass(frozen=True)
class StateVector:
    """Immutable amplitudes of an n-qubit register (length 2^n)."""

    num_qubits: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (2 ** self.num_qubits,):
            raise ValueError("amplitude length must be 2^num_qubits")
        amps = amps.copy()
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return 2 ** self.num_qubits

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


def zero_state(num_qubits: int) -> StateVector:
    amps = np.zeros(2 ** num_qubits, dtype=complex)
    amps[0] = 1.0
    return StateVector(num_qubits, amps)


def basis_state(num_qubits: int, index: int) -> StateVector:
    amps = np.zeros(2 ** num_qubits, dtype=complex)
    amps[index] = 1.0
    return StateVector(num_qubits, amps)


def from_amplitudes(amplitudes) -> StateVector:
    amps = np.asarray(amplitudes, dtype=complex)
    n = int(np.log2(len(amps)))
    if 2 ** n != len(amps):
        raise ValueError("amplitude length must be a power of two")
    return StateVector(n, amps)


def _check_qubits(num_qubits: int, op: GateOp):
    for q in op.targets + tuple(q for q, _ in op.controls):
        if not 0 <= q < num_qubits:
            raise ValueError(f"qubit index {q} out of range for {num_qubits} qubits")


def apply_matrix(amplitudes: np.ndarray, num_qubits: int, matrix: np.ndarray,
                 targets, controls=(), zero_unselected: bool = False) -> np.ndarray:
    """Apply a 2^k matrix on target qubits within the control-selected subspace.

    With zero_unselected the unselected control branches are zeroed instead of
    left untouched; that turns the result into P_ctrl (M_t) psi, which is what
    gate-parameter derivatives of controlled rotations need.
    """
    tensor = amplitudes.reshape((2,) * num_qubits)
    ctrl_axes = [q for q, _ in controls]
    tgt_axes = list(targets)
    rest = [a for a in range(num_qubits) if a not in ctrl_axes and a not in tgt_axes]
    perm = ctrl_axes + tgt_axes + rest
    moved = np.transpose(tensor, perm)
    sel = tuple(pol for _, pol in controls)
    block = moved[sel]
    k = len(targets)
    updated = (matrix @ block.reshape(2 ** k, -1)).reshape(block.shape)
    if zero_unselected:
        out = np.zeros_like(moved)
    else:
        out = moved.copy()
    out[sel] = updated
    return np.transpose(out, np.argsort(perm)).reshape(-1)


def apply_gate(state: StateVector, op: GateOp) -> StateVector:
    """Return U|psi> for the full-register embedding of op."""
    _check_qubits(state.num_qubits, op)
    new = apply_matrix(state.amplitudes, state.num_qubits, op.target_matrix(),
                       op.targets, op.controls)
    return StateVector(state.num_qubits, new)


def apply_circuit(state: StateVector, ops) -> StateVector:
    """Left-to-right composition of gates."""
    for op in ops:
        state = apply_gate(state, op)
    return state


def probabilities(state: StateVector) -> np.ndarray:
    """Measurement probabilities |amplitude_i|^2 for every basis index."""
    return np.abs(state.amplitudes) ** 2


def postselect(state: StateVector, qubits, outcome) -> tuple[StateVector, float]:
    """Project onto the given bit values of `qubits` and renormalize.

    Returns the state on the remaining qubits and the projection probability.
    Raises ValueError when the outcome has (numerically) zero probability.
    """
    qubits = list(qubits)
    bits = [int(b) for b in outcome]
    if len(bits) != len(qubits):
        raise ValueError("outcome length must match qubit count")
    if len(set(qubits)) != len(qubits):
        raise ValueError("duplicate qubits in postselection")
    for q in qubits:
        if not 0 <= q < state.num_qubits:
            raise ValueError(f"qubit index {q} out of range")
    tensor = state.amplitudes.reshape((2,) * state.num_qubits)
    rest = [a for a in range(state.num_qubits) if a not in qubits]
    moved = np.transpose(tensor, qubits + rest)
    sub = moved[tuple(bits)].reshape(-1)
    prob = float(np.sum(np.abs(sub) ** 2))
    if prob < ATOL_ZERO_PROB:
        raise ValueError(f"post-selection outcome has probability {prob:.3e}")
    return StateVector(len(rest), sub / np.sqrt(prob)), prob


def circuit_matrix(ops, num_qubits: int) -> np.ndarray:
    """Dense matrix of a circuit, built column-by-column from basis inputs."""
    dim = 2 ** num_qubits
    mat = np.empty((dim, dim), dtype=complex)
    for col in range(dim):
        mat[:, col] = apply_circuit(basis_state(num_qubits, col), ops).amplitudes
    return mat


@dataclass(frozen=True)
class RegisterLayout:
    """Qubit counts for the ancilla / node / dimension register stack.

    Ancilla qubits occupy the most significant index positions, then node,
    then dimension, so a full-register basis index decomposes as
    ((anc * 2^node_qubits) + node) * 2^dim_qubits + dim.
    """

    ancilla_qubits: int
    node_qubits: int
    dim_qubits: int

    def __post_init__(self):
        if min(self.ancilla_qubits, self.node_qubits, self.dim_qubits) < 0:
            raise ValueError("register sizes must be non-negative")

    @property
    def total_qubits(self) -> int:
        return self.ancilla_qubits + self.node_qubits + self.dim_qubits

    @property
    def ancilla_range(self) -> range:
        return range(self.ancilla_qubits)

    @property
    def node_range(self) -> range:
        return range(self.ancilla_qubits, self.ancilla_qubits + self.node_qubits)

    @property
    def dim_range(self) -> range:
        return range(self.ancilla_qubits + self.node_qubits, self.total_qubits)

    def node_dim_index(self, node: int, dim: int) -> int:
        return node * 2 ** self.dim_qubits + dim
