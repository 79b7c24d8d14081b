"""Decomposition of a real symmetric matrix into weighted unitary terms.

Two routes: projection onto the Pauli-string basis, and greedy peeling of
signed permutation matrices with reversible-circuit synthesis (multi-controlled
X for the bijection, multi-controlled Z for the signs).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import statevector as sv

PAULI_1Q = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
PAULI_LETTERS = "IXYZ"

# Exact canonicalization of assignment ties is O(n^5); past this size the
# plain solver result is used as-is.
LEX_CANONICAL_MAX_DIM = 64


def pauli_string_matrix(axes: str) -> np.ndarray:
    """Dense matrix of a Pauli string; leftmost letter acts on the most
    significant qubit."""
    mat = PAULI_1Q[axes[0]]
    for letter in axes[1:]:
        mat = np.kron(mat, PAULI_1Q[letter])
    return mat


@dataclass(frozen=True)
class PauliTerm:
    """A Pauli string with its real expansion coefficient."""

    axes: str
    coefficient: float

    def __post_init__(self):
        if any(c not in PAULI_LETTERS for c in self.axes):
            raise ValueError(f"bad Pauli axes {self.axes!r}")

    def dense(self) -> np.ndarray:
        return pauli_string_matrix(self.axes)

    def circuit(self) -> list[sv.GateOp]:
        gates = []
        for q, letter in enumerate(self.axes):
            if letter == "X":
                gates.append(sv.x(q))
            elif letter == "Y":
                gates.append(sv.y(q))
            elif letter == "Z":
                gates.append(sv.z(q))
        return gates


@dataclass(frozen=True)
class SignedPermutation:
    """Bijection on basis states with a +-1 sign per column.

    As a matrix, entry (mapping[x], x) = signs[x]; always orthogonal.
    """

    mapping: tuple[int, ...]
    signs: tuple[int, ...]

    def __post_init__(self):
        n = len(self.mapping)
        if sorted(self.mapping) != list(range(n)):
            raise ValueError("mapping must be a bijection on [0, n)")
        if len(self.signs) != n or any(s not in (-1, 1) for s in self.signs):
            raise ValueError("signs must be +-1 per column")

    @property
    def dim(self) -> int:
        return len(self.mapping)

    @property
    def num_qubits(self) -> int:
        n = self.dim.bit_length() - 1
        if 2 ** n != self.dim:
            raise ValueError("dimension is not a power of two")
        return n

    def dense(self) -> np.ndarray:
        mat = np.zeros((self.dim, self.dim))
        for col, (row, sign) in enumerate(zip(self.mapping, self.signs)):
            mat[row, col] = sign
        return mat

    @staticmethod
    def identity(dim: int) -> "SignedPermutation":
        return SignedPermutation(tuple(range(dim)), (1,) * dim)


@dataclass
class Term:
    """One weighted unitary of a decomposition."""

    weight: float
    kind: str  # "pauli" | "perm"
    pauli: PauliTerm | None = None
    perm: SignedPermutation | None = None

    def dense(self) -> np.ndarray:
        if self.kind == "pauli":
            return self.pauli.dense()
        return self.perm.dense().astype(complex)

    def circuit(self) -> list[sv.GateOp]:
        if self.kind == "pauli":
            return self.pauli.circuit()
        return synthesize_permutation_circuit(self.perm)

    @property
    def label(self) -> str:
        if self.kind == "pauli":
            return self.pauli.axes
        return "perm"


@dataclass
class Decomposition:
    """target = sum_k weight_k * U_k + residual."""

    target: np.ndarray
    terms: list[Term]
    residual: np.ndarray

    @property
    def num_terms(self) -> int:
        return len(self.terms)

    @property
    def residual_norm(self) -> float:
        return residual_norm(self.residual)

    @property
    def weights(self) -> np.ndarray:
        return np.array([t.weight for t in self.terms])

    def reconstruct(self) -> np.ndarray:
        total = np.zeros(self.target.shape, dtype=complex)
        for t in self.terms:
            total = total + t.weight * t.dense()
        return total + self.residual

    def num_qubits(self) -> int:
        n = self.target.shape[0].bit_length() - 1
        return n

    def to_json(self) -> dict:
        terms = []
        for t in self.terms:
            entry = {"h": t.weight, "kind": t.kind,
                     "circuit": [gate_to_json(g) for g in t.circuit()]}
            if t.kind == "pauli":
                entry["axes"] = t.pauli.axes
            else:
                entry["mapping"] = list(t.perm.mapping)
                entry["signs"] = list(t.perm.signs)
            terms.append(entry)
        return {"target_dim": int(self.target.shape[0]),
                "terms": terms,
                "residual_norm": self.residual_norm}

    @staticmethod
    def from_json(doc: dict, target: np.ndarray | None = None) -> "Decomposition":
        dim = doc["target_dim"]
        terms = []
        for entry in doc["terms"]:
            if entry["kind"] == "pauli":
                terms.append(Term(entry["h"], "pauli",
                                  pauli=PauliTerm(entry["axes"], entry["h"])))
            else:
                perm = SignedPermutation(tuple(entry["mapping"]),
                                         tuple(entry["signs"]))
                terms.append(Term(entry["h"], "perm", perm=perm))
        if target is None:
            target = np.zeros((dim, dim))
            for t in terms:
                target = target + t.weight * t.dense().real
        residual = target - sum(t.weight * t.dense().real for t in terms)
        return Decomposition(target=np.asarray(target, dtype=float),
                             terms=terms, residual=residual)


def gate_to_json(gate: sv.GateOp) -> dict:
    doc = {"kind": gate.kind, "targets": list(gate.targets),
           "controls": [[q, p] for q, p in gate.controls]}
    if gate.angle is not None:
        doc["angle"] = gate.angle
    if gate.matrix is not None:
        doc["matrix_re"] = gate.matrix.real.tolist()
        doc["matrix_im"] = gate.matrix.imag.tolist()
    return doc


def gate_from_json(doc: dict) -> sv.GateOp:
    matrix = None
    if "matrix_re" in doc:
        matrix = np.array(doc["matrix_re"]) + 1j * np.array(doc["matrix_im"])
    return sv.GateOp(doc["kind"], tuple(doc["targets"]),
                     tuple((q, p) for q, p in doc["controls"]),
                     angle=doc.get("angle"), matrix=matrix)


def residual_norm(delta: np.ndarray) -> float:
    """Frobenius norm sqrt(sum delta_ij^2)."""
    return float(np.linalg.norm(delta))


def gate_complexity(circuit) -> int:
    """Weighted gate count: a gate with c controls costs 2c + 1."""
    return sum(2 * len(g.controls) + 1 for g in circuit)


def pauli_coefficients(matrix: np.ndarray) -> np.ndarray:
    """Coefficient tensor C[s_0..s_{n-1}] = trace(P_s @ A) / 2^n over all 4^n
    strings, indexed I=0, X=1, Y=2, Z=3 per qubit, qubit 0 most significant.

    Runs in O(n 4^n) by contracting one qubit's row/column bit pair at a time.
    """
    a = np.asarray(matrix, dtype=complex)
    dim = a.shape[0]
    n = dim.bit_length() - 1
    if a.shape != (dim, dim) or 2 ** n != dim:
        raise ValueError("matrix must be square with power-of-two dimension")
    basis = np.stack([PAULI_1Q[c] for c in PAULI_LETTERS])  # (4, a, b)
    cur = a.reshape((2,) * (2 * n))
    for i in range(n):
        # axes: (4,)*i pauli, then remaining row bits, then remaining col bits;
        # the next row bit sits at index i, its column partner at index n.
        cur = np.tensordot(cur, basis, axes=([i, n], [2, 1]))
        cur = np.moveaxis(cur, -1, i)
    return cur / dim


def _check_symmetric_pow2(a: np.ndarray, tol: float = 1e-10):
    dim = a.shape[0]
    if a.ndim != 2 or a.shape[1] != dim or 2 ** (dim.bit_length() - 1) != dim:
        raise ValueError("matrix must be square with power-of-two dimension")
    if np.abs(a - a.T).max() > tol:
        raise ValueError("matrix must be symmetric")


def pauli_decompose(matrix: np.ndarray, drop_tol: float = 0.0) -> Decomposition:
    """Expand a real symmetric matrix over Pauli strings.

    Strings with |coefficient| <= drop_tol go to the residual; with
    drop_tol = 0 the reconstruction is exact.
    """
    a = np.asarray(matrix, dtype=float)
    _check_symmetric_pow2(a)
    n = a.shape[0].bit_length() - 1
    coeffs = pauli_coefficients(a)
    terms = []
    flat = coeffs.reshape(-1)
    for idx in range(flat.size):
        h = flat[idx]
        if abs(h) <= drop_tol:
            continue
        digits = []
        rem = idx
        for _ in range(n):
            digits.append(rem % 4)
            rem //= 4
        axes = "".join(PAULI_LETTERS[d] for d in reversed(digits))
        terms.append(Term(float(h.real), "pauli",
                          pauli=PauliTerm(axes, float(h.real))))
    kept = sum(t.weight * t.dense().real for t in terms) if terms else np.zeros_like(a)
    return Decomposition(target=a, terms=terms, residual=a - kept)


def _assignment_value(weights: np.ndarray, skip_rows: set, used_cols: set) -> float:
    rows = [r for r in range(weights.shape[0]) if r not in skip_rows]
    cols = [c for c in range(weights.shape[1]) if c not in used_cols]
    if not rows:
        return 0.0
    sub = weights[np.ix_(rows, cols)]
    ri, ci = linear_sum_assignment(sub, maximize=True)
    return float(sub[ri, ci].sum())


def max_weight_assignment(weights: np.ndarray) -> np.ndarray:
    """Column choice per row of a maximum-weight assignment; for matrices up
    to LEX_CANONICAL_MAX_DIM the lexicographically smallest optimum is
    returned, making the result solver-independent."""
    n = weights.shape[0]
    ri, ci = linear_sum_assignment(weights, maximize=True)
    if n > LEX_CANONICAL_MAX_DIM:
        return ci
    best = float(weights[ri, ci].sum())
    tol = 1e-9 * max(1.0, abs(best))
    chosen = np.empty(n, dtype=int)
    used: set = set()
    prefix = 0.0
    for r in range(n):
        for c in range(n):
            if c in used:
                continue
            rest = _assignment_value(weights, set(range(r + 1)), used | {c})
            if prefix + weights[r, c] + rest >= best - tol:
                chosen[r] = c
                used.add(c)
                prefix += weights[r, c]
                break
        else:
            raise RuntimeError("assignment canonicalization failed")
    return chosen


def permutation_decompose(matrix: np.ndarray, max_terms: int = 64,
                          tol: float = 1e-12) -> Decomposition:
    """Greedy peeling of signed permutations from a matrix.

    Each round takes a maximum-weight assignment on |residual| and subtracts
    the selected signed permutation scaled by the smallest nonzero selected
    magnitude. Zero-residual cells picked to complete the bijection enter the
    term with sign +1, so later rounds can cancel them.
    """
    a = np.asarray(matrix, dtype=float)
    dim = a.shape[0]
    if a.shape != (dim, dim) or 2 ** (dim.bit_length() - 1) != dim:
        raise ValueError("matrix must be square with power-of-two dimension")
    residual = a.copy()
    terms = []
    # zero-fill cells can oscillate on targets with no exact permutation
    # sum; keep the best prefix and stop after a few non-improving rounds
    best_norm = float(np.linalg.norm(residual))
    best_len = 0
    stall = 0
    for _ in range(max_terms):
        if np.abs(residual).max() <= tol:
            break
        cols_for_rows = max_weight_assignment(np.abs(residual))
        selected = residual[np.arange(dim), cols_for_rows]
        magnitudes = np.abs(selected[np.abs(selected) > tol])
        if magnitudes.size == 0:
            break
        weight = float(magnitudes.min())
        signs = np.where(np.abs(selected) > tol, np.sign(selected), 1.0)
        mapping = [0] * dim
        col_signs = [1] * dim
        for row in range(dim):
            col = int(cols_for_rows[row])
            mapping[col] = row
            col_signs[col] = int(signs[row])
        perm = SignedPermutation(tuple(mapping), tuple(col_signs))
        terms.append(Term(weight, "perm", perm=perm))
        residual = residual - weight * perm.dense()
        norm = float(np.linalg.norm(residual))
        if norm < best_norm - tol:
            best_norm = norm
            best_len = len(terms)
            stall = 0
        else:
            stall += 1
            if stall >= 3:
                break
    terms = terms[:best_len]
    kept = sum(t.weight * t.perm.dense() for t in terms) \
        if terms else np.zeros_like(a)
    return Decomposition(target=a, terms=terms, residual=a - kept)


def _flip_state_phase(basis_index: int, num_qubits: int) -> list[sv.GateOp]:
    """Gates multiplying exactly |basis_index> by -1 (multi-controlled Z)."""
    target = num_qubits - 1
    bits = [(basis_index >> (num_qubits - 1 - q)) & 1 for q in range(num_qubits)]
    controls = tuple((q, bits[q]) for q in range(num_qubits) if q != target)
    if bits[target] == 1:
        return [sv.z(target, controls)]
    # Z only phases |1>; conjugate the target with X to reach the |0> branch.
    return [sv.x(target), sv.z(target, controls), sv.x(target)]


def _bit_transposition(a: int, b: int, num_qubits: int) -> sv.GateOp:
    """Multi-controlled X swapping two states that differ in exactly one bit."""
    diff = a ^ b
    flip_bit = diff.bit_length() - 1  # bit weight position
    target = num_qubits - 1 - flip_bit
    controls = tuple(
        (q, (a >> (num_qubits - 1 - q)) & 1)
        for q in range(num_qubits) if q != target
    )
    return sv.x(target, controls)


def _transposition_gates(a: int, b: int, num_qubits: int) -> list[sv.GateOp]:
    """Swap |a> and |b> via a Gray-code chain of single-bit transpositions."""
    path = [a]
    cur = a
    diff = a ^ b
    for q in range(num_qubits):
        bit = num_qubits - 1 - q
        if (diff >> bit) & 1:
            cur ^= 1 << bit
            path.append(cur)
    steps = [_bit_transposition(path[i], path[i + 1], num_qubits)
             for i in range(len(path) - 1)]
    # T(w0,w1)..T(wk-1,wk)..T(w0,w1) conjugation realizes the (a b) swap.
    return steps + steps[-2::-1]


def synthesize_permutation_circuit(perm: SignedPermutation) -> list[sv.GateOp]:
    """Gate list over n qubits reproducing the signed permutation exactly.

    Column signs are applied first (multi-controlled Z per -1 column), then
    the bijection as a product of transpositions, each expanded along a
    Gray-code path of multi-controlled X gates.
    """
    n = perm.num_qubits
    gates: list[sv.GateOp] = []
    for col, sign in enumerate(perm.signs):
        if sign == -1:
            gates.extend(_flip_state_phase(col, n))
    remaining = list(perm.mapping)
    seen = [False] * perm.dim
    for start in range(perm.dim):
        if seen[start] or remaining[start] == start:
            seen[start] = True
            continue
        cycle = [start]
        cur = remaining[start]
        seen[start] = True
        while cur != start:
            seen[cur] = True
            cycle.append(cur)
            cur = remaining[cur]
        # circuit [(c0 c1), (c0 c2), ...] applied left-to-right walks the cycle
        for nxt in cycle[1:]:
            gates.extend(_transposition_gates(cycle[0], nxt, n))
    return gates
