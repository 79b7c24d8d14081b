import numpy as np
import pytest

from qgcn import statevector as sv


def dense_embed(matrix, targets, controls, num_qubits):
    """Kronecker-product oracle: build the full 2^n matrix of a gate."""
    dim = 2 ** num_qubits
    full = np.zeros((dim, dim), dtype=complex)
    k = len(targets)
    for col in range(dim):
        bits = [(col >> (num_qubits - 1 - q)) & 1 for q in range(num_qubits)]
        if any(bits[q] != pol for q, pol in controls):
            full[col, col] = 1.0
            continue
        sub_in = 0
        for i, t in enumerate(targets):
            sub_in = (sub_in << 1) | bits[t]
        for sub_out in range(2 ** k):
            amp = matrix[sub_out, sub_in]
            if amp == 0:
                continue
            out_bits = list(bits)
            for i, t in enumerate(targets):
                out_bits[t] = (sub_out >> (k - 1 - i)) & 1
            row = 0
            for b in out_bits:
                row = (row << 1) | b
            full[row, col] += amp
    return full


def random_state(num_qubits, rng):
    amps = rng.normal(size=2 ** num_qubits) + 1j * rng.normal(size=2 ** num_qubits)
    return sv.StateVector(num_qubits, amps / np.linalg.norm(amps))


def test_pauli_x_flips_basis():
    out = sv.apply_gate(sv.zero_state(1), sv.x(0))
    np.testing.assert_allclose(out.amplitudes, [0, 1])


def test_hadamard_squares_to_identity():
    rng = np.random.default_rng(0)
    state = random_state(3, rng)
    out = sv.apply_circuit(state, [sv.h(1), sv.h(1)])
    np.testing.assert_allclose(out.amplitudes, state.amplitudes, atol=1e-12)


def test_ry_full_angle_convention():
    # exp(-i*theta*Y)|0> = cos(theta)|0> + sin(theta)|1>, checked against the
    # direct matrix exponential
    from scipy.linalg import expm
    theta = np.pi / 4
    expected = expm(-1j * theta * np.array([[0, -1j], [1j, 0]])) @ [1, 0]
    out = sv.apply_gate(sv.zero_state(1), sv.ry(theta, 0))
    np.testing.assert_allclose(out.amplitudes, expected, atol=1e-12)
    np.testing.assert_allclose(out.amplitudes,
                               [np.cos(theta), np.sin(theta)], atol=1e-12)


def test_empty_circuit_is_identity():
    rng = np.random.default_rng(1)
    state = random_state(2, rng)
    out = sv.apply_circuit(state, [])
    np.testing.assert_array_equal(out.amplitudes, state.amplitudes)


def test_double_x_is_identity():
    rng = np.random.default_rng(2)
    state = random_state(1, rng)
    out = sv.apply_circuit(state, [sv.x(0), sv.x(0)])
    np.testing.assert_allclose(out.amplitudes, state.amplitudes, atol=1e-12)


@pytest.mark.parametrize("num_qubits", [1, 2, 3])
def test_apply_gate_matches_dense_embedding(num_qubits):
    rng = np.random.default_rng(3)
    kinds = ["x", "y", "z", "h", "ry"]
    for _ in range(40):
        state = random_state(num_qubits, rng)
        kind = kinds[rng.integers(len(kinds))]
        target = int(rng.integers(num_qubits))
        others = [q for q in range(num_qubits) if q != target]
        rng.shuffle(others)
        n_ctrl = int(rng.integers(0, len(others) + 1))
        controls = tuple((q, int(rng.integers(2))) for q in others[:n_ctrl])
        if kind == "ry":
            op = sv.ry(rng.uniform(-np.pi, np.pi), target, controls)
        else:
            op = sv.GateOp(kind, (target,), controls)
        expected = dense_embed(op.target_matrix(), op.targets, op.controls,
                               num_qubits) @ state.amplitudes
        out = sv.apply_gate(state, op)
        np.testing.assert_allclose(out.amplitudes, expected, atol=1e-12)


def test_two_qubit_arbitrary_unitary_matches_dense():
    rng = np.random.default_rng(4)
    mat = np.linalg.qr(rng.normal(size=(4, 4))
                       + 1j * rng.normal(size=(4, 4)))[0]
    for targets in [(0, 1), (2, 0), (1, 2)]:
        op = sv.unitary(mat, targets)
        state = random_state(3, rng)
        expected = dense_embed(mat, targets, (), 3) @ state.amplitudes
        out = sv.apply_gate(state, op)
        np.testing.assert_allclose(out.amplitudes, expected, atol=1e-12)


def test_controlled_gate_identity_on_mismatched_basis_states():
    # exhaustive over 4-qubit basis states: a controlled op leaves every
    # basis state with mismatched control bits unchanged
    op = sv.x(3, controls=((0, 1), (1, 0)))
    for idx in range(16):
        bits = [(idx >> (3 - q)) & 1 for q in range(4)]
        out = sv.apply_gate(sv.basis_state(4, idx), op)
        if bits[0] == 1 and bits[1] == 0:
            expected = idx ^ 1  # target flips (qubit 3 = least significant)
        else:
            expected = idx
        assert np.argmax(np.abs(out.amplitudes)) == expected


def test_norm_preserved_over_random_circuits():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(400):
        n = int(rng.integers(1, 9))
        state = random_state(n, rng)
        for _ in range(int(rng.integers(1, 51))):
            kind = ["x", "y", "z", "h", "ry"][rng.integers(5)]
            target = int(rng.integers(n))
            if kind == "ry":
                op = sv.ry(rng.uniform(-np.pi, np.pi), target)
            else:
                op = sv.GateOp(kind, (target,))
            state = sv.apply_gate(state, op)
        worst = max(worst, abs(state.norm() - 1.0))
    assert worst < 1e-9


def test_probabilities_match_squared_magnitudes():
    rng = np.random.default_rng(6)
    state = random_state(3, rng)
    np.testing.assert_allclose(sv.probabilities(state),
                               np.abs(state.amplitudes) ** 2, atol=1e-14)
    assert abs(sv.probabilities(state).sum() - 1.0) < 1e-10


def test_probabilities_basis_cases():
    np.testing.assert_allclose(sv.probabilities(sv.zero_state(1)), [1, 0])
    plus = sv.apply_gate(sv.zero_state(1), sv.h(0))
    np.testing.assert_allclose(sv.probabilities(plus), [0.5, 0.5], atol=1e-12)


def test_postselect_trivial_ancilla():
    rng = np.random.default_rng(7)
    psi = random_state(2, rng)
    amps = np.zeros(8, dtype=complex)
    amps[:4] = psi.amplitudes  # |0> ancilla on qubit 0
    state = sv.StateVector(3, amps)
    out, prob = sv.postselect(state, [0], [0])
    assert prob == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(out.amplitudes, psi.amplitudes, atol=1e-12)


def test_postselect_half_probability():
    rng = np.random.default_rng(8)
    psi = random_state(2, rng)
    amps = np.concatenate([psi.amplitudes, psi.amplitudes]) / np.sqrt(2)
    state = sv.StateVector(3, amps)
    out, prob = sv.postselect(state, [0], [0])
    assert prob == pytest.approx(0.5, abs=1e-12)
    np.testing.assert_allclose(out.amplitudes, psi.amplitudes, atol=1e-12)


def test_postselect_probability_consistent_with_probabilities():
    rng = np.random.default_rng(9)
    for _ in range(20):
        n = int(rng.integers(2, 6))
        state = random_state(n, rng)
        q = int(rng.integers(n))
        bit = int(rng.integers(2))
        _, prob = sv.postselect(state, [q], [bit])
        probs = sv.probabilities(state)
        total = sum(p for idx, p in enumerate(probs)
                    if ((idx >> (n - 1 - q)) & 1) == bit)
        assert prob == pytest.approx(total, abs=1e-12)


def test_postselect_zero_probability_raises():
    state = sv.zero_state(2)
    with pytest.raises(ValueError, match="probability"):
        sv.postselect(state, [0], [1])


def test_gate_validation_errors():
    with pytest.raises(ValueError, match="disjoint"):
        sv.x(0, controls=((0, 1),))
    with pytest.raises(ValueError, match="out of range"):
        sv.apply_gate(sv.zero_state(1), sv.x(1))
    with pytest.raises(ValueError, match="unitary"):
        sv.unitary(np.array([[1.0, 1.0], [0.0, 1.0]]), targets=(0,))


def test_statevector_shape_validation():
    with pytest.raises(ValueError):
        sv.StateVector(2, np.zeros(3, dtype=complex))


def test_register_layout_index_convention():
    layout = sv.RegisterLayout(2, 3, 4)
    assert layout.total_qubits == 9
    assert list(layout.ancilla_range) == [0, 1]
    assert list(layout.node_range) == [2, 3, 4]
    assert list(layout.dim_range) == [5, 6, 7, 8]
    assert layout.node_dim_index(5, 3) == 5 * 16 + 3


def test_circuit_matrix_composition_order():
    # left-to-right application equals right-to-left matrix product
    ops = [sv.h(0), sv.ry(0.3, 0)]
    mat = sv.circuit_matrix(ops, 1)
    expected = sv.ry_matrix(0.3) @ sv._SINGLE["h"]
    np.testing.assert_allclose(mat, expected, atol=1e-12)
