import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from errors import ConfigurationError, SimulationError, UsageError
from sim_core import (
    GateMatrix,
    KrausSet,
    RngStream,
    StateVector,
    apply_diagonal_phase,
    apply_gate,
    apply_kraus_trajectory,
    basis_state,
    expectation_of_diagonal,
    gate_exponential,
    new_zero_state,
    sample_counts,
    taylor_expm,
)

X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)


def dense_operator(num_qubits, targets, matrix):
    """Full 2^n x 2^n operator built index by index."""
    dim = 2 ** num_qubits
    k = len(targets)
    out = np.zeros((dim, dim), dtype=complex)
    others = [q for q in range(num_qubits) if q not in targets]
    for i in range(dim):
        for j in range(dim):
            if any((i >> q) & 1 != (j >> q) & 1 for q in others):
                continue
            li = sum(((i >> t) & 1) << (k - 1 - pos) for pos, t in enumerate(targets))
            lj = sum(((j >> t) & 1) << (k - 1 - pos) for pos, t in enumerate(targets))
            out[i, j] = matrix[li, lj]
    return out


def random_state(rng, num_qubits):
    amplitudes = rng.standard_normal(2 ** num_qubits) + 1j * rng.standard_normal(2 ** num_qubits)
    return StateVector(num_qubits, amplitudes / np.linalg.norm(amplitudes))


def random_unitary(rng, dim):
    h = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return expm(-1j * (h + h.conj().T) / 2)


def test_new_zero_state():
    assert np.array_equal(new_zero_state(1).amplitudes, [1, 0])
    state = new_zero_state(12)
    assert state.dimension == 4096
    assert state.amplitudes[0] == 1
    assert new_zero_state(2).norm() == 1.0


@pytest.mark.parametrize("num_qubits", [0, 25, -1])
def test_new_zero_state_out_of_range(num_qubits):
    with pytest.raises(ConfigurationError):
        new_zero_state(num_qubits)


def test_x_on_qubit_zero_sets_lowest_bit():
    out = apply_gate(new_zero_state(2), (0,), GateMatrix(X))
    assert np.argmax(np.abs(out.amplitudes)) == 1
    out = apply_gate(new_zero_state(2), (1,), GateMatrix(X))
    assert np.argmax(np.abs(out.amplitudes)) == 2


def test_first_target_is_most_significant_local_bit():
    cnot = np.eye(4, dtype=complex)[[0, 1, 3, 2]]
    # control qubit 1 set, target qubit 0 flips
    out = apply_gate(basis_state(2, 2), (1, 0), GateMatrix(cnot))
    assert abs(out.amplitudes[3]) == 1.0
    # control qubit 0 clear, nothing happens
    out = apply_gate(basis_state(2, 2), (0, 1), GateMatrix(cnot))
    assert abs(out.amplitudes[2]) == 1.0


def test_identity_leaves_state_bit_exact():
    state = random_state(np.random.default_rng(1), 3)
    out = apply_gate(state, (2, 0), GateMatrix(np.eye(4)))
    assert np.array_equal(out.amplitudes, state.amplitudes)


def test_two_qubit_exponential_matches_dense_oracle():
    generator = -0.5 * (np.kron(X, Y) - np.kron(Y, X))
    gate = gate_exponential(generator, 0.3)
    out = apply_gate(basis_state(2, 1), (0, 1), gate)
    expected = dense_operator(2, (0, 1), expm(-1j * 0.3 * generator)) @ basis_state(2, 1).amplitudes
    assert np.max(np.abs(out.amplitudes - expected)) < 1e-12


@pytest.mark.parametrize("targets", [(0,), (3,), (2, 0), (1, 3), (3, 0, 2), (0, 1, 2)])
def test_apply_gate_matches_dense_operator(targets):
    rng = np.random.default_rng(len(targets) * 10 + targets[0])
    state = random_state(rng, 4)
    matrix = random_unitary(rng, 2 ** len(targets))
    out = apply_gate(state, targets, GateMatrix(matrix))
    expected = dense_operator(4, targets, matrix) @ state.amplitudes
    assert np.max(np.abs(out.amplitudes - expected)) < 1e-12


@given(seed=st.integers(0, 2 ** 32 - 1), arity=st.integers(1, 3))
def test_unitary_gates_preserve_norm(seed, arity):
    rng = np.random.default_rng(seed)
    state = random_state(rng, 5)
    targets = tuple(rng.permutation(5)[:arity])
    out = apply_gate(state, targets, GateMatrix(random_unitary(rng, 2 ** arity)))
    assert abs(out.norm() - 1.0) < 1e-10


@pytest.mark.parametrize("targets", [(0, 0), (0, 4), (-1, 1)])
def test_bad_targets_rejected(targets):
    with pytest.raises(UsageError):
        apply_gate(new_zero_state(4), targets, GateMatrix(np.eye(4)))


def test_wrong_target_count_rejected():
    with pytest.raises(UsageError):
        apply_gate(new_zero_state(3), (0,), GateMatrix(np.eye(4)))


def test_non_unitary_gate_rejected():
    with pytest.raises(SimulationError):
        GateMatrix(np.array([[1, 1], [0, 1]]))
    assert GateMatrix(np.array([[1, 1], [0, 1]]), unitary=False).arity == 1


def test_diagonal_phase_global_phase_keeps_probabilities():
    state = random_state(np.random.default_rng(3), 3)
    out = apply_diagonal_phase(state, np.full(8, 0.7))
    assert np.allclose(out.amplitudes, np.exp(-0.7j) * state.amplitudes, atol=1e-15)
    assert np.allclose(out.probabilities(), state.probabilities(), atol=1e-15)
    unchanged = apply_diagonal_phase(state, lambda j: 0.0)
    assert np.array_equal(unchanged.amplitudes, state.amplitudes)


def test_diagonal_phase_keeps_moduli_of_cost_phases(default_instance):
    state = random_state(np.random.default_rng(4), 12)
    out = apply_diagonal_phase(state, 0.14286 * default_instance.cost_values)
    assert np.max(np.abs(out.probabilities() - state.probabilities())) < 1e-15


def test_expectation_of_diagonal():
    assert expectation_of_diagonal(basis_state(2, 3), [5, 6, 7, 8]) == 8
    uniform = StateVector(1, np.array([1, 1]) / np.sqrt(2))
    assert abs(expectation_of_diagonal(uniform, {0: 0.0, 1: 2.0}) - 1.0) < 1e-15


def test_expectation_matches_direct_sum(default_instance):
    state = random_state(np.random.default_rng(5), 12)
    direct = sum(abs(a) ** 2 * c for a, c in zip(state.amplitudes, default_instance.cost_values))
    assert abs(expectation_of_diagonal(state, default_instance.cost_values) - direct) < 1e-12


def test_sample_counts_of_basis_state():
    assert sample_counts(basis_state(3, 5), 1024, RngStream(1)) == {5: 1024}


def test_sample_counts_binomial_bound_and_determinism():
    uniform = StateVector(2, np.full(4, 0.5))
    counts = sample_counts(uniform, 10 ** 6, RngStream(11))
    assert sum(counts.values()) == 10 ** 6
    bound = 5 * np.sqrt(10 ** 6 * 0.25 * 0.75)
    assert all(abs(counts[j] - 250000) < bound for j in range(4))
    assert counts == sample_counts(uniform, 10 ** 6, RngStream(11))


def test_sample_counts_rejects_unnormalised_state():
    with pytest.raises(SimulationError):
        sample_counts(StateVector(1, np.array([1.0, 1.0])), 10, RngStream(0))
    with pytest.raises(UsageError):
        sample_counts(basis_state(1, 0), 0, RngStream(0))


def test_incomplete_kraus_set_rejected():
    with pytest.raises(UsageError):
        KrausSet((np.diag([1.0, 0.5]),))


def test_identity_kraus_leaves_state():
    state = random_state(np.random.default_rng(6), 2)
    out = apply_kraus_trajectory(state, 1, KrausSet((np.eye(2),)), RngStream(0))
    assert np.allclose(out.amplitudes, state.amplitudes, atol=1e-12)


def test_full_amplitude_damping_decays_to_ground():
    damping = KrausSet((np.diag([1.0, 0.0]), np.array([[0.0, 1.0], [0.0, 0.0]])))
    for seed in range(20):
        out = apply_kraus_trajectory(basis_state(1, 1), 0, damping, RngStream(seed))
        assert abs(out.amplitudes[0]) == pytest.approx(1.0)


def test_taylor_expm_matches_scipy():
    rng = np.random.default_rng(8)
    for dim in (2, 4, 8):
        h = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        h = 0.5 * (h + h.conj().T)
        assert np.max(np.abs(taylor_expm(-1j * h) - expm(-1j * h))) < 1e-12


def test_rng_stream_children_are_reproducible():
    a = RngStream(3).child(1, 2).generator.random(5)
    b = RngStream(3).child(1, 2).generator.random(5)
    c = RngStream(3).child(2, 1).generator.random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_negative_seed_rejected():
    with pytest.raises(ConfigurationError):
        RngStream(-1)
