"""
Dense statevector simulation.

Basis convention: bit i of a basis index is qubit i, qubit 0 is the least
significant bit. A gate acting on ``targets`` uses ``targets[0]`` as the most
significant bit of its local matrix index, so ``np.kron(A, B)`` applied to
``(q0, q1)`` puts A on q0 and B on q1.

Besides single states, the kernels accept a batch of states stacked along a
leading axis; noisy trajectories are simulated that way.
"""
import math
import logging
from dataclasses import dataclass

import numpy as np

from errors import ConfigurationError, SimulationError, UsageError

logger = logging.getLogger(__name__)

MAX_QUBITS = 24
UNITARITY_TOLERANCE = 1e-12
KRAUS_TOLERANCE = 1e-12
SAMPLING_NORM_TOLERANCE = 1e-6
BRANCH_FLOOR = 1e-15
EXPM_TERM_TOLERANCE = 1e-15


@dataclass
class StateVector:
    """Amplitudes of a ``num_qubits`` register, complex128, length 2**num_qubits."""

    num_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (2 ** self.num_qubits,):
            raise UsageError(
                f"expected {2 ** self.num_qubits} amplitudes, got shape {self.amplitudes.shape}"
            )

    @property
    def dimension(self):
        return self.amplitudes.shape[0]

    def norm(self):
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self):
        return np.abs(self.amplitudes) ** 2

    def copy(self):
        return StateVector(self.num_qubits, self.amplitudes.copy())


@dataclass(frozen=True)
class GateMatrix:
    """
    A 1-, 2- or 3-qubit matrix.

    Unitary gates are checked on construction; Kraus operators and generators
    are built with ``unitary=False``.
    """

    entries: np.ndarray
    unitary: bool = True
    name: str = ""

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.complex128)
        object.__setattr__(self, "entries", entries)
        rows, cols = entries.shape if entries.ndim == 2 else (0, -1)
        if rows != cols or rows not in (2, 4, 8):
            raise UsageError(f"gate matrix must be 2x2, 4x4 or 8x8, got shape {entries.shape}")
        if self.unitary:
            deviation = unitarity_deviation(entries)
            if deviation >= UNITARITY_TOLERANCE:
                raise SimulationError(
                    f"gate {self.name or '?'} is not unitary (max deviation {deviation:.3e})"
                )

    @property
    def arity(self):
        return int(round(math.log2(self.entries.shape[0])))


@dataclass(frozen=True)
class KrausSet:
    """Single-qubit Kraus operators of a channel acting for ``duration`` seconds."""

    operators: tuple
    duration: float = 0.0

    def __post_init__(self):
        ops = tuple(np.asarray(op, dtype=np.complex128) for op in self.operators)
        if not ops or any(op.shape != (2, 2) for op in ops):
            raise UsageError("Kraus operators must be a non-empty sequence of 2x2 matrices")
        object.__setattr__(self, "operators", ops)
        deviation = completeness_deviation(ops)
        if deviation >= KRAUS_TOLERANCE:
            raise UsageError(f"Kraus set is not complete (max deviation {deviation:.3e})")


class RngStream:
    """
    Splittable, reproducible random stream.

    A stream is identified by ``(seed, spawn_key)``; ``child(i, j)`` derives an
    independent stream for task ``(i, j)`` so work can be handed to any worker
    without changing the numbers it draws.
    """

    def __init__(self, seed, spawn_key=()):
        seed = int(seed)
        spawn_key = tuple(int(k) for k in spawn_key)
        if seed < 0 or any(k < 0 for k in spawn_key):
            raise ConfigurationError(f"seeds must be non-negative, got {seed} / {spawn_key}")
        self.seed = seed
        self.spawn_key = spawn_key
        self._sequence = np.random.SeedSequence(entropy=seed, spawn_key=spawn_key)
        self.generator = np.random.Generator(np.random.PCG64(self._sequence))

    def child(self, *indices):
        return RngStream(self.seed, self.spawn_key + tuple(indices))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, spawn_key={self.spawn_key})"


def unitarity_deviation(matrix):
    matrix = np.asarray(matrix)
    identity = np.eye(matrix.shape[0])
    return float(np.max(np.abs(matrix.conj().T @ matrix - identity)))


def completeness_deviation(operators):
    total = sum(op.conj().T @ op for op in operators)
    return float(np.max(np.abs(total - np.eye(2))))


def new_zero_state(num_qubits):
    """
    Build |0...0>.

    Args:
        num_qubits (int): Register size, 1..24

    Returns:
        StateVector: Amplitude 1 on basis index 0

    Raises:
        ConfigurationError: If num_qubits is out of range
    """
    if not isinstance(num_qubits, (int, np.integer)) or not 1 <= num_qubits <= MAX_QUBITS:
        raise ConfigurationError(f"num_qubits must be in [1, {MAX_QUBITS}], got {num_qubits}")
    amplitudes = np.zeros(2 ** int(num_qubits), dtype=np.complex128)
    amplitudes[0] = 1.0
    return StateVector(int(num_qubits), amplitudes)


def basis_state(num_qubits, index):
    """Computational basis state |index>."""
    state = new_zero_state(num_qubits)
    if not 0 <= index < state.dimension:
        raise UsageError(f"basis index {index} out of range for {num_qubits} qubits")
    state.amplitudes[0] = 0.0
    state.amplitudes[index] = 1.0
    return state


def _check_targets(num_qubits, targets, arity):
    targets = tuple(int(t) for t in targets)
    if len(targets) != arity:
        raise UsageError(f"gate of arity {arity} given {len(targets)} targets {targets}")
    if len(set(targets)) != len(targets):
        raise UsageError(f"duplicate gate targets {targets}")
    if any(t < 0 or t >= num_qubits for t in targets):
        raise UsageError(f"gate targets {targets} out of range for {num_qubits} qubits")
    return targets


def apply_matrix_batch(amplitudes, num_qubits, targets, matrix):
    """
    Apply a 2^k x 2^k matrix to every state of a batch.

    Args:
        amplitudes (np.ndarray): Shape (batch, 2**num_qubits)
        num_qubits (int): Register size
        targets (tuple): k distinct qubit indices, already validated
        matrix (np.ndarray): Local matrix, targets[0] most significant

    Returns:
        np.ndarray: New array of the same shape
    """
    k = len(targets)
    batch = amplitudes.shape[0]
    psi = amplitudes.reshape((batch,) + (2,) * num_qubits)
    # axis 1 holds the most significant qubit (num_qubits - 1)
    axes = [1 + (num_qubits - 1 - t) for t in targets]
    gate = np.asarray(matrix).reshape((2,) * (2 * k))
    out = np.tensordot(gate, psi, axes=(list(range(k, 2 * k)), axes))
    out = np.moveaxis(out, list(range(k)), axes)
    return np.ascontiguousarray(out).reshape(batch, -1)


def apply_gate(state, targets, gate):
    """
    Apply a gate to the target qubits, identity elsewhere.

    Args:
        state (StateVector): Input state (not modified)
        targets (sequence): Ordered qubit indices, len == gate.arity
        gate (GateMatrix): Gate to apply

    Returns:
        StateVector: Transformed state

    Raises:
        UsageError: On duplicate or out-of-range targets
    """
    targets = _check_targets(state.num_qubits, targets, gate.arity)
    out = apply_matrix_batch(state.amplitudes[None, :], state.num_qubits, targets, gate.entries)
    return StateVector(state.num_qubits, out[0])


def _as_table(values, dimension):
    if isinstance(values, dict):
        table = np.array([values[j] for j in range(dimension)], dtype=float)
    elif callable(values):
        table = np.array([values(j) for j in range(dimension)], dtype=float)
    else:
        table = np.asarray(values, dtype=float)
    if table.shape != (dimension,):
        raise UsageError(f"expected a value for each of {dimension} basis indices, got shape {table.shape}")
    return table


def apply_diagonal_phase(state, phase_of_index):
    """
    Multiply every amplitude a_j by exp(-i * phase(j)).

    Args:
        state (StateVector): Input state
        phase_of_index: Array, mapping or callable giving the phase of every basis index

    Returns:
        StateVector: Phased state
    """
    phases = _as_table(phase_of_index, state.dimension)
    return StateVector(state.num_qubits, state.amplitudes * np.exp(-1j * phases))


def expectation_of_diagonal(state, value_of_index):
    """Sum_j |a_j|^2 * value(j)."""
    values = _as_table(value_of_index, state.dimension)
    return float(np.dot(state.probabilities(), values))


def sample_counts(state, shots, rng):
    """
    Measure the state ``shots`` times in the computational basis.

    Args:
        state (StateVector): Normalised state
        shots (int): Number of shots, >= 1
        rng (RngStream): Random stream

    Returns:
        dict: basis index -> count, ascending indices, counts summing to shots

    Raises:
        UsageError: If shots < 1
        SimulationError: If the state is not normalised
    """
    if shots < 1:
        raise UsageError(f"shots must be >= 1, got {shots}")
    probs = state.probabilities()
    total = float(probs.sum())
    if abs(total - 1.0) > SAMPLING_NORM_TOLERANCE:
        raise SimulationError(f"cannot sample an unnormalised state (norm^2 = {total:.12f})")
    counts = rng.generator.multinomial(int(shots), probs / total)
    nonzero = np.flatnonzero(counts)
    return {int(j): int(counts[j]) for j in nonzero}


def sample_batch_indices(amplitudes, rng):
    """Draw one measurement outcome from every state of a batch."""
    probs = np.abs(amplitudes) ** 2
    cumulative = np.cumsum(probs, axis=1)
    totals = cumulative[:, -1]
    if np.any(np.abs(totals - 1.0) > SAMPLING_NORM_TOLERANCE):
        raise SimulationError("cannot sample an unnormalised trajectory")
    draws = (1.0 - rng.generator.random(amplitudes.shape[0])) * totals
    indices = np.sum(cumulative < draws[:, None], axis=1)
    return np.minimum(indices, amplitudes.shape[1] - 1)


def apply_kraus_batch(amplitudes, num_qubits, qubit, kraus, rng):
    """
    One quantum-trajectory step on ``qubit`` for every state of a batch.

    Branch i is chosen with probability ||K_i psi||^2 and the state is
    renormalised afterwards.

    Args:
        amplitudes (np.ndarray): Shape (batch, 2**num_qubits), normalised rows
        num_qubits (int): Register size
        qubit (int): Target qubit
        kraus (KrausSet): Channel
        rng (RngStream): Random stream

    Returns:
        np.ndarray: New batch

    Raises:
        SimulationError: If every branch of some trajectory has vanishing weight
    """
    batch = amplitudes.shape[0]
    high = 2 ** (num_qubits - 1 - qubit)
    low = 2 ** qubit
    psi = amplitudes.reshape(batch, high, 2, low)
    a0 = psi[:, :, 0, :]
    a1 = psi[:, :, 1, :]

    # reduced density matrix of the target qubit, per trajectory
    rho = np.empty((batch, 2, 2), dtype=np.complex128)
    rho[:, 0, 0] = np.sum(np.abs(a0) ** 2, axis=(1, 2))
    rho[:, 1, 1] = np.sum(np.abs(a1) ** 2, axis=(1, 2))
    rho[:, 1, 0] = np.sum(a1 * a0.conj(), axis=(1, 2))
    rho[:, 0, 1] = rho[:, 1, 0].conj()

    operators = np.stack(kraus.operators)
    effects = np.einsum('iba,ibc->iac', operators.conj(), operators)
    weights = np.einsum('iab,sba->si', effects, rho).real
    weights = np.clip(weights, 0.0, None)
    if np.any(weights.max(axis=1) < BRANCH_FLOOR):
        raise SimulationError("all Kraus branches vanished for a trajectory")

    cumulative = np.cumsum(weights, axis=1)
    draws = (1.0 - rng.generator.random(batch)) * cumulative[:, -1]
    choice = np.minimum(np.sum(cumulative < draws[:, None], axis=1), len(operators) - 1)
    chosen = weights[np.arange(batch), choice]
    step = operators[choice] / np.sqrt(chosen)[:, None, None]

    out = np.empty_like(psi)
    out[:, :, 0, :] = step[:, 0, 0, None, None] * a0 + step[:, 0, 1, None, None] * a1
    out[:, :, 1, :] = step[:, 1, 0, None, None] * a0 + step[:, 1, 1, None, None] * a1
    return out.reshape(batch, -1)


def apply_kraus_trajectory(state, qubit, kraus, rng):
    """
    Apply one sampled Kraus branch of ``kraus`` to ``qubit``.

    Args:
        state (StateVector): Normalised input state
        qubit (int): Target qubit
        kraus (KrausSet): Complete set of 2x2 operators
        rng (RngStream): Random stream

    Returns:
        StateVector: K_i psi / ||K_i psi||
    """
    _check_targets(state.num_qubits, (qubit,), 1)
    out = apply_kraus_batch(state.amplitudes[None, :], state.num_qubits, qubit, kraus, rng)
    return StateVector(state.num_qubits, out[0])


def taylor_expm(matrix, tolerance=EXPM_TERM_TOLERANCE, max_terms=200):
    """
    Matrix exponential by scaling and squaring with a Taylor series.

    The series stops once a term's largest entry drops below ``tolerance``.
    """
    matrix = np.asarray(matrix, dtype=np.complex128)
    norm = float(np.max(np.sum(np.abs(matrix), axis=1))) if matrix.size else 0.0
    squarings = 0
    if norm > 0.5:
        squarings = int(math.ceil(math.log2(norm / 0.5)))
    scaled = matrix / (2 ** squarings)

    result = np.eye(matrix.shape[0], dtype=np.complex128)
    term = np.eye(matrix.shape[0], dtype=np.complex128)
    for k in range(1, max_terms + 1):
        term = term @ scaled / k
        result = result + term
        if np.max(np.abs(term)) < tolerance:
            break
    for _ in range(squarings):
        result = result @ result
    return result


def gate_exponential(generator, angle, name=""):
    """exp(-i * angle * generator) as a unitary GateMatrix."""
    entries = taylor_expm(-1j * float(angle) * np.asarray(generator, dtype=np.complex128))
    return GateMatrix(entries, unitary=True, name=name)
