"""
Hard-constrained QAOA circuits for block-encoded portfolios.

The circuit prepares a single feasible basis state, then alternates a
diagonal cost layer exp(-i*gamma*f) with an excitation-preserving mixer built
from two-qubit S and three-qubit P exponentials between coupled blocks.
Block t, qubit q is global qubit t*l + q; qubit 0 is the least significant
bit of a basis index.
"""
import math
import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from errors import ConfigurationError, UsageError
from optim import Objective
from sim_core import (
    MAX_QUBITS,
    GateMatrix,
    StateVector,
    apply_diagonal_phase,
    apply_gate,
    apply_kraus_batch,
    apply_matrix_batch,
    basis_state,
    expectation_of_diagonal,
    gate_exponential,
    sample_batch_indices,
    sample_counts,
)
from utils import trajectory_batch_size

logger = logging.getLogger(__name__)

COUPLINGS = ("ring", "all_pairs")
MIXERS = ("controlled_hop", "pauli_sum")

IDENTITY = np.eye(2, dtype=np.complex128)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)


def _kron(*factors):
    out = np.ones((1, 1), dtype=np.complex128)
    for factor in factors:
        out = np.kron(out, factor)
    return out


def index_sets(l):
    """
    Qubit offsets used by the two P sub-layers of a mixer.

    Args:
        l (int): Qubits per block

    Returns:
        tuple: (k1, k2), each an ascending tuple of offsets in [0, l)

    Raises:
        ConfigurationError: If l < 1
    """
    if l < 1:
        raise ConfigurationError(f"qubits per block must be >= 1, got {l}")
    k1 = {(2 * c) % l for c in range(1, l // 2 + 1)}
    k2 = {(2 * c - 1) % l for c in range(1, (l + 1) // 2 + 1)}
    return tuple(sorted(k1)), tuple(sorted(k2))


def ring_couplings(n):
    return tuple((t, (t + 1) % n) for t in range(n))


def all_pair_couplings(n):
    return tuple((t, u) for t in range(n) for u in range(t + 1, n))


@dataclass(frozen=True)
class CircuitGeometry:
    """
    Layout of a p-layer circuit over n blocks of l qubits with budget m.

    Attributes:
        n (int): Blocks (assets)
        l (int): Qubits per block
        m (int): Excitation budget
        p (int): Layers
        couplings (tuple): Ordered block pairs (t, t')
        k1 (tuple): Offsets of the first P sub-layer
        k2 (tuple): Offsets of the second P sub-layer
        mixer (str): "controlled_hop" or "pauli_sum"
    """

    n: int
    l: int
    m: int
    p: int
    couplings: tuple
    k1: tuple
    k2: tuple
    mixer: str = "controlled_hop"

    def __post_init__(self):
        if self.n < 2 or self.l < 1:
            raise ConfigurationError(f"a circuit needs n >= 2 and l >= 1, got n={self.n}, l={self.l}")
        if self.n * self.l > MAX_QUBITS:
            raise ConfigurationError(f"n*l = {self.n * self.l} exceeds {MAX_QUBITS} qubits")
        if not 1 <= self.m <= self.n * self.l:
            raise ConfigurationError(f"budget m must be in [1, {self.n * self.l}], got {self.m}")
        if self.p < 1:
            raise ConfigurationError(f"layer count p must be >= 1, got {self.p}")
        if self.mixer not in MIXERS:
            raise ConfigurationError(f"unknown mixer {self.mixer!r}; expected one of {', '.join(MIXERS)}")
        for t, u in self.couplings:
            if t == u or not (0 <= t < self.n and 0 <= u < self.n):
                raise ConfigurationError(f"invalid coupling ({t}, {u}) for n={self.n}")
        if (tuple(self.k1), tuple(self.k2)) != index_sets(self.l):
            raise ConfigurationError(f"index sets do not match l={self.l}")

    @classmethod
    def build(cls, n, l, m, p, coupling="ring", mixer="controlled_hop"):
        """Geometry with couplings and index sets derived from n and l."""
        if coupling == "ring":
            couplings = ring_couplings(n) if n >= 2 else ()
        elif coupling == "all_pairs":
            couplings = all_pair_couplings(n)
        else:
            raise ConfigurationError(f"unknown coupling {coupling!r}; expected one of {', '.join(COUPLINGS)}")
        k1, k2 = index_sets(l)
        return cls(n=n, l=l, m=m, p=p, couplings=couplings, k1=k1, k2=k2, mixer=mixer)

    @property
    def num_qubits(self):
        return self.n * self.l

    @property
    def num_params(self):
        return 2 * self.p

    def bounds(self):
        """Canonical box: gamma in [0, 2pi], beta in [0, pi]; shape (2p, 2)."""
        return np.array([[0.0, 2.0 * math.pi]] * self.p + [[0.0, math.pi]] * self.p)

    def gates_per_mixer_layer(self):
        return len(build_mixer_layer(self, 0.0))


@dataclass(frozen=True)
class QaoaParams:
    gammas: tuple
    betas: tuple

    def __post_init__(self):
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if len(self.gammas) != len(self.betas) or not self.gammas:
            raise UsageError(
                f"need p >= 1 gammas and betas of equal length, got {len(self.gammas)} and {len(self.betas)}"
            )

    @property
    def p(self):
        return len(self.gammas)

    @classmethod
    def from_flat(cls, values, p):
        """Split (gamma_1..gamma_p, beta_1..beta_p)."""
        values = [float(v) for v in np.asarray(values, dtype=float).ravel()]
        if len(values) != 2 * p:
            raise UsageError(f"expected {2 * p} parameters for p={p}, got {len(values)}")
        return cls(tuple(values[:p]), tuple(values[p:]))

    def to_flat(self):
        return np.array(self.gammas + self.betas, dtype=float)


def parameter_names(p):
    """Display names in flat order: gamma1..gammap, beta1..betap."""
    return [f"gamma{i + 1}" for i in range(p)] + [f"beta{i + 1}" for i in range(p)]


def s_generator(k=None):
    """
    Two-qubit hop generator -1/2 (X(x)Y - Y(x)X).

    The matrix does not depend on k; k only selects target qubits.
    """
    entries = -0.5 * (_kron(PAULI_X, PAULI_Y) - _kron(PAULI_Y, PAULI_X))
    return GateMatrix(entries, unitary=False, name="S")


def p_generator(variant="controlled_hop"):
    """
    Three-qubit generator over (qubit k+1 of t, qubit k of t, qubit k of t').

    ``controlled_hop`` is -1/4 (X1 Y3 - Y1 X3)(I - Z2): an S-type hop between
    the first and third qubits, active when the middle qubit is excited. It
    commutes with the excitation number. ``pauli_sum`` is the signed sum
    -1/4 (XXY + XYX - YXX + YYY), which flips all three qubits.

    Raises:
        ConfigurationError: On an unknown variant
    """
    if variant == "controlled_hop":
        hop = _kron(PAULI_X, IDENTITY, PAULI_Y) - _kron(PAULI_Y, IDENTITY, PAULI_X)
        control = _kron(IDENTITY, IDENTITY - PAULI_Z, IDENTITY)
        entries = -0.25 * hop @ control
    elif variant == "pauli_sum":
        entries = -0.25 * (
            _kron(PAULI_X, PAULI_X, PAULI_Y)
            + _kron(PAULI_X, PAULI_Y, PAULI_X)
            - _kron(PAULI_Y, PAULI_X, PAULI_X)
            + _kron(PAULI_Y, PAULI_Y, PAULI_Y)
        )
    else:
        raise ConfigurationError(f"unknown mixer {variant!r}; expected one of {', '.join(MIXERS)}")
    return GateMatrix(entries, unitary=False, name=f"P[{variant}]")


def excitation_number(arity):
    """Diagonal matrix of the Hamming weight of each local basis index."""
    return np.diag([bin(j).count("1") for j in range(2 ** arity)]).astype(np.complex128)


@dataclass(frozen=True)
class GateApplication:
    targets: tuple
    gate: GateMatrix


@lru_cache(maxsize=256)
def _mixer_gates(variant, beta):
    s_gate = gate_exponential(s_generator().entries, beta, name=f"S({beta:.6g})")
    p_gate = gate_exponential(p_generator(variant).entries, beta, name=f"P({beta:.6g})")
    return s_gate, p_gate


def build_mixer_layer(geometry, beta):
    """
    Ordered gate applications of one mixer layer.

    For every coupling (t, t'): S on (t*l+k, t'*l+k) for k ascending, P for
    k in k1, P for k in k2, then S again. P acts on
    (t*l + (k+1) mod l, t*l + k, t'*l + k); with l = 1 the first two targets
    coincide and the P gates are left out.

    Args:
        geometry (CircuitGeometry): Circuit layout
        beta (float): Mixer angle

    Returns:
        list: GateApplication items in application order
    """
    beta = float(beta)
    if not math.isfinite(beta):
        raise UsageError(f"mixer angle must be finite, got {beta}")
    s_gate, p_gate = _mixer_gates(geometry.mixer, beta)
    l = geometry.l
    layer = []
    for t, u in geometry.couplings:
        hops = [GateApplication((t * l + k, u * l + k), s_gate) for k in range(l)]
        layer.extend(hops)
        if l > 1:
            for k in geometry.k1 + geometry.k2:
                layer.append(GateApplication((t * l + (k + 1) % l, t * l + k, u * l + k), p_gate))
        layer.extend(hops)
    return layer


@dataclass(frozen=True)
class DiagonalPhase:
    """Phase exp(-i * phases[j]) on every basis index j."""

    phases: np.ndarray

    @property
    def factors(self):
        return np.exp(-1j * self.phases)


def build_cost_layer(cost_values, gamma):
    """Cost layer with phase(j) = gamma * cost_values[j]."""
    costs = np.asarray(cost_values, dtype=float)
    return DiagonalPhase(float(gamma) * costs)


def prepare_initial(geometry, m=None):
    """
    Feasible start: the m lowest qubits of block 0 excited.

    Raises:
        ConfigurationError: If m is outside [1, n*l]
    """
    m = geometry.m if m is None else m
    if not 1 <= m <= geometry.num_qubits:
        raise ConfigurationError(f"budget m must be in [1, {geometry.num_qubits}], got {m}")
    return basis_state(geometry.num_qubits, (1 << m) - 1)


def _check_inputs(geometry, cost_values, params):
    if params.p != geometry.p:
        raise UsageError(f"parameters have p={params.p}, geometry has p={geometry.p}")
    costs = np.asarray(cost_values, dtype=float)
    if costs.shape != (2 ** geometry.num_qubits,):
        raise UsageError(f"expected {2 ** geometry.num_qubits} cost values, got shape {costs.shape}")
    return costs


def final_state(geometry, cost_values, params):
    """Noiseless output state of the circuit."""
    costs = _check_inputs(geometry, cost_values, params)
    state = prepare_initial(geometry)
    for gamma, beta in zip(params.gammas, params.betas):
        state = apply_diagonal_phase(state, build_cost_layer(costs, gamma).phases)
        for application in build_mixer_layer(geometry, beta):
            state = apply_gate(state, application.targets, application.gate)
    return state


def _thermal_mean(geometry, costs, params, profile, rng):
    num_qubits = geometry.num_qubits
    dimension = 2 ** num_qubits
    one_qubit = profile.one_qubit_channel()
    two_qubit = profile.two_qubit_channel()
    layers = [
        (build_cost_layer(costs, gamma).factors, build_mixer_layer(geometry, beta))
        for gamma, beta in zip(params.gammas, params.betas)
    ]

    total = 0.0
    remaining = profile.shots
    chunk = trajectory_batch_size()
    # trajectories run in batches of at most QAOA_TRAJECTORY_BATCH rows
    while remaining > 0:
        size = min(chunk, remaining)
        amplitudes = np.zeros((size, dimension), dtype=np.complex128)
        amplitudes[:, 0] = 1.0
        # X gates build the budget state, each followed by its relaxation
        for qubit in range(geometry.m):
            amplitudes = apply_matrix_batch(amplitudes, num_qubits, (qubit,), PAULI_X)
            amplitudes = apply_kraus_batch(amplitudes, num_qubits, qubit, one_qubit, rng)
        for factors, mixer in layers:
            amplitudes = amplitudes * factors[None, :]
            # cost layer: one two-qubit slot of idling on every qubit
            for qubit in range(num_qubits):
                amplitudes = apply_kraus_batch(amplitudes, num_qubits, qubit, two_qubit, rng)
            for application in mixer:
                amplitudes = apply_matrix_batch(
                    amplitudes, num_qubits, application.targets, application.gate.entries
                )
                # relax only the qubits the gate touched
                for qubit in application.targets:
                    amplitudes = apply_kraus_batch(amplitudes, num_qubits, qubit, two_qubit, rng)
        # one measured bitstring per trajectory
        outcomes = sample_batch_indices(amplitudes, rng)
        total += float(costs[outcomes].sum())
        remaining -= size
    return total / profile.shots


def evaluate_circuit(geometry, cost_values, params, profile, rng=None):
    """
    Run the circuit and estimate the mean cost.

    Args:
        geometry (CircuitGeometry): Circuit layout
        cost_values (np.ndarray): Cost of every basis index
        params (QaoaParams): Angles, params.p == geometry.p
        profile (NoiseProfile): Noiseless, Sampling or Thermal
        rng (RngStream): Random stream for Sampling and Thermal

    Returns:
        CostEstimate: Exact value (shots_used 0) or shot mean

    Raises:
        UsageError: On dimension mismatch or a missing random stream
    """
    from noise import CostEstimate

    costs = _check_inputs(geometry, cost_values, params)
    if profile.tag == "noiseless":
        state = final_state(geometry, costs, params)
        return CostEstimate(expectation_of_diagonal(state, costs), 0, profile.name)

    if rng is None:
        raise UsageError(f"profile {profile.name!r} needs a random stream")
    if profile.tag == "sampling":
        state = final_state(geometry, costs, params)
        counts = sample_counts(state, profile.shots, rng)
        value = sum(costs[j] * c for j, c in counts.items()) / profile.shots
        return CostEstimate(float(value), profile.shots, profile.name)

    value = _thermal_mean(geometry, costs, params, profile, rng)
    return CostEstimate(value, profile.shots, profile.name)


def optimal_state_probability(geometry, instance, params):
    """Noiseless probability of measuring the brute-force optimal portfolio."""
    from gmvp import brute_force_optimum

    index, _ = brute_force_optimum(instance)
    state = final_state(geometry, instance.cost_values, params)
    return float(state.probabilities()[index])


@dataclass(frozen=True)
class ParamMask:
    """
    Split of the flat parameter indices into fixed and free ones.

    Attributes:
        size (int): Total parameters (2p)
        fixed (tuple): (index, value) pairs, ascending index
        free (tuple): Remaining indices, ascending
    """

    size: int
    fixed: tuple
    free: tuple

    def __post_init__(self):
        fixed_indices = [i for i, _ in self.fixed]
        if sorted(fixed_indices + list(self.free)) != list(range(self.size)):
            raise UsageError(f"fixed {fixed_indices} and free {list(self.free)} do not partition 0..{self.size - 1}")

    @classmethod
    def build(cls, size, fixed=None):
        fixed = {int(i): float(v) for i, v in (fixed or {}).items()}
        free = tuple(i for i in range(size) if i not in fixed)
        return cls(size, tuple(sorted(fixed.items())), free)

    @classmethod
    def filtered(cls, p, x0):
        """Fix every gamma at its value in x0; the betas stay free."""
        x0 = np.asarray(x0, dtype=float)
        return cls.build(2 * p, {i: x0[i] for i in range(p)})

    @property
    def dimension(self):
        return len(self.free)

    def expand(self, z):
        """Full 2p vector from the free values."""
        z = np.asarray(z, dtype=float)
        if z.shape != (self.dimension,):
            raise UsageError(f"expected {self.dimension} free values, got shape {z.shape}")
        full = np.empty(self.size, dtype=float)
        for i, value in self.fixed:
            full[i] = value
        full[list(self.free)] = z
        return full

    def restrict(self, x):
        return np.asarray(x, dtype=float)[list(self.free)]


def masked_objective(mask, base):
    """
    Objective over the free parameters only.

    Each call builds the full vector and evaluates ``base`` once; fixed
    components are identical in every delegated call.

    Raises:
        UsageError: If the mask does not match the base arity
    """
    if mask.size != base.arity:
        raise UsageError(f"mask covers {mask.size} parameters, objective has {base.arity}")
    bounds = base.bounds[list(mask.free)]
    return Objective(lambda z: base.evaluate(mask.expand(z)), bounds, name=f"{base.name}[masked]")
