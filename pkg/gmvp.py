"""
Generalized Mean-Variance Problem instances.

Asset t occupies qubits t*l .. t*l + l - 1. Its portfolio weight is the Hamming
weight of that block divided by the excitation budget m, so a basis state is
feasible exactly when the whole register holds m excitations.
"""
import json
import logging
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations

import numpy as np

from errors import ConfigurationError
from sim_core import MAX_QUBITS
from storage import load_json, save_json

logger = logging.getLogger(__name__)

SYMMETRY_TOLERANCE = 1e-12
DEFAULT_INSTANCE_SEED = 42
# samples per asset drawn for the Gram matrix of a random instance
GRAM_ROWS_PER_ASSET = 4


@dataclass(frozen=True)
class WeightVector:
    """Decoded portfolio weights w_t = h_t / m."""

    weights: tuple

    def as_array(self):
        return np.array(self.weights, dtype=float)

    def total(self):
        return float(sum(self.weights))


@dataclass(frozen=True, eq=False)
class GmvpInstance:
    """
    A GMVP instance: minimise w^T sigma w over block-encoded weights.

    Attributes:
        n (int): Number of assets (qubit blocks)
        l (int): Qubits per asset
        m (int): Excitation budget
        sigma (np.ndarray): n x n symmetric matrix with positive diagonal
        seed (int | None): Generation seed, if the instance was generated
    """

    n: int
    l: int
    m: int
    sigma: np.ndarray
    seed: int = None

    def __post_init__(self):
        sigma = np.array(self.sigma, dtype=float)
        object.__setattr__(self, "sigma", sigma)
        if self.n < 1 or self.l < 1:
            raise ConfigurationError(f"n and l must be positive, got n={self.n}, l={self.l}")
        if self.n * self.l > MAX_QUBITS:
            raise ConfigurationError(f"n*l = {self.n * self.l} exceeds {MAX_QUBITS} qubits")
        if not 1 <= self.m <= self.n * self.l:
            raise ConfigurationError(f"budget m must be in [1, {self.n * self.l}], got {self.m}")
        if sigma.shape != (self.n, self.n):
            raise ConfigurationError(f"sigma must be {self.n}x{self.n}, got shape {sigma.shape}")
        if not np.all(np.isfinite(sigma)):
            raise ConfigurationError("sigma contains non-finite entries")
        if np.max(np.abs(sigma - sigma.T)) > SYMMETRY_TOLERANCE:
            raise ConfigurationError("sigma is not symmetric")
        if np.any(np.diag(sigma) <= 0):
            raise ConfigurationError("sigma must have a positive diagonal")
        sigma.setflags(write=False)

    @property
    def num_qubits(self):
        return self.n * self.l

    @cached_property
    def block_weights(self):
        """Hamming weight of every block for every basis index, shape (2**q, n)."""
        return block_hamming_weights(np.arange(2 ** self.num_qubits, dtype=np.int64), self.n, self.l)

    @cached_property
    def feasible_mask(self):
        return self.block_weights.sum(axis=1) == self.m

    @cached_property
    def cost_values(self):
        """
        Cost of every basis index.

        Feasible indices carry w^T sigma w; infeasible ones carry the largest
        feasible cost plus one.
        """
        weights = self.block_weights / self.m
        costs = np.einsum('ij,jk,ik->i', weights, self.sigma, weights)
        feasible = self.feasible_mask
        costs[~feasible] = float(costs[feasible].max()) + 1.0
        costs.setflags(write=False)
        return costs

    @property
    def infeasible_cost(self):
        return float(self.cost_values[~self.feasible_mask][0]) if not self.feasible_mask.all() else None

    def to_document(self):
        return {
            "n": int(self.n),
            "l": int(self.l),
            "m": int(self.m),
            "seed": None if self.seed is None else int(self.seed),
            "sigma": [float(v) for v in self.sigma.ravel()],
        }


def _popcount_table(bits):
    return np.array([bin(v).count("1") for v in range(2 ** bits)], dtype=np.int64)


def block_hamming_weights(indices, n, l):
    """Per-block Hamming weights of basis indices, shape (len(indices), n)."""
    indices = np.asarray(indices, dtype=np.int64)
    table = _popcount_table(l)
    mask = (1 << l) - 1
    return np.stack([table[(indices >> (t * l)) & mask] for t in range(n)], axis=-1)


def decode(basis_index, n, l, m):
    """
    Decode a basis index into portfolio weights.

    Args:
        basis_index (int): Index below 2**(n*l)
        n (int): Assets
        l (int): Qubits per asset
        m (int): Excitation budget

    Returns:
        WeightVector: Weights h_t/m, or None when the total weight is not m
    """
    counts = block_hamming_weights([basis_index], n, l)[0]
    if int(counts.sum()) != m:
        return None
    return WeightVector(tuple(float(h) / m for h in counts))


def cost_of_index(basis_index, instance):
    """w^T sigma w for a feasible index, the infeasibility cost otherwise."""
    return float(instance.cost_values[basis_index])


def feasible_indices(n, l, m):
    """
    All basis indices of Hamming weight m, ascending.

    Raises:
        ConfigurationError: If m is outside [0, n*l]
    """
    qubits = n * l
    if not 0 <= m <= qubits:
        raise ConfigurationError(f"budget m must be in [0, {qubits}], got {m}")
    return sorted(sum(1 << q for q in chosen) for chosen in combinations(range(qubits), m))


def brute_force_optimum(instance):
    """
    Exhaustive minimum over the feasible subspace.

    Returns:
        tuple: (basis_index, value), lowest index on ties
    """
    candidates = np.flatnonzero(instance.feasible_mask)
    values = instance.cost_values[candidates]
    best = int(np.argmin(values))
    return int(candidates[best]), float(values[best])


def approximation_ratio(value, instance):
    """value / optimum, or None when the optimum is not positive."""
    _, optimum = brute_force_optimum(instance)
    if optimum <= 0:
        return None
    return float(value) / optimum


def random_instance(seed, n, l, m):
    """
    Seeded random correlation-matrix instance.

    Sigma is the Gram matrix of a standard-normal sample with n columns,
    rescaled to unit diagonal.

    Raises:
        ConfigurationError: If n < 2
    """
    if n < 2:
        raise ConfigurationError(f"a random instance needs at least 2 assets, got n={n}")
    rng = np.random.default_rng(seed)
    rows = GRAM_ROWS_PER_ASSET * n
    sample = rng.standard_normal((rows, n))
    gram = sample.T @ sample / rows
    scale = np.sqrt(np.diag(gram))
    sigma = gram / np.outer(scale, scale)
    sigma = 0.5 * (sigma + sigma.T)
    np.fill_diagonal(sigma, 1.0)
    logger.debug(f"Generated random instance seed={seed} n={n} l={l} m={m}")
    return GmvpInstance(n=n, l=l, m=m, sigma=sigma, seed=seed)


def instance_from_document(document):
    """
    Build an instance from the JSON instance-file layout.

    Raises:
        ConfigurationError: On missing fields or failed invariants
    """
    if not isinstance(document, dict):
        raise ConfigurationError("instance document must be a JSON object")
    missing = [key for key in ("n", "l", "m", "sigma") if key not in document]
    if missing:
        raise ConfigurationError(f"instance document is missing {', '.join(missing)}")
    unknown = set(document) - {"n", "l", "m", "seed", "sigma"}
    if unknown:
        raise ConfigurationError(f"unknown instance fields: {', '.join(sorted(unknown))}")
    n, l, m = document["n"], document["l"], document["m"]
    if not all(isinstance(v, int) and not isinstance(v, bool) for v in (n, l, m)):
        raise ConfigurationError("n, l and m must be integers")
    sigma = document["sigma"]
    if not isinstance(sigma, list) or len(sigma) != n * n:
        raise ConfigurationError(f"sigma must be a row-major list of {n * n} reals")
    try:
        matrix = np.array(sigma, dtype=float).reshape(n, n)
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"sigma entries must be reals: {e}")
    return GmvpInstance(n=n, l=l, m=m, sigma=matrix, seed=document.get("seed"))


def save_instance(instance, path):
    """Write the instance file."""
    logger.info(f"Saving instance (n={instance.n}, l={instance.l}, m={instance.m}) to {path}")
    return save_json(path, instance.to_document())


def load_instance(path):
    """
    Read and validate an instance file.

    Raises:
        ConfigurationError: If the file is not valid JSON or fails validation
        OSError: If the file cannot be read
    """
    try:
        document = load_json(path)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"instance file {path} is not valid JSON: {e}")
    return instance_from_document(document)
