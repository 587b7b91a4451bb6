"""
Noise profiles and cost estimation.

A profile is one of three immutable values: Noiseless (exact expectation),
Sampling (finite shots of the exact final distribution) or Thermal (per-shot
trajectories with T1/T2 relaxation on every gate participant).
"""
import math
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np

from errors import ConfigurationError, PhysicalityError, UsageError
from optim import Objective
from sim_core import KrausSet

logger = logging.getLogger(__name__)

DEFAULT_SHOTS = 1024
MICROSECOND = 1e-6
NANOSECOND = 1e-9


@dataclass(frozen=True)
class Noiseless:
    name: str = "noiseless"

    @property
    def tag(self):
        return "noiseless"

    @property
    def shots(self):
        return 0


@dataclass(frozen=True)
class Sampling:
    shots: int = DEFAULT_SHOTS
    name: str = "sampling"

    def __post_init__(self):
        _check_shots(self.shots)

    @property
    def tag(self):
        return "sampling"


@dataclass(frozen=True)
class Thermal:
    """
    Thermal relaxation profile. Times are in seconds.

    Attributes:
        t1 (float): Energy relaxation time
        t2 (float): Dephasing time, 0 < t2 <= 2*t1
        t_1q (float): One-qubit gate duration
        t_2q (float): Two-qubit gate duration (also used for 3-qubit mixer gates)
        shots (int): Trajectories per estimate
    """

    t1: float
    t2: float
    t_1q: float
    t_2q: float
    shots: int = DEFAULT_SHOTS
    name: str = "thermal"

    def __post_init__(self):
        _check_shots(self.shots)
        _check_relaxation(self.t1, self.t2)
        if not (self.t_1q > 0 and self.t_2q > 0):
            raise PhysicalityError(f"gate durations must be positive, got {self.t_1q}, {self.t_2q}")

    @property
    def tag(self):
        return "thermal"

    def one_qubit_channel(self):
        return thermal_kraus(self.t1, self.t2, self.t_1q)

    def two_qubit_channel(self):
        return thermal_kraus(self.t1, self.t2, self.t_2q)


NoiseProfile = Union[Noiseless, Sampling, Thermal]


@dataclass(frozen=True)
class CostEstimate:
    """Estimated cost; shots_used is 0 for exact values."""

    value: float
    shots_used: int
    profile: str


def _check_shots(shots):
    if isinstance(shots, bool) or not isinstance(shots, (int, np.integer)) or shots < 1:
        raise ConfigurationError(f"shots must be a positive integer, got {shots!r}")


def _check_relaxation(t1, t2):
    if not (t1 > 0 and t2 > 0):
        raise PhysicalityError(f"T1 and T2 must be positive, got T1={t1}, T2={t2}")
    if t2 > 2.0 * t1:
        raise PhysicalityError(f"T2={t2} exceeds 2*T1={2.0 * t1}; the channel is not physical")


@lru_cache(maxsize=64)
def thermal_kraus(t1, t2, duration):
    """
    Kraus operators of thermal relaxation over ``duration`` seconds.

    Amplitude damping with gamma = 1 - exp(-duration/t1) is followed by pure
    dephasing with lambda = 1 - exp(-2*duration*(1/t2 - 1/(2*t1))), so the
    off-diagonal element decays by exp(-duration/t2) overall.

    Args:
        t1 (float): Energy relaxation time (s)
        t2 (float): Dephasing time (s)
        duration (float): Gate duration (s)

    Returns:
        KrausSet: The four composed operators B_j A_i

    Raises:
        PhysicalityError: If t2 > 2*t1 or any time is not positive
    """
    _check_relaxation(t1, t2)
    if not duration > 0:
        raise PhysicalityError(f"gate duration must be positive, got {duration}")

    gamma = -math.expm1(-duration / t1)
    rate = 1.0 / t2 - 1.0 / (2.0 * t1)
    lam = -math.expm1(-2.0 * duration * rate)

    damping = (
        np.array([[1.0, 0.0], [0.0, math.sqrt(1.0 - gamma)]]),
        np.array([[0.0, math.sqrt(gamma)], [0.0, 0.0]]),
    )
    dephasing = (
        np.array([[1.0, 0.0], [0.0, math.sqrt(1.0 - lam)]]),
        np.array([[0.0, 0.0], [0.0, math.sqrt(lam)]]),
    )
    operators = tuple(b @ a for a in damping for b in dephasing)
    return KrausSet(operators, duration=duration)


PRESET_PROFILES = {
    "noiseless": Noiseless(),
    "sampling": Sampling(shots=DEFAULT_SHOTS),
    "thermal_a": Thermal(
        t1=380 * MICROSECOND, t2=400 * MICROSECOND,
        t_1q=50 * NANOSECOND, t_2q=150 * NANOSECOND,
        shots=DEFAULT_SHOTS, name="thermal_a",
    ),
    "thermal_b": Thermal(
        t1=80 * MICROSECOND, t2=100 * MICROSECOND,
        t_1q=50 * NANOSECOND, t_2q=150 * NANOSECOND,
        shots=DEFAULT_SHOTS, name="thermal_b",
    ),
}


def profile_from_spec(spec, name=None):
    """
    Build a profile from its configuration block.

    Args:
        spec (dict): {"type": "noiseless"|"sampling"|"thermal", "shots",
            "t1_us", "t2_us", "t_1q_ns", "t_2q_ns"}
        name (str): Profile name; defaults to spec["name"] or the type

    Returns:
        NoiseProfile: The profile

    Raises:
        ConfigurationError: On unknown types or missing fields
    """
    kind = spec.get("type")
    name = name or spec.get("name") or kind
    if kind == "noiseless":
        return Noiseless(name=name)
    if kind == "sampling":
        return Sampling(shots=spec.get("shots", DEFAULT_SHOTS), name=name)
    if kind == "thermal":
        missing = [key for key in ("t1_us", "t2_us", "t_1q_ns", "t_2q_ns") if spec.get(key) is None]
        if missing:
            raise ConfigurationError(f"thermal profile {name!r} is missing {', '.join(missing)}")
        return Thermal(
            t1=float(spec["t1_us"]) * MICROSECOND,
            t2=float(spec["t2_us"]) * MICROSECOND,
            t_1q=float(spec["t_1q_ns"]) * NANOSECOND,
            t_2q=float(spec["t_2q_ns"]) * NANOSECOND,
            shots=spec.get("shots", DEFAULT_SHOTS),
            name=name,
        )
    raise ConfigurationError(f"unknown noise profile type: {kind!r}")


def estimate_cost(geometry, instance, params, profile, rng=None):
    """
    Estimate the instance cost of the circuit at ``params`` under ``profile``.

    Args:
        geometry (CircuitGeometry): Circuit layout
        instance (GmvpInstance): Problem instance
        params (QaoaParams): Circuit angles
        profile (NoiseProfile): Noise profile
        rng (RngStream): Random stream, required unless Noiseless

    Returns:
        CostEstimate: Estimate and shots used

    Raises:
        ConfigurationError: On an invalid profile or mismatched instance
    """
    from qaoa import evaluate_circuit

    if not isinstance(profile, (Noiseless, Sampling, Thermal)):
        raise ConfigurationError(f"invalid noise profile: {profile!r}")
    if (instance.n, instance.l, instance.m) != (geometry.n, geometry.l, geometry.m):
        raise ConfigurationError(
            f"instance (n={instance.n}, l={instance.l}, m={instance.m}) does not match "
            f"geometry (n={geometry.n}, l={geometry.l}, m={geometry.m})"
        )
    return evaluate_circuit(geometry, instance.cost_values, params, profile, rng)


def cost_objective(geometry, instance, profile, rng, name=None):
    """
    Objective over the flat parameter vector (gamma_1..gamma_p, beta_1..beta_p).

    Evaluation k draws from ``rng.child(k)``, so a run is reproducible from
    its stream alone.

    Returns:
        Objective: Bounded to the canonical box
    """
    from qaoa import QaoaParams

    if profile.tag != "noiseless" and rng is None:
        raise UsageError(f"profile {profile.name!r} needs a random stream")
    calls = [0]

    def evaluate(x):
        stream = rng.child(calls[0]) if rng is not None else None
        calls[0] += 1
        params = QaoaParams.from_flat(x, geometry.p)
        return estimate_cost(geometry, instance, params, profile, stream).value

    return Objective(evaluate, geometry.bounds(), name=name or f"qaoa[{profile.name}]")
