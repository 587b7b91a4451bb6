"""
Run configuration schema.

A run configuration is one JSON document validated with pydantic before any
computation starts; unknown keys are rejected at every level.
"""
import json
import logging
import math
from pathlib import Path
from typing import List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from bench import MODES, BenchConfig, OptimizerSpec
from errors import ConfigurationError
from gmvp import instance_from_document, load_instance, random_instance
from noise import profile_from_spec
from optim import DEFAULT_HYPERPARAMETERS
from qaoa import CircuitGeometry
from storage import load_json

logger = logging.getLogger(__name__)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GeneratedInstance(_Strict):
    seed: int = Field(ge=0)
    n: int = Field(ge=2)
    l: int = Field(ge=1)
    m: int = Field(ge=1)


class InlineInstance(_Strict):
    n: int
    l: int
    m: int
    sigma: List[float]
    seed: Optional[int] = None


class GeometrySpec(_Strict):
    n: int = Field(ge=2)
    l: int = Field(ge=1)
    m: int = Field(ge=1)
    p: int = Field(ge=1)
    coupling: Literal["ring", "all_pairs"] = "ring"
    mixer: Literal["controlled_hop", "pauli_sum"] = "controlled_hop"


class ProfileSpec(_Strict):
    name: str = Field(min_length=1)
    type: Literal["noiseless", "sampling", "thermal"]
    shots: int = Field(default=1024, ge=1)
    t1_us: Optional[float] = None
    t2_us: Optional[float] = None
    t_1q_ns: Optional[float] = None
    t_2q_ns: Optional[float] = None


class OptimizerBlock(_Strict):
    name: Literal["cobyla", "powell", "dual_annealing"]
    rho_beg: Optional[float] = None
    rho_end: Optional[float] = None
    xtol: Optional[float] = None
    ftol: Optional[float] = None
    q_v: Optional[float] = None
    q_a: Optional[float] = None
    t0: Optional[float] = None
    local_polish: Optional[bool] = None
    maxfev: Optional[int] = Field(default=None, ge=1)

    def settings(self):
        """Hyperparameters given in the block; the rest keep their defaults."""
        given = self.model_dump(exclude={"name"}, exclude_none=True)
        allowed = set(DEFAULT_HYPERPARAMETERS[self.name])
        misplaced = set(given) - allowed
        if misplaced:
            raise ConfigurationError(f"{self.name} does not take {', '.join(sorted(misplaced))}")
        return given


class BenchSpec(_Strict):
    runs: int = Field(default=10, ge=2)
    base_seed: int = Field(default=0, ge=0)
    modes: List[Literal["standard", "filtered"]] = Field(default_factory=lambda: list(MODES))


class LandscapeSpec(_Strict):
    resolution: int = Field(default=50, ge=2)
    theta_star: List[float]
    seed: int = Field(default=0, ge=0)
    profiles: Optional[List[str]] = None

    @field_validator("theta_star")
    @classmethod
    def _finite(cls, values):
        if not all(math.isfinite(v) for v in values):
            raise ValueError("theta_star entries must be finite")
        return values


class RunConfig(_Strict):
    instance: Union[str, GeneratedInstance, InlineInstance]
    geometry: GeometrySpec
    profiles: List[ProfileSpec] = Field(min_length=1)
    optimizers: List[OptimizerBlock] = Field(min_length=1)
    bench: BenchSpec = Field(default_factory=BenchSpec)
    landscape: LandscapeSpec

    @model_validator(mode="after")
    def _consistent(self):
        names = [profile.name for profile in self.profiles]
        if len(set(names)) != len(names):
            raise ValueError(f"profile names must be unique, got {names}")
        if len(self.landscape.theta_star) != 2 * self.geometry.p:
            raise ValueError(f"theta_star needs {2 * self.geometry.p} values for p={self.geometry.p}")
        for name in self.landscape.profiles or []:
            if name not in names:
                raise ValueError(f"landscape profile {name!r} is not among the configured profiles")
        return self

    def build_instance(self, base_dir=None):
        """Load, generate or decode the configured instance."""
        spec = self.instance
        if isinstance(spec, str):
            path = Path(spec)
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            return load_instance(path)
        if isinstance(spec, GeneratedInstance):
            return random_instance(spec.seed, spec.n, spec.l, spec.m)
        return instance_from_document(spec.model_dump(exclude_none=True))

    def build_geometry(self):
        g = self.geometry
        return CircuitGeometry.build(g.n, g.l, g.m, g.p, coupling=g.coupling, mixer=g.mixer)

    def build_profiles(self):
        return [profile_from_spec(spec.model_dump(), name=spec.name) for spec in self.profiles]

    def build_optimizers(self):
        return [OptimizerSpec(block.name, block.settings()) for block in self.optimizers]

    def build_bench(self, base_dir=None, runs=None, base_seed=None):
        return BenchConfig(
            instance=self.build_instance(base_dir),
            geometry=self.build_geometry(),
            optimizers=tuple(self.build_optimizers()),
            profiles=tuple(self.build_profiles()),
            modes=tuple(dict.fromkeys(self.bench.modes)),
            runs_per_cell=self.bench.runs if runs is None else runs,
            base_seed=self.bench.base_seed if base_seed is None else base_seed,
        )


def parse_run_config(document):
    """
    Validate a decoded configuration document.

    Raises:
        ConfigurationError: On any schema violation
    """
    try:
        return RunConfig.model_validate(document)
    except ValidationError as e:
        raise ConfigurationError(f"invalid run configuration: {e}")


def load_run_config(path):
    """
    Read and validate a configuration file.

    Raises:
        ConfigurationError: If the file is not JSON or fails validation
        OSError: If the file cannot be read
    """
    try:
        document = load_json(path)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"configuration {path} is not valid JSON: {e}")
    logger.debug(f"Loaded configuration {path}")
    return parse_run_config(document)
