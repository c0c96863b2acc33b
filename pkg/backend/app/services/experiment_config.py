"""Experiment configuration loader: reads and validates data/experiment_config.json."""
import json
import logging
import os
from typing import Annotated, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from app.logic.continuum import Dislocation
from app.logic.errors import ConfigError
from app.logic.lattice import ConvexPolygon

logger = logging.getLogger(__name__)

CONFIG_PATH = os.path.abspath(os.path.join(os.path.dirname(__file__), "../../data/experiment_config.json"))

EXPERIMENTS = ("scaling", "counterexamples", "flatnorm", "constraint_audit")

# Fallback if the shipped file is missing
_FALLBACK = {
    "experiment": "scaling",
    "domain": {"type": "square", "half_width": 1.0},
    "epsilons": [0.0625, 0.03125, 0.015625],
    "dislocations": [{"b": [1, 0], "x": [0.0, 0.0]}],
}


class SquareDomain(BaseModel):
    model_config = ConfigDict(extra="forbid")

    type: Literal["square"] = "square"
    half_width: float = Field(1.0, gt=0)
    center: Tuple[float, float] = (0.0, 0.0)

    def to_polygon(self) -> ConvexPolygon:
        return ConvexPolygon.square(self.half_width, self.center)


class PolygonDomain(BaseModel):
    model_config = ConfigDict(extra="forbid")

    type: Literal["polygon"] = "polygon"
    vertices: List[Tuple[float, float]] = Field(min_length=3)

    @model_validator(mode="after")
    def _convex(self):
        # DomainError is a ValueError, so pydantic reports it as a validation error
        ConvexPolygon(self.vertices)
        return self

    def to_polygon(self) -> ConvexPolygon:
        return ConvexPolygon(self.vertices)


DomainSpec = Annotated[Union[SquareDomain, PolygonDomain], Field(discriminator="type")]


class DislocationSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    b: Tuple[int, int]
    x: Tuple[float, float]

    def to_dislocation(self) -> Dislocation:
        return Dislocation.from_spec(self.b, self.x)


class SolverSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    tol: float = Field(1e-10, gt=0, lt=1)
    max_iter_factor: int = Field(50, ge=1)
    dangling_box: int = Field(2, ge=0)
    dangling_sweeps: int = Field(3, ge=0)


class FlatNormSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_directions: int = Field(720, ge=1)
    exact_atom_limit: int = Field(200, ge=2)


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    experiment: Literal["scaling", "counterexamples", "flatnorm", "constraint_audit"] = "scaling"
    domain: DomainSpec = Field(default_factory=SquareDomain)
    epsilons: List[float] = Field(min_length=1)
    dislocations: List[DislocationSpec] = Field(default_factory=list)
    solver: SolverSettings = Field(default_factory=SolverSettings)
    flat_norm: FlatNormSettings = Field(default_factory=FlatNormSettings)
    output: Optional[str] = None
    threads: int = Field(1, ge=1)
    dilation_lambda: int = 1
    crack_sign: Literal[1, -1] = 1
    constraint_box: int = Field(3, ge=1)

    @field_validator("epsilons")
    @classmethod
    def _decreasing(cls, v: List[float]) -> List[float]:
        if any(e <= 0 for e in v):
            raise ValueError("epsilons must be positive")
        if any(b >= a for a, b in zip(v, v[1:])):
            raise ValueError("epsilons must be strictly decreasing")
        return v

    @field_validator("dilation_lambda")
    @classmethod
    def _nonzero(cls, v: int) -> int:
        if v == 0:
            raise ValueError("dilation_lambda must be a nonzero integer")
        return v

    @model_validator(mode="after")
    def _inside(self):
        polygon = self.domain.to_polygon()
        for d in self.dislocations:
            if not polygon.contains([d.x], strict=True)[0]:
                raise ValueError(f"Dislocation at {d.x} is not strictly inside the domain")
        return self

    def polygon(self) -> ConvexPolygon:
        return self.domain.to_polygon()

    def targets(self) -> List[Dislocation]:
        return [d.to_dislocation() for d in self.dislocations]


def parse_experiment_config(data: dict) -> ExperimentConfig:
    """Validate a config dict; a sidecar written by save_experiment_config is accepted as well."""
    if isinstance(data, dict) and isinstance(data.get("config"), dict):
        data = data["config"]
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid experiment config: {e}") from e


def load_experiment_config(path: Optional[str] = None) -> ExperimentConfig:
    """Load an experiment configuration.

    Without a path the shipped default is read; if that file is missing a
    built-in fallback is used. An explicit path must exist and validate.

    Raises:
        ConfigError: unreadable file, invalid JSON, or failed validation.
    """
    if path is None:
        if not os.path.exists(CONFIG_PATH):
            logger.warning(f"Experiment config not found at {CONFIG_PATH}, using fallback")
            return parse_experiment_config(dict(_FALLBACK))
        path = CONFIG_PATH

    try:
        with open(path, "r") as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"Experiment config not found: {path}") from e
    except (OSError, json.JSONDecodeError) as e:
        logger.error(f"Error loading experiment config {path}: {e}")
        raise ConfigError(f"Could not read experiment config {path}: {e}") from e
    return parse_experiment_config(data)


def save_experiment_config(config: ExperimentConfig, path: str, extra: Optional[dict] = None) -> None:
    """Write the resolved configuration (plus optional extra sections) as JSON."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    payload = {"config": config.model_dump(mode="json")}
    if extra:
        payload.update(extra)
    with open(path, "w") as f:
        json.dump(payload, f, indent=2)
