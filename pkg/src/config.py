"""
Run configuration: YAML sections validated by pydantic, plus the objects built from them.

The packaged default, ``src/fleck_cummings.yaml``, is the Fleck-Cummings
problem; a user file only needs the keys it changes.
"""

import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.discretization import (
    PhaseSpaceGrid,
    SpatialMesh,
    TimeGrid,
    build_double_gauss_legendre,
)
from src.errors import ConfigError
from src.physics import (
    SPEED_OF_LIGHT,
    GroupStructure,
    MaterialEos,
    MaterialModel,
    OpacityModel,
    PhysConstants,
    radiation_constant_codata,
)
from src.transport import BoundarySpec

load_dotenv()

logger = logging.getLogger(__name__)

PROJECT_ROOT = Path(__file__).parent.parent
DEFAULT_CONFIG_FILE = PROJECT_ROOT / "src" / "fleck_cummings.yaml"

OUTPUT_ENV = "TRTROM_OUT"
LOG_LEVEL_ENV = "TRTROM_LOG_LEVEL"

DEFAULT_EPS_SWEEP = [10.0**-k for k in range(1, 17)]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ProblemSection(_Section):
    name: str = "fleck_cummings"
    inflow_temperature: float = Field(1.0, gt=0, description="keV, left boundary spectrum")
    right_inflow_temperature: Optional[float] = Field(None, gt=0)
    initial_temperature: float = Field(0.001, gt=0, description="keV")


class MeshSection(_Section):
    length: float = Field(6.0, gt=0, description="cm")
    cells: int = Field(60, ge=1)
    widths: Optional[List[float]] = None

    @field_validator("widths")
    @classmethod
    def _positive_widths(cls, value):
        if value is not None and (not value or any(w <= 0 for w in value)):
            raise ValueError("widths must be a nonempty list of positive numbers")
        return value


class AnglesSection(_Section):
    per_half: int = Field(4, ge=1)


class GroupsSection(_Section):
    count: int = Field(17, ge=3)
    min_kev: float = Field(0.1, gt=0)
    max_kev: float = Field(20.0, gt=0)
    boundaries: Optional[List[float]] = None

    @model_validator(mode="after")
    def _check_boundaries(self):
        if self.boundaries is not None:
            edges = self.boundaries
            if len(edges) < 2 or any(math.isnan(e) for e in edges):
                raise ValueError("boundaries need at least two numbers")
            if edges[0] < 0 or any(b <= a for a, b in zip(edges, edges[1:])):
                raise ValueError("boundaries must start at 0 or above and strictly increase")
        elif self.max_kev <= self.min_kev:
            raise ValueError("max_kev must exceed min_kev")
        return self


class TimeSection(_Section):
    dt: float = Field(0.02, gt=0, description="ns")
    end: float = Field(6.0, gt=0, description="ns")
    steps: Optional[List[float]] = None
    stage_boundaries: List[float] = Field(default_factory=lambda: [0.3, 1.2])


class PhysicsSection(_Section):
    opacity_coefficient: float = Field(27.0, gt=0)
    heat_capacity_coefficient: float = Field(
        0.5917, gt=0, description="c_v = coefficient * a_R * T_in^3"
    )
    radiation_constant: Optional[float] = Field(None, gt=0, description="GJ/cm^3/keV^4")
    speed_of_light: Optional[float] = Field(None, gt=0, description="cm/ns")


class SolverSection(_Section):
    tol_temperature: float = Field(1.0e-12, gt=0)
    tol_energy: float = Field(1.0e-12, gt=0)
    max_outer: int = Field(200, ge=1)
    max_inner: int = Field(500, ge=1)


class RomSection(_Section):
    eps: Optional[float] = Field(1.0e-5, gt=0, lt=1)
    ranks: Optional[List[int]] = None
    eps_sweep: List[float] = Field(default_factory=lambda: list(DEFAULT_EPS_SWEEP))
    gram_block_limit: int = Field(20_000_000, ge=0)

    @field_validator("ranks")
    @classmethod
    def _positive_ranks(cls, value):
        if value is not None and any(r < 1 for r in value):
            raise ValueError("ranks must be positive; an empty basis cannot be solved")
        return value


class BaselineSection(_Section):
    kind: Literal["p1", "fld"] = "p1"
    limiter: Literal["sqrt", "levermore_pomraning"] = "sqrt"


class OutputSection(_Section):
    directory: str = "output"


class RunConfig(_Section):
    problem: ProblemSection = Field(default_factory=ProblemSection)
    mesh: MeshSection = Field(default_factory=MeshSection)
    angles: AnglesSection = Field(default_factory=AnglesSection)
    groups: GroupsSection = Field(default_factory=GroupsSection)
    time: TimeSection = Field(default_factory=TimeSection)
    physics: PhysicsSection = Field(default_factory=PhysicsSection)
    solver: SolverSection = Field(default_factory=SolverSection)
    rom: RomSection = Field(default_factory=RomSection)
    baseline: BaselineSection = Field(default_factory=BaselineSection)
    output: OutputSection = Field(default_factory=OutputSection)

    @property
    def output_dir(self) -> Path:
        return Path(self.output.directory)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.model_dump(), sort_keys=False)


def _read_yaml(path: Path) -> Dict[str, Any]:
    try:
        with open(path) as f:
            data = yaml.safe_load(f) or {}
    except FileNotFoundError:
        raise ConfigError(f"Config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"Config file {path} is not valid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must map section names to key/value tables")
    return data


def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = {key: dict(value) if isinstance(value, dict) else value for key, value in base.items()}
    for section, values in override.items():
        if isinstance(values, dict) and isinstance(merged.get(section), dict):
            merged[section].update(values)
        else:
            merged[section] = values
    return merged


def parse_config(data: Dict[str, Any]) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        problems = []
        for error in exc.errors():
            key = ".".join(str(part) for part in error["loc"]) or "<root>"
            problems.append(f"{key}: {error['msg']}")
        raise ConfigError("Invalid configuration: " + "; ".join(problems)) from None


def load_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> RunConfig:
    """
    Load the packaged default, layer a user file and explicit overrides on top.

    Args:
        path: Optional YAML file with the sections to change
        overrides: Optional {section: {key: value}} applied last

    Returns:
        Validated RunConfig; ``TRTROM_OUT`` replaces output.directory when set
    """
    data = _read_yaml(DEFAULT_CONFIG_FILE)
    if path is not None:
        data = _merge(data, _read_yaml(Path(path)))
    if overrides:
        data = _merge(data, overrides)
    env_out = os.getenv(OUTPUT_ENV)
    if env_out:
        data = _merge(data, {"output": {"directory": env_out}})
    return parse_config(data)


def log_level() -> str:
    return os.getenv(LOG_LEVEL_ENV, "INFO").upper()


@dataclass(frozen=True)
class SolverSettings:
    tol_temperature: float = 1.0e-12
    tol_energy: float = 1.0e-12
    max_outer: int = 200
    max_inner: int = 500


@dataclass(frozen=True)
class Problem:
    """Everything a solver run needs, built once from a RunConfig."""

    grid: PhaseSpaceGrid
    material: MaterialModel
    time: TimeGrid
    bc: BoundarySpec
    initial_temperature: float
    settings: SolverSettings

    @property
    def mesh(self) -> SpatialMesh:
        return self.grid.mesh


def build_groups(section: GroupsSection) -> GroupStructure:
    if section.boundaries is not None:
        return GroupStructure(tuple(float(b) for b in section.boundaries))
    return GroupStructure.logarithmic(section.count, section.min_kev, section.max_kev)


def build_problem(cfg: RunConfig) -> Problem:
    """Mesh, quadrature, groups, material, time grid and boundary data of a configuration."""
    if cfg.mesh.widths is not None:
        mesh = SpatialMesh(tuple(cfg.mesh.widths))
    else:
        mesh = SpatialMesh.uniform(cfg.mesh.length, cfg.mesh.cells)
    groups = build_groups(cfg.groups)
    grid = PhaseSpaceGrid(mesh, build_double_gauss_legendre(cfg.angles.per_half), groups)

    a_R = cfg.physics.radiation_constant or radiation_constant_codata()
    constants = PhysConstants(c=cfg.physics.speed_of_light or SPEED_OF_LIGHT, a_R=a_R)
    c_v = cfg.physics.heat_capacity_coefficient * a_R * cfg.problem.inflow_temperature**3
    material = MaterialModel(
        constants=constants,
        groups=groups,
        opacity_model=OpacityModel(coefficient=cfg.physics.opacity_coefficient),
        eos=MaterialEos(c_v=c_v),
    )

    if cfg.time.steps is not None:
        time = TimeGrid.build(cfg.time.steps, cfg.time.stage_boundaries)
    else:
        time = TimeGrid.uniform(cfg.time.dt, cfg.time.end, cfg.time.stage_boundaries)

    bc = BoundarySpec.blackbody(
        grid,
        material,
        left_temperature=cfg.problem.inflow_temperature,
        right_temperature=cfg.problem.right_inflow_temperature,
    )
    settings = SolverSettings(
        tol_temperature=cfg.solver.tol_temperature,
        tol_energy=cfg.solver.tol_energy,
        max_outer=cfg.solver.max_outer,
        max_inner=cfg.solver.max_inner,
    )
    logger.debug(
        f"Problem {cfg.problem.name}: Nx={mesh.n_cells}, Nmu={grid.quadrature.n_angles}, "
        f"Ng={groups.n_groups}, steps={time.n_steps}, stages={time.n_stages}"
    )
    return Problem(
        grid=grid,
        material=material,
        time=time,
        bc=bc,
        initial_temperature=cfg.problem.initial_temperature,
        settings=settings,
    )
