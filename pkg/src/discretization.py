"""
Spatial mesh, angular quadrature, time grid and the flat phase-space layout.

The flat layout is group-major, then angle, then cell, then corner, so a flat
intensity vector reshapes to (Ng, Nmu, Nx, 2) in C order.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence, Tuple

import numpy as np
from scipy.special import roots_legendre

from src.errors import ConfigError, LayoutError
from src.physics import GroupStructure

CORNERS = 2
STAGE_SNAP_TOLERANCE = 1.0e-12  # ns

FNV_OFFSET_BASIS = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a_64(data: bytes) -> int:
    """64-bit FNV-1a hash."""
    h = FNV_OFFSET_BASIS
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


@dataclass(frozen=True)
class SpatialMesh:
    widths: Tuple[float, ...]

    def __post_init__(self):
        w = np.asarray(self.widths, dtype=float)
        if w.ndim != 1 or w.size == 0 or np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ConfigError("Cell widths must be a nonempty list of positive numbers")

    @classmethod
    def uniform(cls, length: float, n_cells: int) -> "SpatialMesh":
        if length <= 0 or n_cells < 1:
            raise ConfigError(f"Invalid uniform mesh: length={length}, n_cells={n_cells}")
        return cls(tuple([length / n_cells] * n_cells))

    @property
    def n_cells(self) -> int:
        return len(self.widths)

    @cached_property
    def dx(self) -> np.ndarray:
        return np.asarray(self.widths, dtype=float)

    @property
    def length(self) -> float:
        return float(np.sum(self.dx))

    @cached_property
    def faces(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.dx)])

    @cached_property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.faces[:-1] + self.faces[1:])


@dataclass(frozen=True)
class AngularQuadrature:
    """Discrete ordinates in ascending order with their weights."""

    nodes: Tuple[float, ...]
    weights: Tuple[float, ...]

    def __post_init__(self):
        mu, w = np.asarray(self.nodes), np.asarray(self.weights)
        if mu.shape != w.shape or mu.ndim != 1:
            raise LayoutError("Quadrature nodes and weights must be 1D arrays of equal length")
        if np.any(w <= 0) or np.any(mu == 0) or np.any(np.abs(mu) >= 1):
            raise LayoutError("Quadrature needs positive weights and nodes in (-1, 1) without 0")

    @property
    def n_angles(self) -> int:
        return len(self.nodes)

    @cached_property
    def mu(self) -> np.ndarray:
        return np.asarray(self.nodes, dtype=float)

    @cached_property
    def w(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    @cached_property
    def positive(self) -> np.ndarray:
        return np.flatnonzero(self.mu > 0)

    @cached_property
    def negative(self) -> np.ndarray:
        return np.flatnonzero(self.mu < 0)


def build_double_gauss_legendre(n_per_half: int) -> AngularQuadrature:
    """Gauss-Legendre rule mapped onto [0, 1] and mirrored onto [-1, 0]."""
    if n_per_half < 1:
        raise ConfigError(f"n_per_half must be >= 1, got {n_per_half}")
    x, w = roots_legendre(n_per_half)
    mu_pos = 0.5 * (1.0 + x)
    w_pos = 0.5 * w
    mu = np.concatenate([-mu_pos[::-1], mu_pos])
    weights = np.concatenate([w_pos[::-1], w_pos])
    return AngularQuadrature(tuple(mu.tolist()), tuple(weights.tolist()))


@dataclass(frozen=True)
class TimeGrid:
    """Step sizes and the step indices closing each stage but the last."""

    steps: Tuple[float, ...]
    stage_edges: Tuple[int, ...] = ()

    def __post_init__(self):
        dt = np.asarray(self.steps, dtype=float)
        if dt.size == 0 or np.any(dt <= 0):
            raise ConfigError("Time steps must be a nonempty list of positive numbers")
        edges = list(self.stage_edges)
        if edges != sorted(set(edges)) or any(e < 1 or e >= dt.size for e in edges):
            raise ConfigError(
                f"Stage edges {edges} must be increasing step indices in [1, {dt.size})"
            )

    @classmethod
    def build(cls, steps: Sequence[float], stage_boundaries: Sequence[float] = ()) -> "TimeGrid":
        times = np.concatenate([[0.0], np.cumsum(np.asarray(steps, dtype=float))])
        edges = []
        for boundary in sorted(stage_boundaries):
            if boundary >= times[-1] - STAGE_SNAP_TOLERANCE:
                continue
            index = int(np.argmin(np.abs(times - boundary)))
            if abs(times[index] - boundary) > STAGE_SNAP_TOLERANCE:
                raise ConfigError(
                    f"Stage boundary {boundary} ns does not align with a time-step edge "
                    f"(nearest {times[index]} ns)"
                )
            if index > 0:
                edges.append(index)
        return cls(tuple(float(s) for s in steps), tuple(sorted(set(edges))))

    @classmethod
    def uniform(cls, dt: float, t_end: float, stage_boundaries: Sequence[float] = ()) -> "TimeGrid":
        n_steps = int(round(t_end / dt))
        if n_steps < 1 or abs(n_steps * dt - t_end) > 1.0e-9 * max(1.0, t_end):
            raise ConfigError(f"t_end={t_end} is not a whole number of steps dt={dt}")
        return cls.build([dt] * n_steps, stage_boundaries)

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    @cached_property
    def dt(self) -> np.ndarray:
        return np.asarray(self.steps, dtype=float)

    @cached_property
    def times(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.dt)])

    @property
    def n_stages(self) -> int:
        return len(self.stage_edges) + 1

    def stage_of_step(self, n: int) -> int:
        """1-based stage of step n (1-based), i.e. of the interval (t^{n-1}, t^n]."""
        if not 1 <= n <= self.n_steps:
            raise LayoutError(f"Step {n} outside 1..{self.n_steps}")
        return 1 + sum(1 for edge in self.stage_edges if edge < n)

    def stage_steps(self, stage: int) -> range:
        bounds = [0, *self.stage_edges, self.n_steps]
        if not 1 <= stage <= self.n_stages:
            raise LayoutError(f"Stage {stage} outside 1..{self.n_stages}")
        return range(bounds[stage - 1] + 1, bounds[stage] + 1)

    def stage_window(self, stage: int) -> Tuple[float, float]:
        steps = self.stage_steps(stage)
        return float(self.times[steps.start - 1]), float(self.times[steps.stop - 1])


@dataclass(frozen=True)
class PhaseSpaceLayout:
    n_cells: int
    n_angles: int
    n_groups: int
    corners: int = CORNERS

    @property
    def shape(self) -> Tuple[int, int, int, int]:
        return (self.n_groups, self.n_angles, self.n_cells, self.corners)

    @property
    def size(self) -> int:
        return self.n_groups * self.n_angles * self.n_cells * self.corners

    def flat_index(self, corner: int, cell: int, angle: int, group: int) -> int:
        for name, value, bound in (
            ("corner", corner, self.corners),
            ("cell", cell, self.n_cells),
            ("angle", angle, self.n_angles),
            ("group", group, self.n_groups),
        ):
            if not 0 <= value < bound:
                raise LayoutError(f"{name} index {value} outside [0, {bound})")
        return ((group * self.n_angles + angle) * self.n_cells + cell) * self.corners + corner

    def unflatten(self, index: int) -> Tuple[int, int, int, int]:
        """Inverse of flat_index: returns (corner, cell, angle, group)."""
        if not 0 <= index < self.size:
            raise LayoutError(f"Flat index {index} outside [0, {self.size})")
        group, angle, cell, corner = np.unravel_index(index, self.shape)
        return int(corner), int(cell), int(angle), int(group)

    def as_field(self, values: np.ndarray) -> np.ndarray:
        """View a flat vector (or a stack of them on leading axes) as (..., Ng, Nmu, Nx, 2)."""
        values = np.asarray(values)
        if values.shape[-1] != self.size:
            raise LayoutError(f"Expected trailing dimension {self.size}, got {values.shape}")
        return values.reshape(values.shape[:-1] + self.shape)

    def as_vector(self, field: np.ndarray) -> np.ndarray:
        field = np.asarray(field)
        if field.shape[-4:] != self.shape:
            raise LayoutError(f"Expected trailing shape {self.shape}, got {field.shape}")
        return field.reshape(field.shape[:-4] + (self.size,))


@dataclass(frozen=True)
class PhaseSpaceGrid:
    """Mesh, quadrature and groups together with the flat layout they induce."""

    mesh: SpatialMesh
    quadrature: AngularQuadrature
    groups: GroupStructure

    @cached_property
    def layout(self) -> PhaseSpaceLayout:
        return PhaseSpaceLayout(self.mesh.n_cells, self.quadrature.n_angles, self.groups.n_groups)

    @cached_property
    def fingerprint(self) -> int:
        counts = [self.mesh.n_cells, self.quadrature.n_angles, self.groups.n_groups, CORNERS]
        header = np.asarray(counts, dtype="<i8")
        payload = b"".join(
            [
                header.tobytes(),
                np.asarray(self.mesh.dx, dtype="<f8").tobytes(),
                np.asarray(self.quadrature.mu, dtype="<f8").tobytes(),
                np.asarray(self.quadrature.w, dtype="<f8").tobytes(),
                np.asarray(self.groups.edges, dtype="<f8").tobytes(),
            ]
        )
        return fnv1a_64(payload)
