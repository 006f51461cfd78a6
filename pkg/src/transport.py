"""
Discrete-ordinates transport with simple corner balance (SCB) in slab geometry.

Corner equations are written per unit volume:

    (I - I_prev)/(c dt) + L I + K(T) I = Q(T)

with the streaming operator L carrying upwinding and no boundary data, K(T)
the diagonal removal kappa_g(T_i), and Q(T) the isotropic emission 2 pi kappa B
plus the boundary inflow terms.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.discretization import PhaseSpaceGrid
from src.errors import LayoutError, NumericalError
from src.moments import edge_values
from src.physics import MaterialModel

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BoundarySpec:
    """Incoming intensities per (group, angle); only inflow directions are read."""

    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        if self.left.shape != self.right.shape or self.left.ndim != 2:
            raise LayoutError("Boundary inflow arrays must both have shape (Ng, Nmu)")
        if np.any(self.left < 0) or np.any(self.right < 0):
            raise NumericalError("Boundary inflow intensities must be nonnegative")

    @classmethod
    def vacuum(cls, grid: PhaseSpaceGrid) -> "BoundarySpec":
        shape = (grid.groups.n_groups, grid.quadrature.n_angles)
        return cls(np.zeros(shape), np.zeros(shape))

    @classmethod
    def blackbody(
        cls,
        grid: PhaseSpaceGrid,
        material: MaterialModel,
        left_temperature: Optional[float] = None,
        right_temperature: Optional[float] = None,
    ) -> "BoundarySpec":
        """Isotropic black-body inflow on each side; ``None`` means vacuum."""
        n_angles = grid.quadrature.n_angles
        sides = []
        for temperature in (left_temperature, right_temperature):
            if temperature is None:
                sides.append(np.zeros((grid.groups.n_groups, n_angles)))
            else:
                intensity = material.equilibrium_intensity(float(temperature))
                sides.append(np.repeat(intensity[:, None], n_angles, axis=1))
        return cls(sides[0], sides[1])


class TransportOperator:
    """Matrix-free SCB operators and the directional sweep on one phase-space grid."""

    def __init__(self, grid: PhaseSpaceGrid, material: MaterialModel):
        if material.groups != grid.groups:
            raise LayoutError("Material group structure differs from the grid's")
        self.grid = grid
        self.layout = grid.layout
        self.material = material
        self.c = material.constants.c
        self.dx = grid.mesh.dx
        self.mu = grid.quadrature.mu
        self.w = grid.quadrature.w
        self.positive = grid.quadrature.positive
        self.negative = grid.quadrature.negative
        # W-weights of one corner per (angle, cell): w_m dx_i / 2
        self.corner_weights = self.w[:, None] * self.dx[None, :] / 2.0

    # -- helpers ----------------------------------------------------------

    def _field(self, values: np.ndarray) -> np.ndarray:
        return self.layout.as_field(values)

    def _temperature(self, temperature: np.ndarray) -> np.ndarray:
        temperature = np.asarray(temperature, dtype=float)
        if temperature.shape != (self.layout.n_cells,):
            raise LayoutError(f"Temperature must have shape ({self.layout.n_cells},)")
        return temperature

    def edge_intensities(
        self, intensity: np.ndarray, bc: Optional[BoundarySpec] = None
    ) -> np.ndarray:
        """Upwinded cell-edge intensities (..., Ng, Nmu, Nx+1); inflow edges from ``bc``."""
        return edge_values(self.grid, intensity, bc)

    def equilibrium_field(self, temperature: np.ndarray) -> np.ndarray:
        """Flat isotropic intensity 2 pi B_g(T_i) in every angle and corner."""
        intensity = self.material.equilibrium_intensity(self._temperature(temperature))
        field = np.broadcast_to(intensity[:, None, :, None], self.layout.shape)
        return self.layout.as_vector(np.array(field))

    # -- operators --------------------------------------------------------

    def apply_streaming(self, intensity: np.ndarray) -> np.ndarray:
        """L_h I with zero inflow; accepts stacked vectors on leading axes."""
        field = self._field(intensity)
        edges = self.edge_intensities(intensity)
        mid = 0.5 * (field[..., 0] + field[..., 1])
        scale = 2.0 * self.mu[:, None] / self.dx[None, :]
        out = np.empty_like(field, dtype=float)
        out[..., 0] = scale * (mid - edges[..., :-1])
        out[..., 1] = scale * (edges[..., 1:] - mid)
        return self.layout.as_vector(out)

    def apply_removal(self, temperature: np.ndarray, intensity: np.ndarray) -> np.ndarray:
        kappa = self.material.opacity(self._temperature(temperature))
        return self.apply_removal_kappa(kappa, intensity)

    def apply_removal_kappa(self, kappa: np.ndarray, intensity: np.ndarray) -> np.ndarray:
        field = self._field(intensity)
        return self.layout.as_vector(kappa[:, None, :, None] * field)

    def emission_source(self, temperature: np.ndarray) -> np.ndarray:
        """Per-(group, cell) isotropic emission 2 pi kappa_g B_g, shape (Ng, Nx)."""
        temperature = self._temperature(temperature)
        return self.material.opacity(temperature) * self.material.equilibrium_intensity(temperature)

    def inflow_source(self, bc: BoundarySpec) -> np.ndarray:
        """Boundary inflow contribution to Q, flat vector."""
        q = np.zeros(self.layout.shape)
        pos, neg = self.positive, self.negative
        q[:, pos, 0, 0] = 2.0 * self.mu[pos] / self.dx[0] * bc.left[:, pos]
        q[:, neg, -1, 1] = 2.0 * np.abs(self.mu[neg]) / self.dx[-1] * bc.right[:, neg]
        return self.layout.as_vector(q)

    def assemble_source(self, temperature: np.ndarray, bc: BoundarySpec) -> np.ndarray:
        """Q(T): emission plus inflow; the I_prev/(c dt) term is not included."""
        emission = self.emission_source(temperature)
        field = np.broadcast_to(emission[:, None, :, None], self.layout.shape)
        return self.layout.as_vector(np.array(field)) + self.inflow_source(bc)

    def residual(
        self,
        intensity: np.ndarray,
        intensity_prev: np.ndarray,
        temperature: np.ndarray,
        dt: float,
        bc: BoundarySpec,
    ) -> np.ndarray:
        """Full discrete-equation residual of a candidate end-of-step intensity."""
        return (
            (intensity - intensity_prev) / (self.c * dt)
            + self.apply_streaming(intensity)
            + self.apply_removal(temperature, intensity)
            - self.assemble_source(temperature, bc)
        )

    # -- sweep ------------------------------------------------------------

    def sweep(
        self,
        temperature: np.ndarray,
        intensity_prev: np.ndarray,
        dt: float,
        bc: BoundarySpec,
        kappa: Optional[np.ndarray] = None,
        emission: Optional[np.ndarray] = None,
    ) -> np.ndarray:
        """
        Solve the backward-Euler SCB equations exactly by one sweep per direction.

        Directions and groups are processed together; cells are visited
        upstream to downstream with a 2x2 corner solve per cell.
        """
        if dt <= 0:
            raise NumericalError(f"Time step must be positive, got {dt}")
        temperature = self._temperature(temperature)
        if kappa is None:
            kappa = self.material.opacity(temperature)
        if emission is None:
            emission = kappa * self.material.equilibrium_intensity(temperature)
        inv_cdt = 1.0 / (self.c * dt)
        sigma = kappa + inv_cdt
        q = emission[:, None, :, None] + inv_cdt * self._field(intensity_prev)

        out = np.empty(self.layout.shape)
        n_cells = self.layout.n_cells
        for directions, cells, inflow, up, down in (
            (self.positive, range(n_cells), bc.left, 0, 1),
            (self.negative, range(n_cells - 1, -1, -1), bc.right, 1, 0),
        ):
            if directions.size == 0:
                continue
            m = np.abs(self.mu[directions])[None, :]
            psi_in = inflow[:, directions]
            for i in cells:
                half = 0.5 * self.dx[i]
                a = (sigma[:, i] * half)[:, None]
                r1 = half * q[:, directions, i, up] + m * psi_in
                r2 = half * q[:, directions, i, down]
                diag = 0.5 * m + a
                det = diag**2 + 0.25 * m**2
                psi_up = (diag * r1 - 0.5 * m * r2) / det
                psi_down = (diag * r2 + 0.5 * m * r1) / det
                out[:, directions, i, up] = psi_up
                out[:, directions, i, down] = psi_down
                psi_in = psi_down

        if not np.all(np.isfinite(out)):
            raise NumericalError("Non-finite intensity produced by the transport sweep")
        negatives = int(np.count_nonzero(out < 0))
        if negatives:
            logger.warning(
                f"Sweep produced {negatives} negative intensities (min {out.min():.3e})"
            )
        return self.layout.as_vector(out)

    # -- diagnostics ------------------------------------------------------

    def energy_balance_residual(
        self,
        intensity: np.ndarray,
        intensity_prev: np.ndarray,
        temperature: np.ndarray,
        dt: float,
        bc: BoundarySpec,
    ) -> float:
        """Relative mismatch of the W-summed balance time rate + leakage + absorption = emission."""
        temperature = self._temperature(temperature)
        field = self._field(intensity)
        field_prev = self._field(intensity_prev)
        cw = self.corner_weights[None, :, :, None]
        kappa = self.material.opacity(temperature)

        time_rate = float(np.sum(cw * (field - field_prev))) / (self.c * dt)
        edges = self.edge_intensities(intensity, bc)
        leakage = float(np.sum(self.w * self.mu * (edges[..., -1] - edges[..., 0])))
        absorption = float(np.sum(cw * kappa[:, None, :, None] * field))
        emission_density = np.broadcast_to(
            self.emission_source(temperature)[:, None, :, None], self.layout.shape
        )
        emission = float(np.sum(cw * emission_density))

        scale = max(abs(emission), abs(absorption), abs(time_rate), abs(leakage))
        if scale == 0.0:
            return 0.0
        return abs(time_rate + leakage + absorption - emission) / scale


def count_negative(intensity: np.ndarray) -> int:
    return int(np.count_nonzero(np.asarray(intensity) < 0))


def isotropic_intensity(grid: PhaseSpaceGrid, per_group: np.ndarray) -> np.ndarray:
    """Flat field with the given per-group value (Ng,) or per-(group, cell) value (Ng, Nx)."""
    per_group = np.asarray(per_group, dtype=float)
    if per_group.ndim == 1:
        per_group = np.repeat(per_group[:, None], grid.mesh.n_cells, axis=1)
    field = np.broadcast_to(per_group[:, None, :, None], grid.layout.shape)
    return grid.layout.as_vector(np.array(field))
