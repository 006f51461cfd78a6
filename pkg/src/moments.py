"""
Angular and spectral moments of the intensity and the closure coefficients built from them.

Group arrays put the group on axis 0: cell quantities are (Ng, Nx), face
quantities (Ng, Nx+1), boundary quantities (Ng, 2) with column 0 the left
face (x = 0) and column 1 the right face (x = X).
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.discretization import PhaseSpaceGrid
from src.errors import LayoutError, NumericalError
from src.physics import SPEED_OF_LIGHT

logger = logging.getLogger(__name__)

DIFFUSION_EDDINGTON = 1.0 / 3.0
MARSHAK_FACTOR = 0.5
SIDES = {"left": 0, "right": 1}


@dataclass(frozen=True)
class MomentFields:
    """Moments of one intensity field plus everything the LOQD closure reads from it."""

    E: np.ndarray  # (Ng, Nx)
    F: np.ndarray  # (Ng, Nx+1)
    f: np.ndarray  # (Ng, Nx)
    f_b: np.ndarray  # (Ng, 2) Eddington factors on the boundary faces
    C: np.ndarray  # (Ng, 2) total ratio F_b / (c E_b)
    C_out: np.ndarray  # (Ng, 2) outgoing-direction ratio
    E_in: np.ndarray  # (Ng, 2) inflow energy density
    F_in: np.ndarray  # (Ng, 2) inflow flux


@dataclass(frozen=True)
class GreyCoefficients:
    kappa_E: np.ndarray
    kappa_B: np.ndarray
    kappa_R: np.ndarray
    f: np.ndarray
    eta: np.ndarray


def cell_average(grid: PhaseSpaceGrid, intensity: np.ndarray) -> np.ndarray:
    """Corner-averaged intensity, shape (Ng, Nmu, Nx)."""
    field = grid.layout.as_field(intensity)
    return 0.5 * (field[..., 0] + field[..., 1])


def edge_values(grid: PhaseSpaceGrid, intensity: np.ndarray, bc=None) -> np.ndarray:
    """SCB edge closure: the downstream corner of the upwind cell, inflow at the boundaries."""
    field = grid.layout.as_field(intensity)
    pos, neg = grid.quadrature.positive, grid.quadrature.negative
    edges = np.zeros(field.shape[:-2] + (grid.mesh.n_cells + 1,))
    edges[..., pos, 1:] = field[..., 1][..., pos, :]
    edges[..., neg, :-1] = field[..., 0][..., neg, :]
    if bc is not None:
        edges[..., pos, 0] = bc.left[:, pos]
        edges[..., neg, -1] = bc.right[:, neg]
    return edges


def _ratio(numerator: np.ndarray, denominator: np.ndarray, fallback) -> np.ndarray:
    fallback = np.broadcast_to(fallback, numerator.shape)
    out = np.array(fallback, dtype=float)
    ok = denominator != 0
    out[ok] = numerator[ok] / denominator[ok]
    return out


def eddington_factor(grid: PhaseSpaceGrid, intensity: np.ndarray) -> np.ndarray:
    """Cell Eddington factors sum(w mu^2 I) / sum(w I); 1/3 where the denominator vanishes."""
    mu, w = grid.quadrature.mu, grid.quadrature.w
    avg = cell_average(grid, intensity)
    zeroth = np.einsum("m,gmi->gi", w, avg)
    second = np.einsum("m,gmi->gi", w * mu**2, avg)
    f = _ratio(second, zeroth, DIFFUSION_EDDINGTON)
    _check_eddington_bounds(grid, f)
    return f


def _check_eddington_bounds(grid: PhaseSpaceGrid, f: np.ndarray) -> None:
    mu2 = grid.quadrature.mu**2
    lo, hi = mu2.min(), mu2.max()
    bad = (f < lo - 1e-12) | (f > hi + 1e-12)
    if np.any(bad):
        logger.warning(
            f"Eddington factor outside [{lo:.4f}, {hi:.4f}] in {int(bad.sum())} cell-groups "
            f"(range {f.min():.4f}..{f.max():.4f}); intensity has negative entries"
        )


def _boundary_edges(grid: PhaseSpaceGrid, intensity: np.ndarray, bc) -> np.ndarray:
    """Edge intensities on the two boundary faces, shape (Ng, Nmu, 2)."""
    edges = edge_values(grid, intensity, bc)
    return edges[..., [0, -1]]


def boundary_factor(
    grid: PhaseSpaceGrid,
    intensity: np.ndarray,
    side: str,
    bc=None,
    part: str = "total",
    c: float = SPEED_OF_LIGHT,
) -> np.ndarray:
    """
    Boundary closure factor per group at one boundary face.

    Args:
        side: "left" or "right"
        part: "total" gives F_b / (c E_b) over all directions with inflow
            taken from ``bc``; "outgoing" restricts both sums to the
            directions leaving the domain.

    Returns:
        Array (Ng,); the Marshak value -1/2 (left) or +1/2 (right) where
        the denominator vanishes.
    """
    if side not in SIDES:
        raise LayoutError(f"side must be 'left' or 'right', got {side!r}")
    if part not in ("total", "outgoing"):
        raise LayoutError(f"part must be 'total' or 'outgoing', got {part!r}")
    column = SIDES[side]
    mu, w = grid.quadrature.mu, grid.quadrature.w
    face = _boundary_edges(grid, intensity, bc)[..., column]
    if part == "outgoing":
        outgoing = mu < 0 if side == "left" else mu > 0
        w = np.where(outgoing, w, 0.0)
    flux = face @ (w * mu)
    energy = face @ w / c
    marshak = -MARSHAK_FACTOR if side == "left" else MARSHAK_FACTOR
    return _ratio(flux, c * energy, marshak)


def inflow_moments(grid: PhaseSpaceGrid, bc, c: float = SPEED_OF_LIGHT):
    """(E_in, F_in), each (Ng, 2), of the prescribed inflow on both faces."""
    mu, w = grid.quadrature.mu, grid.quadrature.w
    pos, neg = grid.quadrature.positive, grid.quadrature.negative
    n_groups = grid.groups.n_groups
    E_in = np.zeros((n_groups, 2))
    F_in = np.zeros((n_groups, 2))
    if bc is None:
        return E_in, F_in
    E_in[:, 0] = bc.left[:, pos] @ w[pos] / c
    F_in[:, 0] = bc.left[:, pos] @ (w[pos] * mu[pos])
    E_in[:, 1] = bc.right[:, neg] @ w[neg] / c
    F_in[:, 1] = bc.right[:, neg] @ (w[neg] * mu[neg])
    return E_in, F_in


def compute_group_moments(
    grid: PhaseSpaceGrid,
    intensity: np.ndarray,
    bc=None,
    c: float = SPEED_OF_LIGHT,
) -> MomentFields:
    """Group energy densities, face fluxes, Eddington factors and boundary factors."""
    mu, w = grid.quadrature.mu, grid.quadrature.w
    avg = cell_average(grid, intensity)
    edges = edge_values(grid, intensity, bc)

    E = np.einsum("m,gmi->gi", w, avg) / c
    F = np.einsum("m,gmf->gf", w * mu, edges)
    f = eddington_factor(grid, intensity)

    boundary = edges[..., [0, -1]]
    f_b = _ratio(
        np.einsum("m,gmb->gb", w * mu**2, boundary),
        np.einsum("m,gmb->gb", w, boundary),
        DIFFUSION_EDDINGTON,
    )
    C = np.stack(
        [boundary_factor(grid, intensity, side, bc, "total", c) for side in SIDES], axis=1
    )
    C_out = np.stack(
        [boundary_factor(grid, intensity, side, bc, "outgoing", c) for side in SIDES], axis=1
    )
    E_in, F_in = inflow_moments(grid, bc, c)
    return MomentFields(E=E, F=F, f=f, f_b=f_b, C=C, C_out=C_out, E_in=E_in, F_in=F_in)


def flux_weighted_opacity(kappa: np.ndarray, F: np.ndarray, E: np.ndarray, kappa_fallback):
    """
    Flux-weighted grey opacity and its compensation term.

    Returns:
        (kappa_R, eta) with kappa_R = sum kappa|F| / sum|F| (``kappa_fallback``
        where every group flux vanishes) and eta = sum (kappa - kappa_R) F / sum E.
    """
    abs_flux = np.sum(np.abs(F), axis=0)
    kappa_R = _ratio(np.sum(kappa * np.abs(F), axis=0), abs_flux, kappa_fallback)
    total_E = np.sum(E, axis=0)
    if np.any(total_E <= 0):
        raise NumericalError("Grey coefficients need a positive total energy density everywhere")
    eta = np.sum((kappa - kappa_R) * F, axis=0) / total_E
    return kappa_R, eta


def grey_coefficients(
    E_g: np.ndarray,
    F_g: np.ndarray,
    f_g: np.ndarray,
    kappa_g: np.ndarray,
    B_g: Optional[np.ndarray] = None,
) -> GreyCoefficients:
    """
    Spectrum-averaged coefficients of the effective grey problem.

    All inputs share one placement (group on axis 0). Without ``B_g`` the
    Planck mean falls back to the energy-weighted mean.
    """
    E_g, F_g = np.asarray(E_g, dtype=float), np.asarray(F_g, dtype=float)
    f_g, kappa_g = np.asarray(f_g, dtype=float), np.asarray(kappa_g, dtype=float)
    total_E = np.sum(E_g, axis=0)
    if np.any(total_E <= 0):
        raise NumericalError("Grey coefficients need a positive total energy density everywhere")
    kappa_E = np.sum(kappa_g * E_g, axis=0) / total_E
    if B_g is None:
        kappa_B = kappa_E
    else:
        B_g = np.asarray(B_g, dtype=float)
        kappa_B = _ratio(np.sum(kappa_g * B_g, axis=0), np.sum(B_g, axis=0), kappa_E)
    kappa_R, eta = flux_weighted_opacity(kappa_g, F_g, E_g, kappa_E)
    f = np.sum(f_g * E_g, axis=0) / total_E
    return GreyCoefficients(kappa_E=kappa_E, kappa_B=kappa_B, kappa_R=kappa_R, f=f, eta=eta)
