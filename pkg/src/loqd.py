"""
Finite-volume low-order quasidiffusion (LOQD) systems and the grey material energy balance.

Every moment system here, multigroup or grey, is an instance of one assembler:
cell-centred energy densities E, face-centred fluxes F and boundary-face
energy densities E_b that are eliminated before the tridiagonal solve.

Per cell i (width h_i):

    (E_i - E_i^prev)/dt + (F_{i+1/2} - F_{i-1/2})/h_i + a_i E_i = s_i

Per face (tau = 1/(c dt) or 0 when the flux time term is dropped):

    tau (F - F^prev) + c (f+ E_right - f- E_left)/h_face + r F + eta E_face = 0

Boundary faces close with F_b = F_in + c C (E_b - E_in).
"""

import logging
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import brentq

from src.discretization import SpatialMesh
from src.errors import NumericalError
from src.moments import (
    DIFFUSION_EDDINGTON,
    MARSHAK_FACTOR,
    GreyCoefficients,
    MomentFields,
    flux_weighted_opacity,
    grey_coefficients,
)
from src.physics import MaterialModel

logger = logging.getLogger(__name__)

MEB_TOLERANCE = 1.0e-13
MEB_MAX_ITERATIONS = 50


@dataclass(frozen=True)
class LoqdState:
    """End-of-step moment fields: group and total energy densities, fluxes and temperature."""

    E_g: np.ndarray  # (Ng, Nx)
    F_g: np.ndarray  # (Ng, Nx+1)
    T: np.ndarray  # (Nx,)
    E: np.ndarray  # (Nx,)
    F: np.ndarray  # (Nx+1,)

    @classmethod
    def from_groups(cls, E_g: np.ndarray, F_g: np.ndarray, T: np.ndarray) -> "LoqdState":
        return cls(E_g=E_g, F_g=F_g, T=T, E=E_g.sum(axis=0), F=F_g.sum(axis=0))


@dataclass(frozen=True)
class QdClosure:
    """Closure data a transport (or reduced) intensity hands to the moment systems."""

    f: np.ndarray  # (Ng, Nx) cell Eddington factors
    f_b: np.ndarray  # (Ng, 2) boundary-face Eddington factors
    C: np.ndarray  # (Ng, 2) boundary factors of the outgoing part
    E_in: np.ndarray  # (Ng, 2)
    F_in: np.ndarray  # (Ng, 2)

    @classmethod
    def from_moments(cls, moments: MomentFields) -> "QdClosure":
        return cls(
            f=moments.f, f_b=moments.f_b, C=moments.C_out, E_in=moments.E_in, F_in=moments.F_in
        )

    @classmethod
    def diffusion(cls, n_cells: int, E_in: np.ndarray, F_in: np.ndarray) -> "QdClosure":
        """f = 1/3 everywhere with Marshak boundary factors -1/2 (left), +1/2 (right)."""
        n_groups = E_in.shape[0]
        C = np.tile([-MARSHAK_FACTOR, MARSHAK_FACTOR], (n_groups, 1))
        return cls(
            f=np.full((n_groups, n_cells), DIFFUSION_EDDINGTON),
            f_b=np.full((n_groups, 2), DIFFUSION_EDDINGTON),
            C=C,
            E_in=E_in,
            F_in=F_in,
        )


@dataclass(frozen=True)
class FaceSystem:
    """Coefficients of G independent FV moment systems, one per row."""

    absorption: np.ndarray  # (G, Nx)
    source: np.ndarray  # (G, Nx)
    f_minus: np.ndarray  # (G, Nx+1) Eddington weight left of each face
    f_plus: np.ndarray  # (G, Nx+1) Eddington weight right of each face
    removal: np.ndarray  # (G, Nx+1)
    eta: np.ndarray  # (G, Nx+1)
    C: np.ndarray  # (G, 2)
    E_in: np.ndarray  # (G, 2)
    F_in: np.ndarray  # (G, 2)
    E_prev: np.ndarray  # (G, Nx)
    F_prev: np.ndarray  # (G, Nx+1)
    flux_time: bool = True


@dataclass(frozen=True)
class FvSolution:
    E: np.ndarray  # (G, Nx)
    F: np.ndarray  # (G, Nx+1)
    E_b: np.ndarray  # (G, 2)


def face_geometry(mesh: SpatialMesh) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Face spacings (Nx+1,) and the linear interpolation weights of interior faces."""
    dx = mesh.dx
    spacing = np.empty(mesh.n_cells + 1)
    spacing[1:-1] = 0.5 * (dx[:-1] + dx[1:])
    spacing[0], spacing[-1] = 0.5 * dx[0], 0.5 * dx[-1]
    total = dx[:-1] + dx[1:]
    return spacing, dx[1:] / total, dx[:-1] / total


def interpolate_to_faces(mesh: SpatialMesh, cell: np.ndarray, boundary: np.ndarray) -> np.ndarray:
    """Cell values (..., Nx) to faces (..., Nx+1), boundary values (..., 2) on the ends."""
    _, wl, wr = face_geometry(mesh)
    out = np.empty(cell.shape[:-1] + (mesh.n_cells + 1,))
    out[..., 1:-1] = wl * cell[..., :-1] + wr * cell[..., 1:]
    out[..., 0] = boundary[..., 0]
    out[..., -1] = boundary[..., 1]
    return out


def solve_fv_system(mesh: SpatialMesh, system: FaceSystem, dt: float, c: float) -> FvSolution:
    """Eliminate fluxes and boundary energies, solve each tridiagonal system for E."""
    if dt <= 0:
        raise NumericalError(f"Time step must be positive, got {dt}")
    dx = mesh.dx
    n = mesh.n_cells
    spacing, wl, wr = face_geometry(mesh)
    tau = 1.0 / (c * dt) if system.flux_time else 0.0
    gamma = tau + system.removal
    drive = tau * system.F_prev  # (G, Nx+1)

    # F_face = F0 + L E_left + R E_right
    F0 = drive / gamma
    L = np.zeros_like(gamma)
    R = np.zeros_like(gamma)
    g_in = gamma[:, 1:-1]
    L[:, 1:-1] = (c * system.f_minus[:, 1:-1] / spacing[1:-1] - system.eta[:, 1:-1] * wl) / g_in
    R[:, 1:-1] = (-c * system.f_plus[:, 1:-1] / spacing[1:-1] - system.eta[:, 1:-1] * wr) / g_in

    fixed = system.F_in - c * system.C * system.E_in  # (G, 2)
    cC = c * system.C
    # left face: E_b = eb0_L + ebE_L E_0
    d_left = gamma[:, 0] * cC[:, 0] - c * system.f_minus[:, 0] / spacing[0] + system.eta[:, 0]
    eb0_left = (drive[:, 0] - gamma[:, 0] * fixed[:, 0]) / d_left
    ebE_left = -(c * system.f_plus[:, 0] / spacing[0]) / d_left
    F0[:, 0] = fixed[:, 0] + cC[:, 0] * eb0_left
    R[:, 0] = cC[:, 0] * ebE_left
    # right face: E_b = eb0_R + ebE_R E_{N-1}
    d_right = gamma[:, -1] * cC[:, 1] + c * system.f_plus[:, -1] / spacing[-1] + system.eta[:, -1]
    eb0_right = (drive[:, -1] - gamma[:, -1] * fixed[:, 1]) / d_right
    ebE_right = (c * system.f_minus[:, -1] / spacing[-1]) / d_right
    F0[:, -1] = fixed[:, 1] + cC[:, 1] * eb0_right
    L[:, -1] = cC[:, 1] * ebE_right
    if not (np.all(np.isfinite(F0)) and np.all(np.isfinite(L)) and np.all(np.isfinite(R))):
        raise NumericalError("Singular face relation in the FV moment system")

    diag = 1.0 / dt + system.absorption + (L[:, 1:] - R[:, :-1]) / dx
    upper = R[:, 1:-1] / dx[:-1]
    lower = -L[:, 1:-1] / dx[1:]
    rhs = system.source + system.E_prev / dt - (F0[:, 1:] - F0[:, :-1]) / dx

    E = np.empty_like(rhs)
    banded = np.zeros((3, n))
    for g in range(rhs.shape[0]):
        banded[0, 1:] = upper[g]
        banded[1] = diag[g]
        banded[2, :-1] = lower[g]
        try:
            E[g] = solve_banded((1, 1), banded, rhs[g])
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"Singular tridiagonal moment system in row {g}: {exc}") from exc
    if not np.all(np.isfinite(E)):
        raise NumericalError("Non-finite energy density from the FV moment system")

    F = F0.copy()
    F[:, 1:] += L[:, 1:] * E
    F[:, :-1] += R[:, :-1] * E
    E_b = np.stack([eb0_left + ebE_left * E[:, 0], eb0_right + ebE_right * E[:, -1]], axis=1)
    return FvSolution(E=E, F=F, E_b=E_b)


def face_opacity(kappa: np.ndarray) -> np.ndarray:
    """Arithmetic mean of adjacent cells at interior faces, the adjacent cell at boundaries."""
    out = np.empty(kappa.shape[:-1] + (kappa.shape[-1] + 1,))
    out[..., 1:-1] = 0.5 * (kappa[..., :-1] + kappa[..., 1:])
    out[..., 0] = kappa[..., 0]
    out[..., -1] = kappa[..., -1]
    return out


def face_eddington_weights(closure: QdClosure) -> Tuple[np.ndarray, np.ndarray]:
    n_groups, n_cells = closure.f.shape
    f_minus = np.empty((n_groups, n_cells + 1))
    f_plus = np.empty((n_groups, n_cells + 1))
    f_minus[:, 1:] = closure.f
    f_minus[:, 0] = closure.f_b[:, 0]
    f_plus[:, :-1] = closure.f
    f_plus[:, -1] = closure.f_b[:, 1]
    return f_minus, f_plus


def group_system(
    closure: QdClosure,
    kappa: np.ndarray,
    planck: np.ndarray,
    prev: LoqdState,
    c: float,
) -> FaceSystem:
    """Multigroup LOQD coefficients for opacities and Planck functions at the current T."""
    f_minus, f_plus = face_eddington_weights(closure)
    removal = face_opacity(kappa)
    return FaceSystem(
        absorption=c * kappa,
        source=4.0 * np.pi * kappa * planck,
        f_minus=f_minus,
        f_plus=f_plus,
        removal=removal,
        eta=np.zeros_like(removal),
        C=closure.C,
        E_in=closure.E_in,
        F_in=closure.F_in,
        E_prev=prev.E_g,
        F_prev=prev.F_g,
    )


def solve_multigroup_loqd(
    mesh: SpatialMesh,
    closure: QdClosure,
    kappa: np.ndarray,
    planck: np.ndarray,
    prev: LoqdState,
    dt: float,
    c: float,
) -> Tuple[FaceSystem, FvSolution]:
    """Solve the Ng decoupled multigroup LOQD systems; returns the assembled system too."""
    system = group_system(closure, kappa, planck, prev, c)
    return system, solve_fv_system(mesh, system, dt, c)


@dataclass(frozen=True)
class GreyProblem:
    """Grey FV coefficients (single row) plus the cell opacities the MEB couples through."""

    system: FaceSystem
    cell: GreyCoefficients


def _left_right_values(E: np.ndarray, E_b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Energy densities on the left and right side of every face, each (..., Nx+1)."""
    left = np.concatenate([E_b[..., :1], E], axis=-1)
    right = np.concatenate([E, E_b[..., 1:]], axis=-1)
    return left, right


def _weighted(values: np.ndarray, weights: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    total = weights.sum(axis=0)
    out = np.array(fallback, dtype=float)
    ok = total != 0
    out[ok] = (values * weights).sum(axis=0)[ok] / total[ok]
    return out


def collapse_to_grey(
    mesh: SpatialMesh,
    groups: FaceSystem,
    solution: FvSolution,
    kappa: np.ndarray,
    planck: np.ndarray,
) -> GreyProblem:
    """
    Spectrum-average a solved multigroup system into the effective grey system.

    The grey face coefficients are sums of the group ones, so a grey solution
    with these coefficients equals the group sum of a consistent group solution.
    """
    E_g, F_g, E_b = solution.E, solution.F, solution.E_b
    left, right = _left_right_values(E_g, E_b)
    f_minus = _weighted(groups.f_minus, left, np.full(left.shape[1:], DIFFUSION_EDDINGTON))
    f_plus = _weighted(groups.f_plus, right, np.full(right.shape[1:], DIFFUSION_EDDINGTON))

    E_face = interpolate_to_faces(mesh, E_g, E_b)
    fallback = _weighted(groups.removal, np.abs(E_face), groups.removal.mean(axis=0))
    kappa_R, eta = flux_weighted_opacity(groups.removal, F_g, E_face, fallback)
    eta = eta + np.sum(groups.eta * E_face, axis=0) / np.sum(E_face, axis=0)

    marshak = np.array([-MARSHAK_FACTOR, MARSHAK_FACTOR])
    C = _weighted(groups.C, E_b - groups.E_in, marshak)

    F_cell = 0.5 * (F_g[:, :-1] + F_g[:, 1:])
    cell = grey_coefficients(E_g, F_cell, groups.f_plus[:, :-1], kappa, planck)
    system = FaceSystem(
        absorption=np.zeros((1, mesh.n_cells)),
        source=np.zeros((1, mesh.n_cells)),
        f_minus=f_minus[None],
        f_plus=f_plus[None],
        removal=kappa_R[None],
        eta=eta[None],
        C=C[None],
        E_in=groups.E_in.sum(axis=0)[None],
        F_in=groups.F_in.sum(axis=0)[None],
        E_prev=groups.E_prev.sum(axis=0)[None],
        F_prev=groups.F_prev.sum(axis=0)[None],
        flux_time=groups.flux_time,
    )
    return GreyProblem(system=system, cell=cell)


def _meb_residual(T, T_prev, absorbed, kappa_B, heat, c, a_R):
    return heat * (T - T_prev) - absorbed + c * kappa_B * a_R * T**4


def update_temperature(
    E: np.ndarray,
    T_guess: np.ndarray,
    T_prev: np.ndarray,
    kappa_E: np.ndarray,
    kappa_B: np.ndarray,
    c_v: float,
    dt: float,
    c: float,
    a_R: float,
) -> np.ndarray:
    """
    Solve c_v (T - T_prev)/dt = c kappa_E E - c kappa_B a_R T^4 cell by cell.

    Newton from ``T_guess``; cells whose iterate leaves (0, inf) are bracketed
    on [0, T_prev + dt c kappa_E E / c_v] and solved by Brent's method.
    """
    heat = c_v / dt
    absorbed = c * kappa_E * E
    T = np.array(T_guess, dtype=float)
    converged = np.zeros(T.shape, dtype=bool)
    fallback = np.zeros(T.shape, dtype=bool)
    for _ in range(MEB_MAX_ITERATIONS):
        active = ~converged & ~fallback
        if not np.any(active):
            break
        g = _meb_residual(T, T_prev, absorbed, kappa_B, heat, c, a_R)
        dg = heat + 4.0 * c * kappa_B * a_R * T**3
        step = np.where(active, g / dg, 0.0)
        T_new = T - step
        bad = active & (~np.isfinite(T_new) | (T_new <= 0))
        fallback |= bad
        T = np.where(bad, T, T_new)
        converged |= active & ~bad & (np.abs(step) <= MEB_TOLERANCE * np.abs(T))

    for i in np.flatnonzero(fallback):
        upper = T_prev[i] + dt * absorbed[i] / c_v
        args = (T_prev[i], absorbed[i], kappa_B[i], heat, c, a_R)
        if upper <= 0 or _meb_residual(upper, *args) < 0 or _meb_residual(0.0, *args) > 0:
            raise NumericalError(
                f"No nonnegative temperature balances cell {i} (absorbed {absorbed[i]:.3e})"
            )
        T[i] = brentq(_meb_residual, 0.0, upper, args=args, xtol=1e-300, rtol=4 * MEB_TOLERANCE)
        converged[i] = True

    if not np.all(converged):
        raise NumericalError(
            f"Temperature Newton failed to converge in {MEB_MAX_ITERATIONS} iterations "
            f"in {int((~converged).sum())} cells"
        )
    return T


@dataclass(frozen=True)
class GreySolution:
    E: np.ndarray  # (Nx,)
    F: np.ndarray  # (Nx+1,)
    E_b: np.ndarray  # (2,)
    T: np.ndarray  # (Nx,)
    iterations: int


def solve_grey_meb(
    mesh: SpatialMesh,
    grey: GreyProblem,
    T_prev: np.ndarray,
    dt: float,
    material: MaterialModel,
    T_start: Optional[np.ndarray] = None,
) -> GreySolution:
    """
    Grey LOQD coupled to the material energy balance, both backward Euler.

    Emission is linearized about the current temperature to eliminate T from
    the grey balance; after each (E, F) solve the temperature is brought onto
    the exact quartic balance, until (E, T) settle.
    """
    c, a_R = material.constants.c, material.constants.a_R
    c_v = material.eos.c_v
    kappa_E, kappa_B = grey.cell.kappa_E, grey.cell.kappa_B
    T_star = np.array(T_prev if T_start is None else T_start, dtype=float)
    E_old: Optional[np.ndarray] = None
    heat = c_v / dt

    for iteration in range(1, MEB_MAX_ITERATIONS + 1):
        beta = 4.0 * c * kappa_B * a_R * T_star**3
        denom = heat + beta
        base = heat * T_prev + 3.0 * c * kappa_B * a_R * T_star**4
        absorption = c * kappa_E * (1.0 - beta / denom)
        source = c * kappa_B * a_R * T_star**4 + beta * (base / denom - T_star)
        system = replace(grey.system, absorption=absorption[None], source=source[None])
        solution = solve_fv_system(mesh, system, dt, c)
        E = solution.E[0]
        T = update_temperature(E, T_star, T_prev, kappa_E, kappa_B, c_v, dt, c, a_R)

        dT = relative_change(T, T_star)
        dE = np.inf if E_old is None else relative_change(E, E_old)
        logger.debug(f"grey/MEB iteration {iteration}: dT={dT:.3e} dE={dE:.3e}")
        T_star, E_old = T, E
        if dT <= MEB_TOLERANCE and dE <= MEB_TOLERANCE:
            return GreySolution(
                E=E, F=solution.F[0], E_b=solution.E_b[0], T=T, iterations=iteration
            )

    raise NumericalError(
        f"Grey/MEB iteration did not converge in {MEB_MAX_ITERATIONS} iterations "
        f"(last dT={dT:.3e}, dE={dE:.3e})"
    )


def relative_change(new: np.ndarray, old: np.ndarray) -> float:
    scale = np.linalg.norm(new)
    diff = np.linalg.norm(new - old)
    return float(diff / scale) if scale > 0 else float(diff)
