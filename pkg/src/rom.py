"""
POD-Galerkin reduced intensity solve and the reduced-order run built on it.

The reduced model swaps the transport sweep for a dense r x r solve in the
coefficients of a W-orthonormal POD basis; the moment equations, closures and
material balance are the same code the full-order model uses.
"""

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve

from src.config import Problem
from src.errors import ConfigError, NumericalError
from src.fom import RunRecord, initial_state, run_transient
from src.physics import MaterialModel
from src.pod import (
    PodBasis,
    ReducedCoefficients,
    WeightOperator,
    project,
    reconstruct,
    select_rank,
)
from src.transport import BoundarySpec, TransportOperator

logger = logging.getLogger(__name__)

DEFAULT_GRAM_BLOCK_LIMIT = 20_000_000
SINGULAR_CONDITION = 1.0 / np.finfo(float).eps
RESIDUAL_TOLERANCE = 1.0e-12


@dataclass(frozen=True)
class ReducedOperators:
    """Temperature-independent pieces of the projected transport equation for one basis."""

    basis: PodBasis
    streaming: np.ndarray  # (r, r) <u_l, L u_l'>_W
    emission_weights: np.ndarray  # (Ng, Nx, r) sum over angles and corners of W u_l
    inflow: np.ndarray  # (r,) <u_l, Q_inflow>_W
    gram_blocks: Optional[np.ndarray]  # (Ng, Nx, r, r), or None when over the size limit
    scaled_vectors: Optional[np.ndarray]  # (D, r) W^(1/2) U when gram_blocks is None
    c: float

    @property
    def rank(self) -> int:
        return self.basis.rank

    def removal(self, kappa: np.ndarray) -> np.ndarray:
        """<u_l, K(T) u_l'>_W for group opacities kappa (Ng, Nx)."""
        if self.gram_blocks is not None:
            return np.einsum("gi,gilk->lk", kappa, self.gram_blocks)
        n_groups, n_cells = kappa.shape
        r = self.rank
        v = self.scaled_vectors.reshape(n_groups, -1, n_cells, 2, r)
        weighted = kappa[:, None, :, None, None] * v
        return np.einsum("gmicl,gmick->lk", v, weighted)

    def emission(self, emission_density: np.ndarray) -> np.ndarray:
        """<u_l, Q_emission>_W for the isotropic emission 2 pi kappa B, shape (Ng, Nx)."""
        return np.einsum("gi,gil->l", emission_density, self.emission_weights)


def assemble_reduced(
    basis: PodBasis,
    r: int,
    operator: TransportOperator,
    bc: BoundarySpec,
    weights: WeightOperator,
    gram_block_limit: int = DEFAULT_GRAM_BLOCK_LIMIT,
) -> ReducedOperators:
    """Project the streaming operator, inflow and removal/emission structure onto ``r`` modes."""
    basis.check_grid(operator.grid)
    basis = basis.truncated(r)
    layout = operator.layout
    n_groups, n_angles, n_cells, corners = layout.shape
    U = basis.vectors
    WU = weights.apply(U)

    streamed = operator.apply_streaming(U.T)  # (r, D)
    streaming = WU.T @ streamed.T
    inflow = WU.T @ operator.inflow_source(bc)
    emission_weights = WU.reshape(n_groups, n_angles, n_cells, corners, r).sum(axis=(1, 3))

    scaled = weights.sqrt()[:, None] * U
    gram_blocks = None
    if n_groups * n_cells * r * r <= gram_block_limit:
        v = scaled.reshape(n_groups, n_angles, n_cells, corners, r)
        gram_blocks = np.einsum("gmicl,gmick->gilk", v, v)
        scaled_vectors = None
    else:
        logger.info(f"Stage {basis.stage}: r={r} over the Gram block limit, using dense removal")
        scaled_vectors = scaled
    return ReducedOperators(
        basis=basis,
        streaming=streaming,
        emission_weights=emission_weights,
        inflow=inflow,
        gram_blocks=gram_blocks,
        scaled_vectors=scaled_vectors,
        c=operator.c,
    )


def solve_reduced_step(
    ops: ReducedOperators,
    coefficients_prev: np.ndarray,
    temperature: np.ndarray,
    dt: float,
    material: MaterialModel,
) -> Tuple[np.ndarray, float]:
    """
    Solve [(1/(c dt)) I + M_L + M_K(T)] lam = lam_prev/(c dt) + q(T).

    Returns:
        (coefficients, condition number of the reduced matrix)
    """
    inv_cdt = 1.0 / (ops.c * dt)
    kappa = material.opacity(temperature)
    emission = kappa * material.equilibrium_intensity(temperature)
    matrix = inv_cdt * np.eye(ops.rank) + ops.streaming + ops.removal(kappa)
    rhs = inv_cdt * coefficients_prev + ops.emission(emission) + ops.inflow

    condition = float(np.linalg.cond(matrix))
    if not math.isfinite(condition) or condition > SINGULAR_CONDITION:
        raise NumericalError(
            f"Reduced system of rank {ops.rank} is singular (condition estimate {condition:.3e})"
        )
    with warnings.catch_warnings(), np.errstate(all="raise", under="ignore"):
        warnings.simplefilter("error", LinAlgWarning)
        try:
            factors = lu_factor(matrix, check_finite=True)
            solution = lu_solve(factors, rhs)
            residual = relative_residual(matrix, solution, rhs)
            if residual > RESIDUAL_TOLERANCE:
                # one refinement step with the same factors
                solution = solution + lu_solve(factors, rhs - matrix @ solution)
                residual = relative_residual(matrix, solution, rhs)
        except (LinAlgWarning, FloatingPointError, ValueError) as exc:
            raise NumericalError(f"Reduced solve failed at rank {ops.rank}: {exc}") from exc

    if residual > RESIDUAL_TOLERANCE:
        raise NumericalError(
            f"Reduced solve at rank {ops.rank} left residual {residual:.3e} "
            f"(condition {condition:.3e})"
        )
    return solution, condition


def relative_residual(matrix: np.ndarray, solution: np.ndarray, rhs: np.ndarray) -> float:
    """||A x - b|| / ||b||, or ||A x|| when b vanishes."""
    misfit = float(np.linalg.norm(matrix @ solution - rhs))
    scale = float(np.linalg.norm(rhs))
    return misfit / scale if scale > 0 else misfit


def stage_transition(
    coefficients: ReducedCoefficients,
    old_basis: PodBasis,
    new_basis: PodBasis,
    weights: WeightOperator,
    r_new: Optional[int] = None,
) -> Tuple[ReducedCoefficients, float]:
    """
    Hand a reduced state over to the next stage's basis.

    Returns:
        (coefficients in the new basis, relative W-norm of the part the new basis misses)
    """
    intensity = reconstruct(coefficients, old_basis)
    projected = project(intensity, new_basis, weights, r_new)
    norm = weights.norm(intensity)
    missed = weights.norm(intensity - reconstruct(projected, new_basis))
    return projected, (missed / norm if norm > 0 else 0.0)


class ReducedSolver:
    """Intensity solver of the reduced model; keeps the committed coefficients between steps."""

    def __init__(
        self,
        problem: Problem,
        bases: Mapping[int, PodBasis],
        ranks: Mapping[int, int],
        initial_intensity: np.ndarray,
        gram_block_limit: int = DEFAULT_GRAM_BLOCK_LIMIT,
    ):
        self.problem = problem
        self.operator = TransportOperator(problem.grid, problem.material)
        self.weights = WeightOperator.from_grid(problem.grid)
        self.bases = dict(bases)
        self.ranks = dict(ranks)
        self.gram_block_limit = gram_block_limit
        self._ops: Dict[int, ReducedOperators] = {}
        self.stage = 1
        self.coefficients = project(
            initial_intensity, self.bases[1], self.weights, self.ranks[1]
        )
        self._last: Optional[np.ndarray] = None
        self._condition = float("nan")
        self._transition_residual = float("nan")

    def operators(self, stage: int) -> ReducedOperators:
        if stage not in self._ops:
            self._ops[stage] = assemble_reduced(
                self.bases[stage],
                self.ranks[stage],
                self.operator,
                self.problem.bc,
                self.weights,
                self.gram_block_limit,
            )
        return self._ops[stage]

    def begin_step(self, step: int, stage: int) -> None:
        self._last = None
        self._transition_residual = float("nan")
        if stage != self.stage:
            old = self.bases[self.stage]
            self.coefficients, residual = stage_transition(
                self.coefficients, old, self.bases[stage], self.weights, self.ranks[stage]
            )
            logger.info(
                f"Stage {self.stage} -> {stage} at step {step}: "
                f"transition residual {residual:.3e}"
            )
            self.stage = stage
            self._transition_residual = residual

    def solve(self, temperature: np.ndarray, dt: float) -> np.ndarray:
        ops = self.operators(self.stage)
        values, self._condition = solve_reduced_step(
            ops, self.coefficients.values, temperature, dt, self.problem.material
        )
        self._last = values
        return ops.basis.vectors @ values

    def commit(self) -> None:
        if self._last is None:
            raise NumericalError("commit() called before any reduced solve in this step")
        self.coefficients = ReducedCoefficients(values=self._last, stage=self.stage)

    def diagnostics(self) -> Dict[str, Any]:
        return {
            "rank": self.coefficients.rank,
            "condition": self._condition,
            "transition_residual": self._transition_residual,
        }


def resolve_ranks(
    bases: Mapping[int, PodBasis],
    n_stages: int,
    eps: Optional[float] = None,
    ranks: Optional[Sequence[int]] = None,
) -> Dict[int, int]:
    """Per-stage ranks from explicit values or from the tail-energy threshold ``eps``."""
    missing = [stage for stage in range(1, n_stages + 1) if stage not in bases]
    if missing:
        raise ConfigError(f"No basis for stage(s) {missing}; run make-basis on a matching FOM run")
    if ranks is not None:
        if len(ranks) < n_stages:
            raise ConfigError(f"rom.ranks needs {n_stages} entries, got {len(ranks)}")
        chosen = {stage: int(ranks[stage - 1]) for stage in range(1, n_stages + 1)}
        for stage, r in chosen.items():
            if not 1 <= r <= bases[stage].rank:
                raise ConfigError(
                    f"rom.ranks[{stage - 1}]={r} outside 1..{bases[stage].rank} of stage {stage}"
                )
        return chosen
    if eps is None:
        raise ConfigError("Either rom.eps or rom.ranks must be set")
    return {
        stage: select_rank(bases[stage].singular_values, eps) for stage in range(1, n_stages + 1)
    }


def run_rom(
    problem: Problem,
    bases: Sequence[PodBasis],
    eps: Optional[float] = None,
    ranks: Optional[Sequence[int]] = None,
    gram_block_limit: int = DEFAULT_GRAM_BLOCK_LIMIT,
    label: str = "rom",
) -> RunRecord:
    """Reduced-order run over the problem's time grid with one basis per stage."""
    by_stage = {basis.stage: basis for basis in bases}
    for basis in by_stage.values():
        basis.check_grid(problem.grid)
    chosen = resolve_ranks(by_stage, problem.time.n_stages, eps, ranks)
    logger.info(
        f"[{label}] ranks per stage: "
        + ", ".join(f"{stage}: {r}/{by_stage[stage].rank}" for stage, r in chosen.items())
    )
    start = initial_state(problem)
    solver = ReducedSolver(problem, by_stage, chosen, start.intensity, gram_block_limit)
    return run_transient(problem, solver, label, start=start)


def stage_ranks_label(ranks: List[int]) -> str:
    return "-".join(str(r) for r in ranks)
