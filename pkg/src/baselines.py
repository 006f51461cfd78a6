"""
Multigroup P1 and flux-limited diffusion comparison models.

Neither model solves for the intensity; both run the same multigroup LOQD and
grey material balance ladder as the full-order model, with the closure fixed
(P1) or replaced by a flux limiter (FLD).
"""

import logging
import time as wallclock
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Dict, Optional

import numpy as np

from src.config import Problem
from src.errors import ConfigError
from src.fom import (
    RunRecord,
    StepReport,
    StepState,
    SystemBuilder,
    energy_bookkeeping,
    initial_state,
    inner_ladder,
    qd_system_builder,
)
from src.loqd import (
    FaceSystem,
    FvSolution,
    LoqdState,
    QdClosure,
    face_geometry,
    face_opacity,
    group_system,
    interpolate_to_faces,
    relative_change,
)
from src.moments import inflow_moments

logger = logging.getLogger(__name__)

# Below this ratio the Levermore-Pomraning limiter uses its series expansion
LP_SERIES_SWITCH = 1.0e-3


class BaselineKind(str, Enum):
    P1 = "p1"
    FLD = "fld"


def sqrt_limiter(R: np.ndarray) -> np.ndarray:
    """Lambda(R) = 1 / sqrt(9 + R^2)."""
    return 1.0 / np.sqrt(9.0 + np.asarray(R, dtype=float) ** 2)


def levermore_pomraning_limiter(R: np.ndarray) -> np.ndarray:
    """Lambda(R) = (coth R - 1/R) / R, with 1/3 - R^2/45 near R = 0."""
    R = np.asarray(R, dtype=float)
    out = np.empty_like(R)
    small = R < LP_SERIES_SWITCH
    out[small] = 1.0 / 3.0 - R[small] ** 2 / 45.0
    big = R[~small]
    out[~small] = (1.0 / np.tanh(big) - 1.0 / big) / big
    return out


LIMITERS: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "sqrt": sqrt_limiter,
    "levermore_pomraning": levermore_pomraning_limiter,
}


def knudsen_ratio(problem: Problem, kappa: np.ndarray, solution: FvSolution) -> np.ndarray:
    """R_g = |dE_g/dx| / (kappa_g E_g) at every face, (Ng, Nx+1)."""
    mesh = problem.mesh
    spacing, _, _ = face_geometry(mesh)
    E, E_b = solution.E, solution.E_b
    values = np.concatenate([E_b[:, :1], E, E_b[:, 1:]], axis=1)
    gradient = np.diff(values, axis=1) / spacing
    E_face = interpolate_to_faces(mesh, E, E_b)
    kappa_face = face_opacity(kappa)
    denom = kappa_face * np.abs(E_face)
    with np.errstate(divide="ignore", invalid="ignore"):
        R = np.where(denom > 0, np.abs(gradient) / denom, 0.0)
    return R


def fld_system_builder(
    problem: Problem,
    closure: QdClosure,
    prev: LoqdState,
    limiter: Callable[[np.ndarray], np.ndarray],
) -> SystemBuilder:
    """Group systems with F_g = -c Lambda_g grad E_g / kappa_g, Lambda lagged one iteration."""
    c = problem.material.constants.c

    def build(kappa: np.ndarray, planck: np.ndarray, last: Optional[FvSolution]) -> FaceSystem:
        system = group_system(closure, kappa, planck, prev, c)
        if last is None:
            weight = limiter(np.zeros_like(system.removal))
        else:
            weight = limiter(knudsen_ratio(problem, kappa, last))
        return replace(system, f_minus=weight, f_plus=weight, flux_time=False)

    return build


@dataclass(frozen=True)
class BaselineSpec:
    kind: BaselineKind
    limiter: str = "sqrt"

    def __post_init__(self):
        if self.limiter not in LIMITERS:
            raise ConfigError(
                f"baseline.limiter must be one of {sorted(LIMITERS)}, got {self.limiter!r}"
            )


def run_baseline(problem: Problem, spec: BaselineSpec, label: Optional[str] = None) -> RunRecord:
    """
    Run a diffusion baseline over the problem's time grid.

    Args:
        problem: Same problem the full-order model runs
        spec: Model kind and, for FLD, the flux limiter

    Returns:
        RunRecord with the same layout as full-order and reduced runs
    """
    kind = BaselineKind(spec.kind)
    label = label or f"baseline_{kind.value}"
    c = problem.material.constants.c
    E_in, F_in = inflow_moments(problem.grid, problem.bc, c)
    closure = QdClosure.diffusion(problem.mesh.n_cells, E_in, F_in)
    limiter = LIMITERS[spec.limiter]

    start = initial_state(problem)
    state = replace(start, intensity=np.empty(0))
    record = RunRecord(label=label, centers=problem.mesh.centers.copy())
    record.append(state)
    started = wallclock.perf_counter()
    time_grid = problem.time
    for n in range(1, time_grid.n_steps + 1):
        dt = float(time_grid.dt[n - 1])
        prev = state.moments
        if kind is BaselineKind.P1:
            builder = qd_system_builder(closure, prev, c)
        else:
            builder = fld_system_builder(problem, closure, prev, limiter)
        new, inner = inner_ladder(problem, builder, prev, dt, prev.T)
        report = StepReport(
            step=n,
            time=state.time + dt,
            dt=dt,
            stage=time_grid.stage_of_step(n),
            outer_iterations=1,
            inner_iterations=inner,
            change_temperature=relative_change(new.T, prev.T),
            change_energy=relative_change(new.E, prev.E),
            peak_inner_iterations=inner,
            energy_bookkeeping=energy_bookkeeping(problem, prev, new, dt),
        )
        state = StepState(step=n, time=report.time, intensity=state.intensity, moments=new)
        record.append(state, report)
        logger.info(
            f"[{label}] step {n}/{time_grid.n_steps} t={state.time:.4f} ns: "
            f"{inner} inner, max T {new.T.max():.5f} keV"
        )
    record.wall_time = wallclock.perf_counter() - started
    logger.info(f"[{label}] finished {time_grid.n_steps} steps in {record.wall_time:.1f} s")
    return record
