"""
Time stepping of the coupled intensity / moment / material system.

One step engine serves every model: the full-order model hands it the
transport sweep as its intensity solver, the reduced model its Galerkin solve.
Per step an outer loop refreshes the intensity and its closure, and an inner
loop iterates the multigroup LOQD and grey material balance to consistency.
"""

import logging
import time as wallclock
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Protocol, Tuple

import numpy as np

from src.config import Problem
from src.errors import NumericalError
from src.loqd import (
    FaceSystem,
    FvSolution,
    LoqdState,
    QdClosure,
    collapse_to_grey,
    group_system,
    relative_change,
    solve_fv_system,
    solve_grey_meb,
)
from src.moments import compute_group_moments
from src.pod import SnapshotDatabase
from src.transport import BoundarySpec, TransportOperator

logger = logging.getLogger(__name__)

SystemBuilder = Callable[[np.ndarray, np.ndarray, Optional[FvSolution]], FaceSystem]


class IntensitySolver(Protocol):
    def begin_step(self, step: int, stage: int) -> None:
        ...

    def solve(self, temperature: np.ndarray, dt: float) -> np.ndarray:
        ...

    def commit(self) -> None:
        ...

    def diagnostics(self) -> Dict[str, Any]:
        ...


class SweepSolver:
    """Full-order intensity solver: one SCB sweep per outer iteration."""

    def __init__(self, operator: TransportOperator, bc: BoundarySpec, intensity: np.ndarray):
        self.operator = operator
        self.bc = bc
        self.intensity = np.array(intensity, dtype=float)
        self._last: Optional[np.ndarray] = None
        self._last_temperature: Optional[np.ndarray] = None
        self._last_dt = 0.0
        self._diagnostics: Dict[str, Any] = {}

    def begin_step(self, step: int, stage: int) -> None:
        self._last = None

    def solve(self, temperature: np.ndarray, dt: float) -> np.ndarray:
        self._last = self.operator.sweep(temperature, self.intensity, dt, self.bc)
        self._last_temperature = np.array(temperature)
        self._last_dt = dt
        return self._last

    def commit(self) -> None:
        if self._last is None:
            raise NumericalError("commit() called before any intensity solve in this step")
        self._diagnostics = {
            "negative_intensities": int(np.count_nonzero(self._last < 0)),
            "balance_residual": self.operator.energy_balance_residual(
                self._last, self.intensity, self._last_temperature, self._last_dt, self.bc
            ),
        }
        self.intensity = self._last

    def diagnostics(self) -> Dict[str, Any]:
        return dict(self._diagnostics)


@dataclass(frozen=True)
class StepState:
    step: int
    time: float
    intensity: np.ndarray
    moments: LoqdState


@dataclass(frozen=True)
class StepReport:
    step: int
    time: float
    dt: float
    stage: int
    outer_iterations: int
    inner_iterations: int
    change_temperature: float
    change_energy: float
    peak_inner_iterations: int = 0
    energy_bookkeeping: float = 0.0
    extras: Dict[str, Any] = field(default_factory=dict)

    def as_row(self) -> Dict[str, Any]:
        row = {
            "step": self.step,
            "time_ns": self.time,
            "dt_ns": self.dt,
            "stage": self.stage,
            "outer_iterations": self.outer_iterations,
            "inner_iterations": self.inner_iterations,
            "change_T": self.change_temperature,
            "change_E": self.change_energy,
            "peak_inner_iterations": self.peak_inner_iterations,
            "energy_bookkeeping": self.energy_bookkeeping,
        }
        row.update(self.extras)
        return row


@dataclass
class RunRecord:
    """Chronological end-of-step fields of one run; row 0 is t = 0."""

    label: str
    centers: np.ndarray
    times: List[float] = field(default_factory=list)
    temperature: List[np.ndarray] = field(default_factory=list)
    energy: List[np.ndarray] = field(default_factory=list)
    group_energy: List[np.ndarray] = field(default_factory=list)
    group_flux: List[np.ndarray] = field(default_factory=list)
    history: List[Dict[str, Any]] = field(default_factory=list)
    wall_time: float = 0.0

    def append(self, state: StepState, report: Optional[StepReport] = None) -> None:
        self.times.append(state.time)
        self.temperature.append(state.moments.T.copy())
        self.energy.append(state.moments.E.copy())
        self.group_energy.append(state.moments.E_g.copy())
        self.group_flux.append(state.moments.F_g.copy())
        if report is not None:
            self.history.append(report.as_row())

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @property
    def T(self) -> np.ndarray:
        return np.array(self.temperature)

    @property
    def E(self) -> np.ndarray:
        return np.array(self.energy)


def initial_state(problem: Problem) -> StepState:
    """Isotropic equilibrium intensity at the initial temperature in every cell."""
    n_cells = problem.mesh.n_cells
    T0 = np.full(n_cells, problem.initial_temperature)
    operator = TransportOperator(problem.grid, problem.material)
    intensity = operator.equilibrium_field(T0)
    c = problem.material.constants.c
    moments = compute_group_moments(problem.grid, intensity, problem.bc, c)
    return StepState(
        step=0,
        time=0.0,
        intensity=intensity,
        moments=LoqdState.from_groups(moments.E, moments.F, T0),
    )


def inner_ladder(
    problem: Problem,
    build_system: SystemBuilder,
    prev: LoqdState,
    dt: float,
    T_start: np.ndarray,
) -> Tuple[LoqdState, int]:
    """
    Iterate multigroup LOQD, grey coefficients and grey + MEB to consistency.

    Returns:
        (converged end-of-step moments, inner iteration count)
    """
    material, mesh = problem.material, problem.mesh
    settings = problem.settings
    c = material.constants.c
    T = np.array(T_start, dtype=float)
    E_old: Optional[np.ndarray] = None
    groups: Optional[FvSolution] = None
    for s in range(1, settings.max_inner + 1):
        kappa = material.opacity(T)
        planck = material.planck(T)
        system = build_system(kappa, planck, groups)
        groups = solve_fv_system(mesh, system, dt, c)
        grey = collapse_to_grey(mesh, system, groups, kappa, planck)
        solution = solve_grey_meb(mesh, grey, prev.T, dt, material, T_start=T)

        dT = relative_change(solution.T, T)
        dE = np.inf if E_old is None else relative_change(solution.E, E_old)
        T, E_old = solution.T, solution.E
        if dT < settings.tol_temperature and dE < settings.tol_energy:
            state = LoqdState(E_g=groups.E, F_g=groups.F, T=T, E=solution.E, F=solution.F)
            return state, s
    raise NumericalError(
        f"Inner iteration did not converge in {settings.max_inner} iterations "
        f"(last dT={dT:.3e}, dE={dE:.3e})"
    )


def energy_bookkeeping(problem: Problem, prev: LoqdState, new: LoqdState, dt: float) -> float:
    """
    Relative mismatch of radiation gain + material gain + net leakage over one step.

    Uses the grey moments; the previous radiation energy is the group sum the
    grey system was assembled from.
    """
    dx = problem.mesh.dx
    radiation = float(np.sum(dx * (new.E - prev.E_g.sum(axis=0))))
    material = float(np.sum(dx * problem.material.eos.c_v * (new.T - prev.T)))
    leakage = dt * float(new.F[-1] - new.F[0])
    scale = max(abs(radiation), abs(material), abs(leakage))
    if scale == 0.0:
        return 0.0
    return abs(radiation + material + leakage) / scale


def qd_system_builder(closure: QdClosure, prev: LoqdState, c: float) -> SystemBuilder:
    def build(kappa: np.ndarray, planck: np.ndarray, _last: Optional[FvSolution]) -> FaceSystem:
        return group_system(closure, kappa, planck, prev, c)

    return build


def advance_step(
    problem: Problem,
    state: StepState,
    dt: float,
    solver: IntensitySolver,
    stage: int = 1,
) -> Tuple[StepState, StepReport]:
    """
    Advance one backward-Euler step.

    Args:
        problem: Grid, material, boundary data and iteration settings
        state: Converged state at the start of the step
        dt: Step size in ns
        solver: Source of the end-of-step intensity for a given temperature

    Returns:
        (converged end-of-step state, step report)
    """
    settings = problem.settings
    c = problem.material.constants.c
    step = state.step + 1
    solver.begin_step(step, stage)
    T_k, E_k = state.moments.T, state.moments.E
    inner_total = 0
    inner_peak = 0
    for k in range(1, settings.max_outer + 1):
        intensity = solver.solve(T_k, dt)
        moments = compute_group_moments(problem.grid, intensity, problem.bc, c)
        closure = QdClosure.from_moments(moments)
        builder = qd_system_builder(closure, state.moments, c)
        new, inner = inner_ladder(problem, builder, state.moments, dt, T_k)
        inner_total += inner
        inner_peak = max(inner_peak, inner)

        dT = relative_change(new.T, T_k)
        dE = relative_change(new.E, E_k)
        T_k, E_k = new.T, new.E
        logger.debug(f"step {step} outer {k}: {inner} inner, dT={dT:.3e}, dE={dE:.3e}")
        if dT < settings.tol_temperature and dE < settings.tol_energy:
            break
    else:
        raise NumericalError(
            f"Step {step}: outer iteration did not converge in {settings.max_outer} iterations "
            f"(last dT={dT:.3e}, dE={dE:.3e}, {inner_total} inner iterations)"
        )
    solver.commit()
    new_state = StepState(step=step, time=state.time + dt, intensity=intensity, moments=new)
    report = StepReport(
        step=step,
        time=new_state.time,
        dt=dt,
        stage=stage,
        outer_iterations=k,
        inner_iterations=inner_total,
        change_temperature=dT,
        change_energy=dE,
        peak_inner_iterations=inner_peak,
        energy_bookkeeping=energy_bookkeeping(problem, state.moments, new, dt),
        extras=solver.diagnostics(),
    )
    return new_state, report


StepObserver = Callable[[StepState, StepReport], None]


def run_transient(
    problem: Problem,
    solver: IntensitySolver,
    label: str,
    start: Optional[StepState] = None,
    observer: Optional[StepObserver] = None,
) -> RunRecord:
    """Run every step of the problem's time grid with the given intensity solver."""
    state = start or initial_state(problem)
    record = RunRecord(label=label, centers=problem.mesh.centers.copy())
    record.append(state)
    started = wallclock.perf_counter()
    time_grid = problem.time
    for n in range(1, time_grid.n_steps + 1):
        stage = time_grid.stage_of_step(n)
        state, report = advance_step(problem, state, float(time_grid.dt[n - 1]), solver, stage)
        record.append(state, report)
        if observer is not None:
            observer(state, report)
        logger.info(
            f"[{label}] step {n}/{time_grid.n_steps} t={state.time:.4f} ns stage {stage}: "
            f"{report.outer_iterations} outer / {report.inner_iterations} inner, "
            f"max T {state.moments.T.max():.5f} keV"
        )
    record.wall_time = wallclock.perf_counter() - started
    logger.info(f"[{label}] finished {time_grid.n_steps} steps in {record.wall_time:.1f} s")
    return record


class SnapshotCollector:
    """Step observer gathering converged intensities into one database per stage."""

    def __init__(self, fingerprint: int):
        self.fingerprint = fingerprint
        self._columns: Dict[int, List[np.ndarray]] = {}
        self._dt: Dict[int, List[float]] = {}

    def __call__(self, state: StepState, report: StepReport) -> None:
        self._columns.setdefault(report.stage, []).append(state.intensity.copy())
        self._dt.setdefault(report.stage, []).append(report.dt)

    def databases(self) -> List[SnapshotDatabase]:
        return [
            SnapshotDatabase(
                matrix=np.column_stack(self._columns[stage]),
                dt=np.asarray(self._dt[stage]),
                stage=stage,
                fingerprint=self.fingerprint,
            )
            for stage in sorted(self._columns)
        ]


@dataclass
class FomResult:
    record: RunRecord
    databases: List[SnapshotDatabase]


def run_fom(problem: Problem, label: str = "fom") -> FomResult:
    """Full-order run producing the reference record and the per-stage snapshot databases."""
    start = initial_state(problem)
    operator = TransportOperator(problem.grid, problem.material)
    solver = SweepSolver(operator, problem.bc, start.intensity)
    collector = SnapshotCollector(problem.grid.fingerprint)
    record = run_transient(problem, solver, label, start=start, observer=collector)
    databases = collector.databases()
    logger.info(
        f"[{label}] snapshot databases: "
        + ", ".join(f"stage {db.stage} with {db.n_columns} columns" for db in databases)
    )
    return FomResult(record=record, databases=databases)
