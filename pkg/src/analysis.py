"""
CSV records of runs, error comparison between runs, and POD rank tables.

Every CSV has a header row naming the column and its unit; pandas does all
reading and writing.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from src.config import Problem
from src.discretization import PhaseSpaceGrid
from src.errors import LayoutError, PersistenceError
from src.fom import FomResult, RunRecord
from src.persistence import (
    basis_path,
    database_path,
    read_basis,
    read_database,
    write_basis,
    write_database,
)
from src.pod import PodBasis, WeightOperator, compute_pod_basis, rank_table, tail_ratios

logger = logging.getLogger(__name__)

HISTORY_CSV = "history.csv"
TEMPERATURE_CSV = "temperature.csv"
ENERGY_CSV = "energy_density.csv"
TIME_COLUMN = "time_ns"
TIME_MATCH_TOLERANCE = 1.0e-12  # ns
FLOAT_PRECISION = "round_trip"

PathLike = Union[str, Path]


def _cell_columns(prefix: str, n_cells: int) -> list:
    return [f"{prefix}_{i:03d}" for i in range(n_cells)]


def _field_frame(times, values: np.ndarray, prefix: str) -> pd.DataFrame:
    frame = pd.DataFrame(values, columns=_cell_columns(prefix, values.shape[1]))
    frame.insert(0, TIME_COLUMN, times)
    return frame


def write_record(record: RunRecord, directory: PathLike) -> Path:
    """Write history, temperature and energy density CSVs of a run into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(record.history).to_csv(directory / HISTORY_CSV, index=False)
    _field_frame(record.times, record.T, "T_keV").to_csv(directory / TEMPERATURE_CSV, index=False)
    _field_frame(record.times, record.E, "E_GJcm3").to_csv(directory / ENERGY_CSV, index=False)
    pd.DataFrame({"x_cm": record.centers}).to_csv(directory / "cells.csv", index=False)
    logger.info(f"[{record.label}] wrote {record.n_steps} steps to {directory}")
    return directory


def _read_csv(path: Path) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, float_precision=FLOAT_PRECISION)
    except FileNotFoundError:
        raise PersistenceError(f"Missing run file: {path}") from None
    except pd.errors.EmptyDataError:
        raise PersistenceError(f"Empty run file: {path}") from None
    if TIME_COLUMN not in frame.columns and path.name != HISTORY_CSV:
        raise PersistenceError(f"{path} has no {TIME_COLUMN} column")
    return frame


def read_record(directory: PathLike, label: Optional[str] = None) -> RunRecord:
    """Read the temperature and energy CSVs written by write_record back into a RunRecord."""
    directory = Path(directory)
    temperature = _read_csv(directory / TEMPERATURE_CSV)
    energy = _read_csv(directory / ENERGY_CSV)
    if not np.array_equal(temperature[TIME_COLUMN].to_numpy(), energy[TIME_COLUMN].to_numpy()):
        raise PersistenceError(f"{directory}: temperature and energy times differ")
    cells = directory / "cells.csv"
    n_cells = temperature.shape[1] - 1
    centers = np.arange(n_cells)
    if cells.exists():
        centers = pd.read_csv(cells, float_precision=FLOAT_PRECISION)["x_cm"].to_numpy()
    history_file = directory / HISTORY_CSV
    history = []
    if history_file.exists() and history_file.stat().st_size > 1:
        history = pd.read_csv(history_file, float_precision=FLOAT_PRECISION).to_dict("records")
    T = temperature.drop(columns=TIME_COLUMN).to_numpy()
    E = energy.drop(columns=TIME_COLUMN).to_numpy()
    return RunRecord(
        label=label or directory.name,
        centers=centers,
        times=temperature[TIME_COLUMN].tolist(),
        temperature=list(T),
        energy=list(E),
        history=history,
    )


def relative_errors(values: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Per-row ||values - reference|| / ||reference||; absolute error where the reference is 0."""
    diff = np.linalg.norm(values - reference, axis=1)
    scale = np.linalg.norm(reference, axis=1)
    return np.where(scale > 0, diff / np.where(scale > 0, scale, 1.0), diff)


@dataclass(frozen=True)
class ErrorReport:
    """Relative 2-norm errors of a run against a reference run, per output time."""

    label: str
    reference: str
    times: np.ndarray
    error_T: np.ndarray
    error_E: np.ndarray

    def _integral(self, errors: np.ndarray) -> float:
        return float(np.sum(errors[1:] * np.diff(self.times)))

    @property
    def max_T(self) -> float:
        return float(self.error_T.max())

    @property
    def max_E(self) -> float:
        return float(self.error_E.max())

    @property
    def integral_T(self) -> float:
        return self._integral(self.error_T)

    @property
    def integral_E(self) -> float:
        return self._integral(self.error_E)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {TIME_COLUMN: self.times, "rel_err_T": self.error_T, "rel_err_E": self.error_E}
        )

    def summary(self) -> Dict[str, float]:
        return {
            "max_rel_err_T": self.max_T,
            "max_rel_err_E": self.max_E,
            "integrated_rel_err_T_ns": self.integral_T,
            "integrated_rel_err_E_ns": self.integral_E,
        }

    def at(self, time: float) -> Dict[str, float]:
        index = int(np.argmin(np.abs(self.times - time)))
        if abs(self.times[index] - time) > TIME_MATCH_TOLERANCE:
            raise LayoutError(f"No output at t={time} ns in {self.label}")
        return {"rel_err_T": float(self.error_T[index]), "rel_err_E": float(self.error_E[index])}


def compare(run: RunRecord, reference: RunRecord) -> ErrorReport:
    """
    Errors of ``run`` against ``reference`` at every shared output time.

    Raises:
        LayoutError: when the time lists or cell counts differ
    """
    times, ref_times = np.asarray(run.times), np.asarray(reference.times)
    if times.shape != ref_times.shape or np.any(np.abs(times - ref_times) > TIME_MATCH_TOLERANCE):
        raise LayoutError(
            f"Output times of {run.label} ({times.size}) and {reference.label} "
            f"({ref_times.size}) do not match"
        )
    if run.T.shape[1] != reference.T.shape[1]:
        raise LayoutError(
            f"Cell counts differ: {run.label} has {run.T.shape[1]}, "
            f"{reference.label} has {reference.T.shape[1]}"
        )
    return ErrorReport(
        label=run.label,
        reference=reference.label,
        times=ref_times,
        error_T=relative_errors(run.T, reference.T),
        error_E=relative_errors(run.E, reference.E),
    )


def write_report(report: ErrorReport, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    report.to_frame().to_csv(path, index=False)
    logger.info(
        f"{report.label} vs {report.reference}: max error T {report.max_T:.3e}, "
        f"E {report.max_E:.3e}"
    )
    return path


def error_vs_eps_table(
    reports: Mapping[float, ErrorReport], times: Sequence[float]
) -> pd.DataFrame:
    """One row per ROM threshold with its T and E errors at each requested time."""
    rows = []
    for eps in sorted(reports, reverse=True):
        report = reports[eps]
        row = {"eps": eps}
        for t in times:
            errors = report.at(t)
            row[f"rel_err_T_t{t:g}ns"] = errors["rel_err_T"]
            row[f"rel_err_E_t{t:g}ns"] = errors["rel_err_E"]
        rows.append(row)
    return pd.DataFrame(rows)


def singular_value_frame(basis: PodBasis) -> pd.DataFrame:
    sigma = basis.singular_values
    return pd.DataFrame(
        {
            "index": np.arange(1, sigma.size + 1),
            "sigma": sigma,
            "tail_ratio": tail_ratios(sigma)[1:],
        }
    )


def rank_vs_eps_frame(bases: Sequence[PodBasis], eps_values: Sequence[float]) -> pd.DataFrame:
    frame = pd.DataFrame({"eps": list(eps_values)})
    for basis in sorted(bases, key=lambda b: b.stage):
        frame[f"rank_stage{basis.stage}"] = rank_table(basis.singular_values, eps_values)
    return frame


def save_fom_result(result: FomResult, grid: PhaseSpaceGrid, directory: PathLike) -> Path:
    """Run CSVs plus one snapshot database file per stage."""
    directory = write_record(result.record, directory)
    for db in result.databases:
        write_database(database_path(directory, db.stage), db, grid)
    return directory


def make_stage_bases(
    problem: Problem, source: PathLike, directory: PathLike, eps_values: Sequence[float]
) -> List[PodBasis]:
    """
    POD basis of every stage database in ``source``.

    Writes basis files, one singular-value CSV per stage and rank_vs_eps.csv
    into ``directory``.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    weights = WeightOperator.from_grid(problem.grid)
    bases = []
    for stage in range(1, problem.time.n_stages + 1):
        db = read_database(database_path(source, stage), problem.grid)
        basis = compute_pod_basis(db, weights, window=problem.time.stage_window(stage))
        write_basis(basis_path(directory, stage), basis, problem.grid)
        singular_value_frame(basis).to_csv(
            directory / f"singular_values_stage{stage}.csv", index=False
        )
        bases.append(basis)
    rank_vs_eps_frame(bases, eps_values).to_csv(directory / "rank_vs_eps.csv", index=False)
    return bases


def load_stage_bases(problem: Problem, directory: PathLike) -> List[PodBasis]:
    return [
        read_basis(basis_path(directory, stage), problem.grid)
        for stage in range(1, problem.time.n_stages + 1)
    ]
