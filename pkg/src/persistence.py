"""
Binary files for snapshot databases and POD bases.

Layout, all little-endian:

    8 bytes   magic "TRTROM01"
    6 x int64 Nx, Nmu, Ng, corners, columns, stage id
    n x f64   per-column values (time steps of a database, singular values of a basis)
    2 x f64   basis files only: stage window (t_start, t_end) in ns
    D*n x f64 matrix, column-major
    uint64    FNV-1a fingerprint of the grid

The stage id is the stage for a database and 1000 + stage for a basis.
"""

import logging
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from src.discretization import CORNERS, PhaseSpaceGrid
from src.errors import CorruptFileError, FingerprintMismatchError, PersistenceError
from src.pod import PodBasis, SnapshotDatabase

logger = logging.getLogger(__name__)

MAGIC = b"TRTROM01"
HEADER_FIELDS = 6
BASIS_STAGE_OFFSET = 1000
WINDOW_SLOTS = 2

PathLike = Union[str, Path]


def _encode(
    grid: PhaseSpaceGrid,
    matrix: np.ndarray,
    column_values: np.ndarray,
    stage_id: int,
    fp: int,
    window: Optional[Tuple[float, float]] = None,
) -> bytes:
    layout = grid.layout
    if matrix.shape[0] != layout.size:
        raise PersistenceError(
            f"Matrix has {matrix.shape[0]} rows, grid layout needs {layout.size}"
        )
    counts = [layout.n_cells, layout.n_angles, layout.n_groups, layout.corners]
    header = np.array(counts + [matrix.shape[1], stage_id], dtype="<i8")
    return b"".join(
        [
            MAGIC,
            header.tobytes(),
            np.asarray(column_values, dtype="<f8").tobytes(),
            b"" if window is None else np.asarray(window, dtype="<f8").tobytes(),
            np.asarray(matrix, dtype="<f8").tobytes(order="F"),
            np.array([fp], dtype="<u8").tobytes(),
        ]
    )


def _write(path: PathLike, payload: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(payload)
    tmp.replace(path)
    logger.info(f"Wrote {path} ({len(payload)} bytes)")
    return path


def _window_slots(stage_id: int) -> int:
    return WINDOW_SLOTS if stage_id >= BASIS_STAGE_OFFSET else 0


def _decode(path: PathLike) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, int]:
    """Returns (header, column values, stage window, matrix, fingerprint) of a file."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise PersistenceError(f"File not found: {path}") from None
    header_end = len(MAGIC) + 8 * HEADER_FIELDS
    if len(data) < header_end or data[: len(MAGIC)] != MAGIC:
        raise CorruptFileError(f"{path} is not a snapshot/basis file (bad magic or short header)")
    header = np.frombuffer(data, dtype="<i8", count=HEADER_FIELDS, offset=len(MAGIC))
    n_cells, n_angles, n_groups, corners, n_cols, stage_id = (int(v) for v in header)
    if min(n_cells, n_angles, n_groups, corners, n_cols) < 1:
        raise CorruptFileError(f"{path} has a nonpositive dimension in its header: {header}")
    rows = n_cells * n_angles * n_groups * corners
    slots = _window_slots(stage_id)
    expected = header_end + 8 * (n_cols + slots) + 8 * rows * n_cols + 8
    if len(data) != expected:
        raise CorruptFileError(f"{path} has {len(data)} bytes, header implies {expected}")
    column_values = np.frombuffer(data, dtype="<f8", count=n_cols, offset=header_end).copy()
    window = np.frombuffer(data, dtype="<f8", count=slots, offset=header_end + 8 * n_cols).copy()
    matrix_offset = header_end + 8 * (n_cols + slots)
    matrix = np.frombuffer(data, dtype="<f8", count=rows * n_cols, offset=matrix_offset)
    matrix = matrix.reshape((rows, n_cols), order="F").copy()
    fingerprint = int(np.frombuffer(data, dtype="<u8", count=1, offset=expected - 8)[0])
    return header, column_values, window, matrix, fingerprint


def _check_grid(path: PathLike, header: np.ndarray, fingerprint: int, grid) -> None:
    if grid is None:
        return
    layout = grid.layout
    counts = (layout.n_cells, layout.n_angles, layout.n_groups, CORNERS)
    if tuple(int(v) for v in header[:4]) != counts:
        raise FingerprintMismatchError(
            f"{path} was written for (Nx, Nmu, Ng, corners)={tuple(header[:4])}, "
            f"current grid is {counts}"
        )
    if fingerprint != grid.fingerprint:
        raise FingerprintMismatchError(
            f"{path} fingerprint {fingerprint:#018x} does not match grid {grid.fingerprint:#018x}"
        )


def write_database(path: PathLike, db: SnapshotDatabase, grid: PhaseSpaceGrid) -> Path:
    if db.fingerprint != grid.fingerprint:
        raise FingerprintMismatchError(f"Stage {db.stage} database was not built on this grid")
    return _write(path, _encode(grid, db.matrix, db.dt, db.stage, db.fingerprint))


def read_database(path: PathLike, grid: Optional[PhaseSpaceGrid] = None) -> SnapshotDatabase:
    """
    Read a snapshot database file.

    Args:
        path: File written by write_database
        grid: When given, the file must have been written on this grid

    Returns:
        SnapshotDatabase with columns and time steps exactly as written
    """
    header, dt, _, matrix, fingerprint = _decode(path)
    stage = int(header[5])
    if stage >= BASIS_STAGE_OFFSET:
        raise CorruptFileError(f"{path} holds a POD basis, not a snapshot database")
    _check_grid(path, header, fingerprint, grid)
    return SnapshotDatabase(matrix=matrix, dt=dt, stage=stage, fingerprint=fingerprint)


def write_basis(path: PathLike, basis: PodBasis, grid: PhaseSpaceGrid) -> Path:
    basis.check_grid(grid)
    stage_id = BASIS_STAGE_OFFSET + basis.stage
    payload = _encode(
        grid,
        basis.vectors,
        basis.singular_values,
        stage_id,
        basis.fingerprint,
        window=basis.window,
    )
    return _write(path, payload)


def read_basis(path: PathLike, grid: Optional[PhaseSpaceGrid] = None) -> PodBasis:
    header, sigma, window, vectors, fingerprint = _decode(path)
    stage_id = int(header[5])
    if stage_id < BASIS_STAGE_OFFSET:
        raise CorruptFileError(f"{path} holds a snapshot database, not a POD basis")
    _check_grid(path, header, fingerprint, grid)
    return PodBasis(
        vectors=vectors,
        singular_values=sigma,
        stage=stage_id - BASIS_STAGE_OFFSET,
        fingerprint=fingerprint,
        window=(float(window[0]), float(window[1])),
    )


def database_path(directory: PathLike, stage: int) -> Path:
    return Path(directory) / f"snapshots_stage{stage}.bin"


def basis_path(directory: PathLike, stage: int) -> Path:
    return Path(directory) / f"basis_stage{stage}.bin"
