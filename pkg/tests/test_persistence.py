"""
Unit tests for snapshot database and basis files.
"""

import numpy as np
import pytest

from src.discretization import PhaseSpaceGrid, SpatialMesh
from src.errors import CorruptFileError, FingerprintMismatchError, PersistenceError
from src.persistence import (
    MAGIC,
    basis_path,
    database_path,
    read_basis,
    read_database,
    write_basis,
    write_database,
)
from src.pod import SnapshotDatabase, WeightOperator, compute_pod_basis


@pytest.fixture
def database(grid, rng):
    matrix = rng.normal(size=(grid.layout.size, 4))
    return SnapshotDatabase(
        matrix=matrix, dt=np.array([0.01, 0.02, 0.02, 0.05]), stage=2, fingerprint=grid.fingerprint
    )


@pytest.fixture
def other_grid(grid):
    """Same counts as ``grid`` but a different mesh."""
    return PhaseSpaceGrid(SpatialMesh.uniform(0.6, 5), grid.quadrature, grid.groups)


@pytest.mark.unit
class TestDatabaseFiles:
    """Test writing and reading snapshot databases."""

    def test_round_trip_is_bit_identical(self, tmp_path, grid, database):
        path = write_database(database_path(tmp_path, 2), database, grid)
        assert path.name == "snapshots_stage2.bin"
        loaded = read_database(path, grid)
        assert np.array_equal(loaded.matrix, database.matrix)
        assert np.array_equal(loaded.dt, database.dt)
        assert loaded.stage == 2
        assert loaded.fingerprint == grid.fingerprint

    def test_file_size(self, tmp_path, grid, database):
        path = write_database(tmp_path / "db.bin", database, grid)
        expected = len(MAGIC) + 6 * 8 + 4 * 8 + grid.layout.size * 4 * 8 + 8
        assert path.stat().st_size == expected

    def test_rewrite_gives_same_bytes(self, tmp_path, grid, database):
        a = write_database(tmp_path / "a.bin", database, grid).read_bytes()
        b = write_database(tmp_path / "b.bin", database, grid).read_bytes()
        assert a == b

    def test_no_temporary_file_left(self, tmp_path, grid, database):
        write_database(tmp_path / "db.bin", database, grid)
        assert [p.name for p in tmp_path.iterdir()] == ["db.bin"]

    def test_truncated_file(self, tmp_path, grid, database):
        path = write_database(tmp_path / "db.bin", database, grid)
        path.write_bytes(path.read_bytes()[:-9])
        with pytest.raises(CorruptFileError, match="bytes"):
            read_database(path)

    def test_bad_magic(self, tmp_path, grid, database):
        path = write_database(tmp_path / "db.bin", database, grid)
        data = bytearray(path.read_bytes())
        data[:8] = b"NOTAFILE"
        path.write_bytes(bytes(data))
        with pytest.raises(CorruptFileError, match="magic"):
            read_database(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.bin"
        path.write_bytes(b"")
        with pytest.raises(CorruptFileError):
            read_database(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(PersistenceError, match="not found"):
            read_database(tmp_path / "missing.bin")

    def test_fingerprint_mismatch_on_read(self, tmp_path, grid, other_grid, database):
        path = write_database(tmp_path / "db.bin", database, grid)
        with pytest.raises(FingerprintMismatchError):
            read_database(path, other_grid)

    def test_fingerprint_mismatch_on_write(self, tmp_path, other_grid, database):
        with pytest.raises(FingerprintMismatchError):
            write_database(tmp_path / "db.bin", database, other_grid)

    def test_unchecked_read(self, tmp_path, grid, database):
        """Test that a read without a grid skips the fingerprint check."""
        path = write_database(tmp_path / "db.bin", database, grid)
        assert read_database(path).n_columns == 4


@pytest.mark.unit
class TestBasisFiles:
    """Test writing and reading POD bases."""

    @pytest.fixture
    def basis(self, grid, database):
        return compute_pod_basis(database, WeightOperator.from_grid(grid), window=(0.01, 0.06))

    def test_round_trip_is_bit_identical(self, tmp_path, grid, basis):
        path = write_basis(basis_path(tmp_path, 2), basis, grid)
        assert path.name == "basis_stage2.bin"
        loaded = read_basis(path, grid)
        assert np.array_equal(loaded.vectors, basis.vectors)
        assert np.array_equal(loaded.singular_values, basis.singular_values)
        assert loaded.stage == 2

    def test_stage_window_round_trip(self, tmp_path, grid, basis):
        loaded = read_basis(write_basis(tmp_path / "basis.bin", basis, grid), grid)
        assert loaded.window == (0.01, 0.06)

    def test_file_size_includes_window(self, tmp_path, grid, basis):
        path = write_basis(tmp_path / "basis.bin", basis, grid)
        n = basis.rank
        expected = len(MAGIC) + 6 * 8 + n * 8 + 2 * 8 + grid.layout.size * n * 8 + 8
        assert path.stat().st_size == expected

    def test_basis_is_not_a_database(self, tmp_path, grid, basis):
        path = write_basis(tmp_path / "basis.bin", basis, grid)
        with pytest.raises(CorruptFileError, match="basis"):
            read_database(path, grid)

    def test_database_is_not_a_basis(self, tmp_path, grid, database):
        path = write_database(tmp_path / "db.bin", database, grid)
        with pytest.raises(CorruptFileError, match="database"):
            read_basis(path, grid)

    def test_basis_fingerprint_mismatch(self, tmp_path, grid, other_grid, basis):
        path = write_basis(tmp_path / "basis.bin", basis, grid)
        with pytest.raises(FingerprintMismatchError):
            read_basis(path, other_grid)
