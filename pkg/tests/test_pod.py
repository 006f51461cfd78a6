"""
Unit tests for the weighted POD, rank selection and projections.
"""

import numpy as np
import pytest

from src.discretization import PhaseSpaceGrid, SpatialMesh
from src.errors import ConfigError, FingerprintMismatchError, LayoutError, NumericalError
from src.pod import (
    PodBasis,
    ReducedCoefficients,
    SnapshotDatabase,
    WeightOperator,
    compute_pod_basis,
    project,
    projection_error,
    rank_table,
    reconstruct,
    select_rank,
    tail_ratios,
)


@pytest.fixture
def weights(grid):
    return WeightOperator.from_grid(grid)


@pytest.fixture
def low_rank_db(grid, rng):
    """Twelve snapshots spanning a five-dimensional subspace, uneven time steps."""
    size = grid.layout.size
    matrix = rng.normal(size=(size, 5)) @ rng.normal(size=(5, 12))
    dt = rng.uniform(0.01, 0.03, 12)
    return SnapshotDatabase(matrix=matrix, dt=dt, stage=2, fingerprint=grid.fingerprint)


@pytest.mark.unit
class TestWeightOperator:
    """Test the phase-space weight."""

    def test_total_weight(self, grid, weights):
        """Test that W sums to the quadrature weight total times the slab length, per group."""
        expected = 2.0 * grid.mesh.length * grid.groups.n_groups
        assert weights.diagonal.sum() == pytest.approx(expected, rel=1e-13)

    def test_inner_and_norm(self, weights, rng):
        a = rng.normal(size=weights.size)
        assert weights.norm(a) ** 2 == pytest.approx(float(a @ (weights.diagonal * a)))

    def test_nonpositive_weight_rejected(self):
        with pytest.raises(LayoutError):
            WeightOperator(np.array([1.0, 0.0]))


@pytest.mark.unit
class TestComputePodBasis:
    """Test the basis construction."""

    def test_numerical_rank(self, low_rank_db, weights):
        basis = compute_pod_basis(low_rank_db, weights)
        assert basis.rank == 5
        assert basis.stage == 2
        assert np.all(np.diff(basis.singular_values) <= 0)

    def test_w_orthonormal(self, low_rank_db, weights):
        basis = compute_pod_basis(low_rank_db, weights)
        gram = weights.inner(basis.vectors, basis.vectors)
        np.testing.assert_allclose(gram, np.eye(basis.rank), atol=1e-12)

    @pytest.mark.parametrize("r", [1, 2, 4, 5])
    def test_projection_error_equals_singular_tail(self, low_rank_db, weights, r):
        """Test the optimality identity: the weighted projection error is the sigma tail."""
        basis = compute_pod_basis(low_rank_db, weights)
        tail = np.sqrt(np.sum(basis.singular_values[r:] ** 2))
        total = np.sqrt(np.sum(basis.singular_values**2))
        assert projection_error(low_rank_db, basis, weights, r) == pytest.approx(
            tail, abs=1e-10 * total
        )

    def test_sign_convention(self, low_rank_db, weights):
        """Test that the largest-magnitude entry of every basis vector is positive."""
        basis = compute_pod_basis(low_rank_db, weights)
        for column in basis.vectors.T:
            assert column[np.argmax(np.abs(column))] > 0

    def test_flipped_snapshots_give_same_basis(self, low_rank_db, weights):
        flipped = SnapshotDatabase(
            matrix=-low_rank_db.matrix,
            dt=low_rank_db.dt,
            stage=low_rank_db.stage,
            fingerprint=low_rank_db.fingerprint,
        )
        a = compute_pod_basis(low_rank_db, weights)
        b = compute_pod_basis(flipped, weights)
        np.testing.assert_allclose(a.vectors, b.vectors, atol=1e-10)

    def test_zero_database_rejected(self, grid, weights):
        db = SnapshotDatabase(np.zeros((grid.layout.size, 3)), np.ones(3), 1, grid.fingerprint)
        with pytest.raises(NumericalError):
            compute_pod_basis(db, weights)

    def test_weight_size_mismatch(self, low_rank_db):
        with pytest.raises(LayoutError):
            compute_pod_basis(low_rank_db, WeightOperator(np.ones(7)))

    def test_invalid_database(self):
        with pytest.raises(LayoutError):
            SnapshotDatabase(np.ones((4, 2)), np.array([0.1, -0.1]), 1, 0)


@pytest.mark.unit
class TestRankSelection:
    """Test tail ratios and rank selection."""

    @pytest.mark.parametrize("eps,expected", [(0.5, 1), (0.05, 2), (5e-3, 3), (1e-12, 4)])
    def test_select_rank(self, eps, expected):
        sigma = np.array([1.0, 0.1, 0.01, 0.001])
        assert select_rank(sigma, eps) == expected

    def test_tail_ratios(self):
        ratios = tail_ratios(np.array([3.0, 4.0]))
        np.testing.assert_allclose(ratios, [1.0, 0.8, 0.0])

    @pytest.mark.parametrize("eps", [0.0, 1.0, -1e-3, 2.0])
    def test_eps_outside_unit_interval(self, eps):
        with pytest.raises(ConfigError):
            select_rank(np.array([1.0, 0.1]), eps)

    def test_rank_table_is_monotone(self):
        sigma = np.logspace(0, -15, 16)
        ranks = rank_table(sigma, [1e-2, 1e-5, 1e-9, 1e-14])
        assert np.all(np.diff(ranks) >= 0)
        assert ranks[-1] <= 16

    def test_no_energy_rejected(self):
        with pytest.raises(NumericalError):
            tail_ratios(np.zeros(3))


@pytest.mark.unit
class TestProjection:
    """Test projection onto and reconstruction from a basis."""

    def test_full_rank_reproduces_span(self, low_rank_db, weights):
        basis = compute_pod_basis(low_rank_db, weights)
        column = low_rank_db.matrix[:, 4]
        back = reconstruct(project(column, basis, weights), basis)
        np.testing.assert_allclose(back, column, atol=1e-10 * np.abs(column).max())

    def test_truncated_basis(self, low_rank_db, weights):
        basis = compute_pod_basis(low_rank_db, weights).truncated(3)
        assert basis.rank == 3
        with pytest.raises(LayoutError):
            basis.truncated(4)

    def test_rank_out_of_range(self, low_rank_db, weights):
        basis = compute_pod_basis(low_rank_db, weights)
        with pytest.raises(LayoutError):
            project(low_rank_db.matrix[:, 0], basis, weights, r=basis.rank + 1)

    def test_too_many_coefficients(self, low_rank_db, weights):
        basis = compute_pod_basis(low_rank_db, weights).truncated(2)
        with pytest.raises(LayoutError):
            reconstruct(ReducedCoefficients(np.ones(3), stage=2), basis)

    def test_grid_fingerprint_check(self, grid, low_rank_db, weights):
        basis = compute_pod_basis(low_rank_db, weights)
        basis.check_grid(grid)
        other = PhaseSpaceGrid(SpatialMesh.uniform(0.6, 5), grid.quadrature, grid.groups)
        with pytest.raises(FingerprintMismatchError):
            basis.check_grid(other)

    def test_coefficients_record_rank(self):
        coeffs = ReducedCoefficients(np.arange(4.0), stage=1)
        assert coeffs.rank == 4

    def test_basis_window_default(self, grid):
        basis = PodBasis(np.eye(3)[:, :2], np.array([2.0, 1.0]), 1, grid.fingerprint)
        assert np.isnan(basis.window[0])
