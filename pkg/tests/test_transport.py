"""
Unit tests for the SCB transport sweep and its matrix-free operators.
"""

import numpy as np
import pytest

from src.discretization import PhaseSpaceGrid, SpatialMesh, build_double_gauss_legendre
from src.errors import LayoutError, NumericalError
from src.physics import GroupStructure, MaterialEos, MaterialModel, OpacityModel, PhysConstants
from src.transport import BoundarySpec, TransportOperator, count_negative, isotropic_intensity


@pytest.fixture
def operator(grid, material):
    return TransportOperator(grid, material)


@pytest.fixture
def hot_left(grid, material):
    return BoundarySpec.blackbody(grid, material, left_temperature=1.0)


@pytest.fixture
def temperature(grid, rng):
    return rng.uniform(0.1, 1.0, grid.mesh.n_cells)


@pytest.mark.unit
class TestSweep:
    """Test the directional sweep."""

    def test_equilibrium_is_fixed_point(self, grid, material, operator):
        """Test that a uniform equilibrium with matching inflow is left unchanged."""
        T = np.full(grid.mesh.n_cells, 0.3)
        bc = BoundarySpec.blackbody(grid, material, 0.3, 0.3)
        I_eq = operator.equilibrium_field(T)
        I = operator.sweep(T, I_eq, 0.01, bc)
        np.testing.assert_allclose(I, I_eq, rtol=1e-11)

    def test_sweep_solves_discrete_equations(self, grid, operator, hot_left, temperature, rng):
        """Test that the swept intensity zeroes the full corner residual."""
        I_prev = rng.uniform(0.0, 1.0, grid.layout.size)
        dt = 0.005
        I = operator.sweep(temperature, I_prev, dt, hot_left)
        res = operator.residual(I, I_prev, temperature, dt, hot_left)
        scale = np.max(np.abs(operator.assemble_source(temperature, hot_left)))
        scale = max(scale, np.max(I_prev) / (operator.c * dt))
        assert np.max(np.abs(res)) <= 1e-10 * scale

    def test_energy_balance(self, grid, operator, hot_left, temperature, rng):
        I_prev = rng.uniform(0.0, 1.0, grid.layout.size)
        I = operator.sweep(temperature, I_prev, 0.002, hot_left)
        assert operator.energy_balance_residual(I, I_prev, temperature, 0.002, hot_left) < 1e-10

    def test_energy_balance_of_equilibrium(self, grid, material, operator):
        """Test that absorption and emission carry the same corner weights."""
        T = np.full(grid.mesh.n_cells, 0.3)
        bc = BoundarySpec.blackbody(grid, material, 0.3, 0.3)
        I_eq = operator.equilibrium_field(T)
        assert operator.energy_balance_residual(I_eq, I_eq, T, 0.01, bc) < 1e-12

    def test_count_negative(self):
        assert count_negative(np.array([1.0, -2.0, 0.0, -1e-300])) == 2

    def test_nonpositive_time_step_rejected(self, grid, operator, hot_left, temperature):
        with pytest.raises(NumericalError):
            operator.sweep(temperature, np.zeros(grid.layout.size), 0.0, hot_left)

    def test_wrong_temperature_shape_rejected(self, grid, operator, hot_left):
        with pytest.raises(LayoutError):
            operator.sweep(np.ones(3), np.zeros(grid.layout.size), 0.01, hot_left)


@pytest.mark.unit
class TestOperators:
    """Test the matrix-free pieces of the discrete equations."""

    def test_streaming_annihilates_constant_interior(self, grid, operator):
        """Test that a constant field streams only through the inflow corners."""
        I = np.ones(grid.layout.size)
        field = grid.layout.as_field(operator.apply_streaming(I))
        pos, neg = grid.quadrature.positive, grid.quadrature.negative
        np.testing.assert_allclose(field[:, pos, 1:, :], 0.0, atol=1e-12)
        np.testing.assert_allclose(field[:, neg, :-1, :], 0.0, atol=1e-12)
        assert np.all(field[:, pos, 0, 0] > 0)

    def test_streaming_accepts_stacked_vectors(self, grid, operator, rng):
        stack = rng.normal(size=(3, grid.layout.size))
        out = operator.apply_streaming(stack)
        np.testing.assert_allclose(out[1], operator.apply_streaming(stack[1]))

    def test_isotropic_intensity(self, grid):
        field = grid.layout.as_field(isotropic_intensity(grid, np.arange(1.0, 5.0)))
        assert field[2].min() == field[2].max() == 3.0

    def test_inflow_source_only_on_boundary_corners(self, grid, operator, hot_left):
        q = grid.layout.as_field(operator.inflow_source(hot_left))
        pos = grid.quadrature.positive
        assert np.all(q[:, pos, 0, 0] > 0)
        q[:, pos, 0, 0] = 0.0
        assert np.all(q == 0.0)


@pytest.mark.unit
class TestBoundarySpec:
    """Test boundary inflow data."""

    def test_vacuum_is_zero(self, grid):
        bc = BoundarySpec.vacuum(grid)
        assert bc.left.shape == (grid.groups.n_groups, grid.quadrature.n_angles)
        assert not bc.left.any() and not bc.right.any()

    def test_blackbody_is_isotropic_equilibrium(self, grid, material):
        bc = BoundarySpec.blackbody(grid, material, left_temperature=0.5)
        expected = material.equilibrium_intensity(0.5)
        for m in range(grid.quadrature.n_angles):
            np.testing.assert_allclose(bc.left[:, m], expected)
        assert not bc.right.any()

    def test_negative_inflow_rejected(self, grid):
        shape = (grid.groups.n_groups, grid.quadrature.n_angles)
        with pytest.raises(NumericalError):
            BoundarySpec(-np.ones(shape), np.zeros(shape))

    def test_mismatched_shapes_rejected(self, grid):
        shape = (grid.groups.n_groups, grid.quadrature.n_angles)
        with pytest.raises(LayoutError):
            BoundarySpec(np.zeros(shape), np.zeros((1, 1)))


@pytest.mark.unit
class TestOneCellSweep:
    """Test the corner solve of a single cell against a hand-solved 2x2 system."""

    @pytest.fixture
    def one_cell(self):
        grid = PhaseSpaceGrid(
            SpatialMesh((1.0,)),
            build_double_gauss_legendre(1),
            GroupStructure((0.0, float("inf"))),
        )
        constants = PhysConstants()
        material = MaterialModel(
            constants=constants,
            groups=grid.groups,
            opacity_model=OpacityModel(),
            eos=MaterialEos(c_v=constants.a_R),
        )
        return grid, TransportOperator(grid, material)

    def test_corner_values(self, one_cell):
        """
        mu = +-1/2, dx = 1, kappa = 1, emission 2, unit inflow on the left.

        Rightward: [[3/2, 1/2], [-1/2, 3/2]] psi = [3, 2] gives psi = (1.4, 1.8).
        Leftward, no inflow: the same matrix on [2, 2] gives right, left corners 0.8, 1.6.
        """
        grid, operator = one_cell
        bc = BoundarySpec(np.array([[0.0, 1.0]]), np.zeros((1, 2)))
        I = operator.sweep(
            np.array([0.5]),
            np.zeros(grid.layout.size),
            1.0e30,
            bc,
            kappa=np.array([[1.0]]),
            emission=np.array([[2.0]]),
        )
        field = grid.layout.as_field(I)
        negative, positive = grid.quadrature.negative[0], grid.quadrature.positive[0]
        np.testing.assert_allclose(field[0, positive, 0], [1.4, 1.8], rtol=1e-14)
        np.testing.assert_allclose(field[0, negative, 0], [1.6, 0.8], rtol=1e-14)
