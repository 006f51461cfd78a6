"""
Tests for the POD-Galerkin reduced solve, stage transitions and reduced-order runs.
"""

import warnings

import numpy as np
import pytest
from scipy.linalg import LinAlgWarning

import src.rom as rom_module

from src.errors import ConfigError, FingerprintMismatchError, NumericalError
from src.fom import initial_state
from src.pod import (
    PodBasis,
    SnapshotDatabase,
    WeightOperator,
    compute_pod_basis,
    project,
    reconstruct,
)
from src.rom import (
    ReducedSolver,
    assemble_reduced,
    relative_residual,
    resolve_ranks,
    run_rom,
    solve_reduced_step,
    stage_ranks_label,
    stage_transition,
)
from src.transport import TransportOperator


@pytest.fixture(scope="module")
def fom_bases(small_fom):
    problem, result = small_fom
    weights = WeightOperator.from_grid(problem.grid)
    return [compute_pod_basis(db, weights) for db in result.databases]


def relative_w_error(weights, a, b):
    return weights.norm(a - b) / weights.norm(b)


@pytest.mark.unit
class TestReducedStep:
    """Test a single reduced solve against the recorded full-order step."""

    def test_full_rank_reproduces_fom_step(self, small_fom, fom_bases):
        """Test that the Galerkin solve recovers a step whose snapshots span the basis."""
        problem, result = small_fom
        weights = WeightOperator.from_grid(problem.grid)
        operator = TransportOperator(problem.grid, problem.material)
        db = result.databases[1]
        basis = fom_bases[1]
        ops = assemble_reduced(basis, basis.rank, operator, problem.bc, weights)

        # stage 2 holds steps 3 and 4
        I_prev, I_next = db.matrix[:, 0], db.matrix[:, 1]
        T_next = result.record.temperature[4]
        lam_prev = project(I_prev, basis, weights).values
        values, condition = solve_reduced_step(ops, lam_prev, T_next, 0.005, problem.material)

        recovered = basis.vectors @ values
        assert relative_w_error(weights, recovered, I_next) < 1e-7
        assert 1.0 <= condition < 1e8

    def test_gram_blocks_match_dense_removal(self, small_problem, fom_bases, rng):
        weights = WeightOperator.from_grid(small_problem.grid)
        operator = TransportOperator(small_problem.grid, small_problem.material)
        basis = fom_bases[2]
        blocks = assemble_reduced(basis, basis.rank, operator, small_problem.bc, weights)
        dense = assemble_reduced(basis, basis.rank, operator, small_problem.bc, weights, 0)
        assert blocks.gram_blocks is not None and dense.gram_blocks is None
        kappa = rng.uniform(0.1, 100.0, (small_problem.grid.groups.n_groups, 8))
        np.testing.assert_allclose(blocks.removal(kappa), dense.removal(kappa), rtol=1e-12)

    def test_removal_matches_full_operator(self, small_problem, fom_bases, rng):
        """Test that the projected removal equals U^T W K U built from the full operator."""
        weights = WeightOperator.from_grid(small_problem.grid)
        operator = TransportOperator(small_problem.grid, small_problem.material)
        basis = fom_bases[0]
        ops = assemble_reduced(basis, basis.rank, operator, small_problem.bc, weights)
        kappa = rng.uniform(0.1, 100.0, (small_problem.grid.groups.n_groups, 8))
        full = np.column_stack([operator.apply_removal_kappa(kappa, u) for u in basis.vectors.T])
        expected = basis.vectors.T @ weights.apply(full)
        np.testing.assert_allclose(ops.removal(kappa), expected, rtol=1e-10, atol=1e-12)

    def test_streaming_matches_matrix_free(self, small_problem, fom_bases):
        """Test that M_L equals <u_l, L_h u_k>_W applied one mode at a time."""
        weights = WeightOperator.from_grid(small_problem.grid)
        operator = TransportOperator(small_problem.grid, small_problem.material)
        basis = fom_bases[1]
        ops = assemble_reduced(basis, basis.rank, operator, small_problem.bc, weights)
        U = basis.vectors
        for l in range(basis.rank):
            for k in range(basis.rank):
                expected = weights.inner(U[:, l], operator.apply_streaming(U[:, k]))
                assert ops.streaming[l, k] == pytest.approx(expected, rel=1e-12, abs=1e-10)

    def test_gram_blocks_sum_to_identity(self, small_problem, fom_bases):
        weights = WeightOperator.from_grid(small_problem.grid)
        operator = TransportOperator(small_problem.grid, small_problem.material)
        for basis in fom_bases:
            ops = assemble_reduced(basis, basis.rank, operator, small_problem.bc, weights)
            total = ops.gram_blocks.sum(axis=(0, 1))
            np.testing.assert_allclose(total, np.eye(basis.rank), atol=1e-12)

    def test_galerkin_residual_is_w_orthogonal_to_basis(self, small_fom, fom_bases):
        """Test that the full residual of a truncated reduced solve has no component in span U."""
        problem, result = small_fom
        weights = WeightOperator.from_grid(problem.grid)
        operator = TransportOperator(problem.grid, problem.material)
        basis = fom_bases[2].truncated(1)
        ops = assemble_reduced(basis, 1, operator, problem.bc, weights)
        dt = 0.005
        T = result.record.temperature[6]
        lam_prev = project(result.databases[2].matrix[:, 0], basis, weights).values
        values, _ = solve_reduced_step(ops, lam_prev, T, dt, problem.material)

        U = basis.vectors
        residual = operator.residual(U @ values, U @ lam_prev, T, dt, problem.bc)
        projected = U.T @ weights.apply(residual)
        source = U.T @ weights.apply(operator.assemble_source(T, problem.bc))
        scale = np.linalg.norm(source) + np.linalg.norm(lam_prev) / (operator.c * dt)
        assert np.linalg.norm(projected) < 1e-10 * scale
        assert weights.norm(residual) > 1e-9 * weights.norm(U @ values) / (operator.c * dt)

    def test_grid_mismatch_rejected(self, small_problem, fom_bases):
        weights = WeightOperator.from_grid(small_problem.grid)
        operator = TransportOperator(small_problem.grid, small_problem.material)
        basis = fom_bases[0]
        alien = PodBasis(basis.vectors, basis.singular_values, 1, fingerprint=12345)
        with pytest.raises(FingerprintMismatchError):
            assemble_reduced(alien, 1, operator, small_problem.bc, weights)


@pytest.mark.unit
class TestStageTransition:
    """Test the hand-over between stage bases."""

    def test_same_basis_is_exact(self, small_problem, fom_bases, rng):
        weights = WeightOperator.from_grid(small_problem.grid)
        basis = fom_bases[2]
        coeffs = project(basis.vectors @ rng.normal(size=basis.rank), basis, weights)
        moved, residual = stage_transition(coeffs, basis, basis, weights)
        np.testing.assert_allclose(moved.values, coeffs.values, atol=1e-12)
        assert residual < 1e-10

    def test_field_in_new_span_is_exact(self, small_fom, fom_bases, rng):
        """Test that a state lying in the new basis span survives the transition."""
        problem, result = small_fom
        weights = WeightOperator.from_grid(problem.grid)
        merged = SnapshotDatabase(
            matrix=np.hstack([db.matrix for db in result.databases[1:]]),
            dt=np.concatenate([db.dt for db in result.databases[1:]]),
            stage=3,
            fingerprint=problem.grid.fingerprint,
        )
        old, new = fom_bases[1], compute_pod_basis(merged, weights)
        coeffs = project(old.vectors @ rng.normal(size=old.rank), old, weights)
        moved, residual = stage_transition(coeffs, old, new, weights)
        before = reconstruct(coeffs, old)
        assert residual < 1e-8
        assert relative_w_error(weights, reconstruct(moved, new), before) < 1e-8

    def test_residual_is_relative(self, small_problem, fom_bases):
        weights = WeightOperator.from_grid(small_problem.grid)
        coeffs = project(fom_bases[0].vectors[:, 0], fom_bases[0], weights)
        _, residual = stage_transition(coeffs, fom_bases[0], fom_bases[2], weights, 1)
        assert 0.0 <= residual <= 1.0


@pytest.mark.unit
class TestResolveRanks:
    """Test per-stage rank resolution."""

    def test_explicit_ranks(self, fom_bases):
        bases = {b.stage: b for b in fom_bases}
        assert resolve_ranks(bases, 3, ranks=[1, 2, 1]) == {1: 1, 2: 2, 3: 1}

    def test_eps_ranks(self, fom_bases):
        bases = {b.stage: b for b in fom_bases}
        chosen = resolve_ranks(bases, 3, eps=1e-16)
        assert chosen == {b.stage: b.rank for b in fom_bases}

    def test_missing_stage(self, fom_bases):
        with pytest.raises(ConfigError, match="No basis"):
            resolve_ranks({1: fom_bases[0]}, 3, eps=1e-5)

    def test_too_few_ranks(self, fom_bases):
        bases = {b.stage: b for b in fom_bases}
        with pytest.raises(ConfigError, match="entries"):
            resolve_ranks(bases, 3, ranks=[1, 1])

    def test_rank_out_of_range(self, fom_bases):
        bases = {b.stage: b for b in fom_bases}
        with pytest.raises(ConfigError, match="outside"):
            resolve_ranks(bases, 3, ranks=[1, 0, 1])
        with pytest.raises(ConfigError, match="outside"):
            resolve_ranks(bases, 3, ranks=[1, 1, fom_bases[2].rank + 1])

    def test_neither_eps_nor_ranks(self, fom_bases):
        bases = {b.stage: b for b in fom_bases}
        with pytest.raises(ConfigError):
            resolve_ranks(bases, 3)

    def test_label(self):
        assert stage_ranks_label([14, 14, 12]) == "14-14-12"


@pytest.mark.unit
class TestRunRom:
    """Test reduced-order runs of the small slab."""

    def test_full_rank_run_tracks_fom(self, small_fom, fom_bases):
        problem, result = small_fom
        record = run_rom(problem, fom_bases, eps=1e-16)
        reference = result.record.T
        assert record.T.shape == reference.shape
        error_T = np.linalg.norm(record.T - reference, axis=1) / np.linalg.norm(reference, axis=1)
        energy = result.record.E
        error_E = np.linalg.norm(record.E - energy, axis=1) / np.linalg.norm(energy, axis=1)
        assert error_T.max() < 1e-9
        assert error_E.max() < 1e-9

    def test_history_carries_reduced_diagnostics(self, small_fom, fom_bases):
        problem, _ = small_fom
        record = run_rom(problem, fom_bases, ranks=[1, 1, 1])
        history = record.history
        assert [row["rank"] for row in history] == [1] * 6
        transitions = [row["transition_residual"] for row in history]
        assert np.isnan(transitions[0]) and np.isnan(transitions[1])
        assert 0.0 <= transitions[2] <= 1.0
        assert 0.0 <= transitions[4] <= 1.0
        assert all(np.isfinite(row["condition"]) for row in history)
        assert all(row["energy_bookkeeping"] < 1e-10 for row in history)

    def test_commit_before_solve_rejected(self, small_problem, fom_bases):
        solver = ReducedSolver(
            small_problem,
            {b.stage: b for b in fom_bases},
            {1: 1, 2: 1, 3: 1},
            initial_state(small_problem).intensity,
        )
        solver.begin_step(1, 1)
        with pytest.raises(NumericalError):
            solver.commit()


@pytest.mark.unit
class TestReducedSolveChecks:
    """Test the residual and warning checks around the dense reduced solve."""

    @pytest.fixture
    def reduced_step(self, small_fom, fom_bases):
        problem, result = small_fom
        weights = WeightOperator.from_grid(problem.grid)
        operator = TransportOperator(problem.grid, problem.material)
        basis = fom_bases[0]
        ops = assemble_reduced(basis, basis.rank, operator, problem.bc, weights)
        lam_prev = project(result.databases[0].matrix[:, 0], basis, weights).values
        return ops, lam_prev, result.record.temperature[2], problem.material

    def test_relative_residual(self):
        matrix = np.array([[2.0, 0.0], [0.0, 4.0]])
        assert relative_residual(matrix, np.array([1.0, 1.0]), np.array([2.0, 4.0])) == 0.0
        misfit = relative_residual(matrix, np.array([1.0, 0.0]), np.array([2.0, 4.0]))
        assert misfit == pytest.approx(4.0 / np.sqrt(20.0))
        assert relative_residual(matrix, np.array([0.5, 0.0]), np.zeros(2)) == 1.0

    def test_solution_meets_residual_tolerance(self, reduced_step):
        ops, lam_prev, T, material = reduced_step
        values, _ = solve_reduced_step(ops, lam_prev, T, 0.005, material)
        assert np.all(np.isfinite(values))

    def test_lapack_warning_becomes_numerical_error(self, reduced_step, monkeypatch):
        ops, lam_prev, T, material = reduced_step
        solve = rom_module.lu_solve

        def warning_solve(factors, rhs):
            warnings.warn("ill-conditioned matrix", LinAlgWarning)
            return solve(factors, rhs)

        monkeypatch.setattr(rom_module, "lu_solve", warning_solve)
        with pytest.raises(NumericalError, match="ill-conditioned"):
            solve_reduced_step(ops, lam_prev, T, 0.005, material)

    def test_unresolved_residual_rejected(self, reduced_step, monkeypatch):
        """Test that a solve whose residual survives one refinement step is an error."""
        ops, lam_prev, T, material = reduced_step
        monkeypatch.setattr(rom_module, "lu_solve", lambda factors, rhs: np.zeros_like(rhs))
        with pytest.raises(NumericalError, match="residual"):
            solve_reduced_step(ops, lam_prev, T, 0.005, material)


@pytest.mark.unit
class TestTruncatedRom:
    """Test rank selection and truncated runs on five snapshots per stage."""

    @pytest.fixture(scope="class")
    def refined_bases(self, refined_fom):
        problem, result = refined_fom
        weights = WeightOperator.from_grid(problem.grid)
        return [compute_pod_basis(db, weights) for db in result.databases]

    def test_five_snapshots_per_stage(self, refined_fom, refined_bases):
        _, result = refined_fom
        assert [db.n_columns for db in result.databases] == [5, 5, 5]
        assert all(basis.rank > 2 for basis in refined_bases)

    def test_loose_eps_truncates(self, refined_bases):
        bases = {b.stage: b for b in refined_bases}
        chosen = resolve_ranks(bases, 3, eps=1e-2)
        assert all(1 <= chosen[s] <= bases[s].rank for s in bases)
        assert any(chosen[s] < bases[s].rank for s in bases)
        tight = resolve_ranks(bases, 3, eps=1e-12)
        assert all(tight[s] >= chosen[s] for s in bases)

    def test_truncation_error_shrinks_with_rank(self, refined_fom, refined_bases):
        problem, result = refined_fom
        reference = result.record.T

        def max_error(**kwargs):
            record = run_rom(problem, refined_bases, **kwargs)
            diff = np.linalg.norm(record.T - reference, axis=1)
            return float(np.max(diff / np.linalg.norm(reference, axis=1)))

        truncated = max_error(ranks=[1, 1, 1])
        selected = max_error(eps=1e-2)
        full = max_error(eps=1e-16)
        assert np.isfinite(truncated) and np.isfinite(selected)
        assert full < truncated
        assert full < 1e-6
