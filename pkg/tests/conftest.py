"""
Pytest configuration and shared fixtures.
"""

import os
from pathlib import Path

import numpy as np
import pytest

from src.config import build_problem, load_config
from src.discretization import PhaseSpaceGrid, SpatialMesh, build_double_gauss_legendre
from src.fom import run_fom
from src.physics import (
    GroupStructure,
    MaterialEos,
    MaterialModel,
    OpacityModel,
    PhysConstants,
)

FIXTURES = Path(__file__).parent / "fixtures"
SMALL_SLAB = FIXTURES / "small_slab.yaml"


@pytest.fixture(autouse=True)
def skip_benchmark_tests_unless_requested(request):
    """Skip full benchmark runs unless RUN_BENCHMARK_TESTS is set."""
    requested = os.getenv("RUN_BENCHMARK_TESTS") == "true"
    if request.node.get_closest_marker("integration") and not requested:
        pytest.skip("Benchmark tests skipped; set RUN_BENCHMARK_TESTS=true to run them")


@pytest.fixture(autouse=True)
def isolated_output(tmp_path, monkeypatch):
    """Send every run's output into the test's temporary directory."""
    monkeypatch.setenv("TRTROM_OUT", str(tmp_path / "output"))


@pytest.fixture
def small_config():
    return load_config(SMALL_SLAB)


@pytest.fixture
def small_problem(small_config):
    return build_problem(small_config)


@pytest.fixture
def equilibrium_problem():
    """Small slab at 0.3 keV bathed in 0.3 keV black-body inflow on both faces."""
    overrides = {
        "problem": {
            "inflow_temperature": 0.3,
            "right_inflow_temperature": 0.3,
            "initial_temperature": 0.3,
        }
    }
    return build_problem(load_config(SMALL_SLAB, overrides))


@pytest.fixture(scope="session")
def small_fom():
    """Full-order run of the small slab, shared by the reduced-order tests."""
    problem = build_problem(load_config(SMALL_SLAB))
    return problem, run_fom(problem)


@pytest.fixture(scope="session")
def refined_fom():
    """Small slab with 2.5x finer steps: five snapshots per stage, enough to truncate."""
    problem = build_problem(load_config(SMALL_SLAB, {"time": {"dt": 0.002}}))
    return problem, run_fom(problem)


@pytest.fixture
def grid():
    mesh = SpatialMesh((0.1, 0.15, 0.05, 0.2, 0.1))
    groups = GroupStructure.logarithmic(4, 0.05, 2.0)
    return PhaseSpaceGrid(mesh, build_double_gauss_legendre(2), groups)


@pytest.fixture
def material(grid):
    constants = PhysConstants()
    return MaterialModel(
        constants=constants,
        groups=grid.groups,
        opacity_model=OpacityModel(),
        eos=MaterialEos(c_v=0.5917 * constants.a_R * 0.5**3),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
