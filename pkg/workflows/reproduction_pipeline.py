"""
Reproduction Pipeline Flow

This Prefect flow produces every data set behind the benchmark figures:
1. Full-order run with snapshot databases per stage
2. POD bases, singular-value and rank-vs-eps tables
3. Reduced-order runs over the eps list (concurrent)
4. P1 and FLD baseline runs (concurrent)
5. Error reports of every run against the full-order run (concurrent)
6. Error-vs-eps table at fixed output times
"""

import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from prefect import flow, task, unmapped
from prefect.task_runners import ConcurrentTaskRunner

# Add project root to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from src.analysis import (  # noqa: E402
    ErrorReport,
    compare,
    error_vs_eps_table,
    load_stage_bases,
    make_stage_bases,
    read_record,
    save_fom_result,
    write_record,
    write_report,
)
from src.baselines import BaselineKind, BaselineSpec, run_baseline  # noqa: E402
from src.config import RunConfig, build_problem, load_config, log_level  # noqa: E402
from src.fom import run_fom  # noqa: E402
from src.rom import run_rom  # noqa: E402
from workflows.config import (  # noqa: E402
    BASELINE_KINDS,
    ERROR_TABLE_TIMES,
    OUTPUT_ROOT,
    PIPELINE_CONFIG_FILE,
    ROM_EPS_VALUES,
)

logging.basicConfig(level=log_level())
logger = logging.getLogger(__name__)


def _config(config_file: Optional[str], output_root: Optional[str]) -> RunConfig:
    overrides = {"output": {"directory": output_root}} if output_root else None
    return load_config(config_file, overrides)


# ============================================================================
# Task Definitions
# ============================================================================


@task(name="run_fom", log_prints=True)
def run_fom_task(config_file: Optional[str], output_root: Optional[str]) -> str:
    """Full-order run; writes the run CSVs and the per-stage snapshot databases."""
    cfg = _config(config_file, output_root)
    problem = build_problem(cfg)
    result = run_fom(problem)
    out = save_fom_result(result, problem.grid, cfg.output_dir / "fom")
    logger.info(f"Full-order run written to {out} in {result.record.wall_time:.1f} s")
    return str(out)


@task(name="make_bases", log_prints=True)
def make_bases_task(config_file: Optional[str], output_root: Optional[str], fom_dir: str) -> str:
    """POD basis of every stage plus the singular-value and rank tables."""
    cfg = _config(config_file, output_root)
    problem = build_problem(cfg)
    out = cfg.output_dir / "bases"
    bases = make_stage_bases(problem, fom_dir, out, cfg.rom.eps_sweep)
    logger.info(f"Bases with ranks {[b.rank for b in bases]} written to {out}")
    return str(out)


@task(name="run_rom", log_prints=True, task_run_name="run-rom-eps{eps:.0e}")
def run_rom_task(
    config_file: Optional[str], output_root: Optional[str], basis_dir: str, eps: float
) -> str:
    cfg = _config(config_file, output_root)
    problem = build_problem(cfg)
    bases = load_stage_bases(problem, basis_dir)
    label = f"rom_eps{eps:.0e}"
    record = run_rom(
        problem, bases, eps=eps, gram_block_limit=cfg.rom.gram_block_limit, label=label
    )
    return str(write_record(record, cfg.output_dir / label))


@task(name="run_baseline", log_prints=True, task_run_name="run-baseline-{kind}")
def run_baseline_task(config_file: Optional[str], output_root: Optional[str], kind: str) -> str:
    cfg = _config(config_file, output_root)
    problem = build_problem(cfg)
    spec = BaselineSpec(kind=BaselineKind(kind), limiter=cfg.baseline.limiter)
    label = f"baseline_{kind}"
    record = run_baseline(problem, spec, label)
    return str(write_record(record, cfg.output_dir / label))


@task(name="compare", log_prints=True)
def compare_task(run_dir: str, reference_dir: str, output_dir: str) -> Tuple[str, ErrorReport]:
    """Error report of one run against the full-order run."""
    name = Path(run_dir).name
    report = compare(read_record(run_dir), read_record(reference_dir))
    write_report(report, Path(output_dir) / f"compare_{name}.csv")
    return name, report


# ============================================================================
# Flow Definition
# ============================================================================


@flow(
    name="reproduction_pipeline",
    description="Full-order, POD, reduced-order and baseline runs with error reports",
    task_runner=ConcurrentTaskRunner(),
    log_prints=True,
)
def reproduction_pipeline(
    config_file: Optional[str] = PIPELINE_CONFIG_FILE,
    output_root: Optional[str] = OUTPUT_ROOT,
    eps_values: Optional[List[float]] = None,
    table_times: Optional[List[float]] = None,
) -> Dict[str, Any]:
    """
    Run the whole benchmark pipeline.

    Args:
        config_file: Optional problem YAML layered on the packaged default
        output_root: Output directory (default: the config's output.directory)
        eps_values: ROM thresholds to sweep
        table_times: Output times (ns) of the error-vs-eps table

    Returns:
        Summary dict with the per-run maximum and integrated errors
    """
    eps_values = eps_values or ROM_EPS_VALUES
    table_times = table_times or ERROR_TABLE_TIMES
    cfg = _config(config_file, output_root)
    output_dir = str(cfg.output_dir)
    logger.info(f"Reproduction pipeline writing to {output_dir}")

    # Step 1-2: full-order run and bases
    fom_dir = run_fom_task(config_file, output_root)
    basis_dir = make_bases_task(config_file, output_root, fom_dir)

    # Step 3-4: reduced-order and baseline runs, concurrently
    rom_futures = run_rom_task.map(
        unmapped(config_file), unmapped(output_root), unmapped(basis_dir), eps_values
    )
    baseline_futures = run_baseline_task.map(
        unmapped(config_file), unmapped(output_root), BASELINE_KINDS
    )
    rom_dirs = [future.result() for future in rom_futures]
    baseline_dirs = [future.result() for future in baseline_futures]
    logger.info(f"Completed {len(rom_dirs)} reduced-order and {len(baseline_dirs)} baseline runs")

    # Step 5: error reports
    report_futures = compare_task.map(
        rom_dirs + baseline_dirs, unmapped(fom_dir), unmapped(output_dir)
    )
    reports = dict(future.result() for future in report_futures)

    # Step 6: error-vs-eps table
    by_eps = {eps: reports[Path(d).name] for eps, d in zip(eps_values, rom_dirs)}
    table_path = Path(output_dir) / "error_vs_eps.csv"
    error_vs_eps_table(by_eps, table_times).to_csv(table_path, index=False)
    logger.info(f"Error-vs-eps table written to {table_path}")

    summary = {name: report.summary() for name, report in reports.items()}
    for name, values in summary.items():
        print(
            f"{name:<22} max err T {values['max_rel_err_T']:.3e}  "
            f"E {values['max_rel_err_E']:.3e}"
        )
    return {"output_dir": output_dir, "runs": summary}


if __name__ == "__main__":
    # Run the flow
    result = reproduction_pipeline()
    print(f"Pipeline result: {result['output_dir']}")
