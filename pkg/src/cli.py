#!/usr/bin/env python3
"""
CLI for the full-order solver, POD bases, the reduced-order model and the diffusion baselines.

Usage:
    python src/cli.py run-fom --config my_problem.yaml
    python src/cli.py make-basis
    python src/cli.py run-rom --eps 1e-5
    python src/cli.py run-baseline --kind fld
    python src/cli.py compare output/rom_eps1e-05 output/fom
"""

import functools
import logging
import sys
from pathlib import Path
from typing import List, Optional

import click

PROJECT_ROOT = Path(__file__).parent.parent
# Add project root to Python path for imports
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from src.analysis import (  # noqa: E402
    compare,
    load_stage_bases,
    make_stage_bases,
    read_record,
    save_fom_result,
    write_record,
    write_report,
)
from src.baselines import BaselineKind, BaselineSpec, run_baseline  # noqa: E402
from src.config import RunConfig, build_problem, load_config, log_level  # noqa: E402
from src.errors import (  # noqa: E402
    ConfigError,
    LayoutError,
    NumericalError,
    PersistenceError,
)
from src.fom import run_fom  # noqa: E402
from src.rom import run_rom, stage_ranks_label  # noqa: E402

logger = logging.getLogger(__name__)

EXIT_USAGE = 1
EXIT_NUMERICAL = 2


def handle_errors(command):
    """Map package errors onto exit codes: 1 for usage, config and files, 2 for numerics."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except (ConfigError, PersistenceError, LayoutError) as exc:
            click.echo(f"❌ {exc}", err=True)
            sys.exit(EXIT_USAGE)
        except NumericalError as exc:
            click.echo(f"❌ Numerical failure: {exc}", err=True)
            sys.exit(EXIT_NUMERICAL)

    return wrapper


def parse_ranks(value: Optional[str]) -> Optional[List[int]]:
    if value is None:
        return None
    try:
        return [int(part) for part in value.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"--ranks must be comma-separated integers, got {value!r}") from None


config_option = click.option(
    "--config",
    "config_path",
    type=click.Path(dir_okay=False),
    default=None,
    help="YAML file with the sections to change (default: packaged Fleck-Cummings problem)",
)


def resolve(config_path: Optional[str]) -> RunConfig:
    cfg = load_config(config_path)
    logger.debug(f"Resolved config from {config_path or 'packaged default'}")
    return cfg


@click.group()
def cli():
    """Thermal radiative transfer solver with a POD-Galerkin reduced-order model."""
    logging.basicConfig(
        level=log_level(), format="%(asctime)s %(levelname)s %(name)s: %(message)s"
    )


@cli.command()
@config_option
@handle_errors
def show_config(config_path: Optional[str]):
    """Print the resolved configuration as YAML."""
    click.echo(resolve(config_path).to_yaml())


@cli.command(name="run-fom")
@config_option
@handle_errors
def run_fom_cmd(config_path: Optional[str]):
    """Run the full-order model; write run CSVs and one snapshot database per stage."""
    cfg = resolve(config_path)
    problem = build_problem(cfg)
    out = cfg.output_dir / "fom"
    click.echo(f"🚀 Full-order run: {problem.time.n_steps} steps, {problem.time.n_stages} stages")
    result = run_fom(problem)
    save_fom_result(result, problem.grid, out)
    for db in result.databases:
        click.echo(f"   Stage {db.stage}: {db.n_columns} snapshots")
    click.echo(f"✅ Full-order run written to {out} ({result.record.wall_time:.1f} s)")


@cli.command()
@config_option
@click.option("--fom-dir", type=click.Path(file_okay=False), default=None, help="Snapshot files")
@handle_errors
def make_basis(config_path: Optional[str], fom_dir: Optional[str]):
    """Build the POD basis of every stage database; write singular values and rank tables."""
    cfg = resolve(config_path)
    problem = build_problem(cfg)
    source = Path(fom_dir) if fom_dir else cfg.output_dir / "fom"
    out = cfg.output_dir / "bases"
    for basis in make_stage_bases(problem, source, out, cfg.rom.eps_sweep):
        click.echo(
            f"   Stage {basis.stage}: numerical rank {basis.rank}, "
            f"sigma {basis.singular_values[0]:.3e}..{basis.singular_values[-1]:.3e}"
        )
    click.echo(f"✅ Bases written to {out}")


@cli.command(name="run-rom")
@config_option
@click.option("--eps", type=float, default=None, help="Tail-energy threshold (overrides rom.eps)")
@click.option("--ranks", default=None, help="Comma-separated rank per stage, e.g. 14,14,14")
@click.option("--basis-dir", type=click.Path(file_okay=False), default=None, help="Basis directory")
@handle_errors
def run_rom_cmd(
    config_path: Optional[str],
    eps: Optional[float],
    ranks: Optional[str],
    basis_dir: Optional[str],
):
    """Run the reduced-order model on the stage bases."""
    cfg = resolve(config_path)
    rank_list = parse_ranks(ranks) if ranks is not None else cfg.rom.ranks
    if eps is not None and not 0.0 < eps < 1.0:
        raise ConfigError(f"--eps must lie in (0, 1), got {eps}")
    threshold = eps if eps is not None else cfg.rom.eps
    if rank_list is not None:
        label = f"rom_ranks{stage_ranks_label(rank_list)}"
        threshold = None
    elif threshold is None:
        raise ConfigError("Set rom.eps or rom.ranks, or pass --eps or --ranks")
    else:
        label = f"rom_eps{threshold:.0e}"

    problem = build_problem(cfg)
    source = Path(basis_dir) if basis_dir else cfg.output_dir / "bases"
    bases = load_stage_bases(problem, source)
    click.echo(f"🚀 Reduced-order run {label}")
    record = run_rom(
        problem,
        bases,
        eps=threshold,
        ranks=rank_list,
        gram_block_limit=cfg.rom.gram_block_limit,
        label=label,
    )
    out = cfg.output_dir / label
    write_record(record, out)
    click.echo(f"✅ Reduced-order run written to {out} ({record.wall_time:.1f} s)")


@cli.command(name="run-baseline")
@config_option
@click.option("--kind", type=click.Choice([k.value for k in BaselineKind]), default=None)
@click.option("--limiter", type=click.Choice(["sqrt", "levermore_pomraning"]), default=None)
@handle_errors
def run_baseline_cmd(config_path: Optional[str], kind: Optional[str], limiter: Optional[str]):
    """Run the multigroup P1 or flux-limited diffusion baseline."""
    cfg = resolve(config_path)
    problem = build_problem(cfg)
    spec = BaselineSpec(
        kind=BaselineKind(kind or cfg.baseline.kind),
        limiter=limiter or cfg.baseline.limiter,
    )
    label = f"baseline_{spec.kind.value}"
    click.echo(f"🚀 Baseline run {label}")
    record = run_baseline(problem, spec, label)
    out = cfg.output_dir / label
    write_record(record, out)
    click.echo(f"✅ Baseline run written to {out} ({record.wall_time:.1f} s)")


@cli.command(name="compare")
@click.argument("run_dir", type=click.Path(file_okay=False))
@click.argument("reference_dir", type=click.Path(file_okay=False))
@click.option("--name", default=None, help="Report name (default: run directory name)")
@config_option
@handle_errors
def compare_cmd(run_dir: str, reference_dir: str, name: Optional[str], config_path: Optional[str]):
    """Relative 2-norm errors in T and E of RUN_DIR against REFERENCE_DIR."""
    cfg = resolve(config_path)
    report = compare(read_record(run_dir), read_record(reference_dir))
    path = write_report(report, cfg.output_dir / f"compare_{name or Path(run_dir).name}.csv")
    click.echo(f"📊 {report.label} vs {report.reference}")
    for key, value in report.summary().items():
        click.echo(f"   {key:<26} {value:.3e}")
    click.echo(f"✅ Report written to {path}")


if __name__ == "__main__":
    cli()
