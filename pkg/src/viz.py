#!/usr/bin/env python3
"""
Figures from the CSVs the solver CLI writes.

Usage:
    python src/viz.py singular-values output/bases/singular_values_stage*.csv -o sigma.png
    python src/viz.py ranks output/bases/rank_vs_eps.csv -o ranks.png
    python src/viz.py error-vs-time output/compare_*.csv -o errors.png
    python src/viz.py solution output/fom --time 0.6 --time 2.0 -o profiles.png
    python src/viz.py error-vs-eps output/error_vs_eps.csv -o convergence.png
"""

import logging
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import click
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

logger = logging.getLogger(__name__)

# no Software tag, so the PNG bytes depend on the inputs only
PNG_METADATA = {"Software": None}
TIME_MATCH_TOLERANCE = 1.0e-9  # ns


def load_csv(path: str, required: Sequence[str] = (), prefix: str = "") -> pd.DataFrame:
    """Read a CSV and check it has rows and the columns a figure needs."""
    try:
        frame = pd.read_csv(path)
    except FileNotFoundError:
        raise click.UsageError(f"{path}: file not found") from None
    except pd.errors.EmptyDataError:
        raise click.UsageError(f"{path}: empty CSV") from None
    except pd.errors.ParserError as exc:
        raise click.UsageError(f"{path}: not a CSV ({exc})") from None
    if frame.empty:
        raise click.UsageError(f"{path}: no data rows")
    missing = [column for column in required if column not in frame.columns]
    if missing:
        raise click.UsageError(f"{path}: missing column(s) {missing}")
    if prefix and not any(column.startswith(prefix) for column in frame.columns):
        raise click.UsageError(f"{path}: no column starting with {prefix!r}")
    return frame


def save(fig, output: str) -> Path:
    path = Path(output)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, bbox_inches="tight", metadata=PNG_METADATA)
    plt.close(fig)
    click.echo(f"✅ Wrote {path}")
    return path


def curve_label(path: str) -> str:
    stem = Path(path).stem
    return stem[len("compare_"):] if stem.startswith("compare_") else stem


def plot_singular_values(frames: Dict[str, pd.DataFrame]):
    fig, ax = plt.subplots(figsize=(7, 5))
    for label, frame in frames.items():
        ax.semilogy(frame["index"], frame["sigma"], "o-", markersize=3, label=label)
    ax.set_xlabel("index")
    ax.set_ylabel("singular value")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    return fig


def plot_ranks(frame: pd.DataFrame):
    fig, ax = plt.subplots(figsize=(7, 5))
    for column in [c for c in frame.columns if c.startswith("rank_stage")]:
        ax.semilogx(frame["eps"], frame[column], "s-", label=column.replace("rank_", ""))
    ax.invert_xaxis()
    ax.set_xlabel(r"$\varepsilon$")
    ax.set_ylabel("rank")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    return fig


def plot_error_vs_time(frames: Dict[str, pd.DataFrame]):
    fig, (ax_T, ax_E) = plt.subplots(1, 2, figsize=(12, 5), sharex=True)
    for label, frame in frames.items():
        # t = 0 is exact by construction and would vanish on a log axis
        shown = frame[frame["time_ns"] > 0]
        ax_T.semilogy(shown["time_ns"], shown["rel_err_T"], label=label)
        ax_E.semilogy(shown["time_ns"], shown["rel_err_E"], label=label)
    for ax, name in ((ax_T, "T"), (ax_E, "E")):
        ax.set_xlabel("t [ns]")
        ax.set_ylabel(f"relative error in {name}")
        ax.grid(True, which="both", alpha=0.3)
    ax_T.legend(fontsize=8)
    return fig


def _rows_at(frame: pd.DataFrame, times: Sequence[float], source: str) -> List[Tuple[float, int]]:
    rows = []
    for t in times:
        index = int(np.argmin(np.abs(frame["time_ns"].to_numpy() - t)))
        if abs(frame["time_ns"].iloc[index] - t) > TIME_MATCH_TOLERANCE:
            raise click.UsageError(f"{source}: no output at t={t} ns")
        rows.append((t, index))
    return rows


def plot_solution(runs: Dict[str, Tuple[pd.DataFrame, pd.DataFrame, np.ndarray]], times):
    fig, (ax_T, ax_E) = plt.subplots(1, 2, figsize=(12, 5), sharex=True)
    for label, (temperature, energy, x) in runs.items():
        for t, index in _rows_at(temperature, times, label):
            name = f"{label}, t={t:g} ns"
            ax_T.plot(x, temperature.drop(columns="time_ns").iloc[index].to_numpy(), label=name)
            ax_E.semilogy(x, energy.drop(columns="time_ns").iloc[index].to_numpy(), label=name)
    ax_T.set_ylabel("T [keV]")
    ax_E.set_ylabel(r"E [GJ/cm$^3$]")
    for ax in (ax_T, ax_E):
        ax.set_xlabel("x [cm]")
        ax.grid(True, alpha=0.3)
    ax_T.legend(fontsize=8)
    return fig


def plot_error_vs_eps(frame: pd.DataFrame):
    fig, ax = plt.subplots(figsize=(7, 5))
    for column in [c for c in frame.columns if c.startswith("rel_err_")]:
        ax.loglog(frame["eps"], frame[column], "o-", label=column.replace("rel_err_", ""))
    ax.invert_xaxis()
    ax.set_xlabel(r"$\varepsilon$")
    ax.set_ylabel("relative error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    return fig


output_option = click.option(
    "-o", "--output", required=True, type=click.Path(dir_okay=False), help="PNG file to write"
)


@click.group()
def cli():
    """Render figures from solver CSVs."""
    logging.basicConfig(level=logging.INFO)


@cli.command()
@click.argument("csv_files", nargs=-1, required=True)
@output_option
def singular_values(csv_files: Tuple[str, ...], output: str):
    """Singular values per stage, log scale."""
    frames = {
        Path(path).stem.replace("singular_values_", ""): load_csv(path, ["index", "sigma"])
        for path in csv_files
    }
    save(plot_singular_values(frames), output)


@cli.command()
@click.argument("csv_file")
@output_option
def ranks(csv_file: str, output: str):
    """Selected rank per stage against the tail-energy threshold."""
    save(plot_ranks(load_csv(csv_file, ["eps"], prefix="rank_stage")), output)


@cli.command()
@click.argument("csv_files", nargs=-1, required=True)
@output_option
def error_vs_time(csv_files: Tuple[str, ...], output: str):
    """Relative errors in T and E against time, one curve per compare CSV."""
    required = ["time_ns", "rel_err_T", "rel_err_E"]
    frames = {curve_label(path): load_csv(path, required) for path in csv_files}
    save(plot_error_vs_time(frames), output)


@cli.command()
@click.argument("run_dirs", nargs=-1, required=True)
@click.option("--time", "times", type=float, multiple=True, required=True, help="ns")
@output_option
def solution(run_dirs: Tuple[str, ...], times: Tuple[float, ...], output: str):
    """Temperature and energy density profiles of runs at chosen times."""
    runs = {}
    for run_dir in run_dirs:
        directory = Path(run_dir)
        temperature = load_csv(str(directory / "temperature.csv"), ["time_ns"], prefix="T_keV")
        energy = load_csv(str(directory / "energy_density.csv"), ["time_ns"], prefix="E_GJcm3")
        cells = directory / "cells.csv"
        n_cells = temperature.shape[1] - 1
        x = load_csv(str(cells), ["x_cm"])["x_cm"].to_numpy() if cells.exists() else None
        runs[directory.name] = (temperature, energy, x if x is not None else np.arange(n_cells))
    save(plot_solution(runs, times), output)


@cli.command()
@click.argument("csv_file")
@output_option
def error_vs_eps(csv_file: str, output: str):
    """Errors at fixed times against the tail-energy threshold."""
    save(plot_error_vs_eps(load_csv(csv_file, ["eps"], prefix="rel_err_")), output)


if __name__ == "__main__":
    cli()
