#!/usr/bin/env python3
"""
ohphase command line.

Usage:
    ohphase sweep configs/fig1b.ini --figure
    ohphase critical configs/fig2c.ini --output-dir out
    ohphase verify configs/fig3b.ini --threads 4

Exit codes: 0 ok, 1 other library error, 2 config error, 3 tracking failure,
4 verification failure.
"""

import logging
import sys
from pathlib import Path
from typing import Callable, Optional

import typer

# Add src to path
src_path = Path(__file__).parent.parent.parent
if str(src_path) not in sys.path:
    sys.path.insert(0, str(src_path))

from apps.phase_sweep.config import RunConfig, Runtime, load_config, resolve_runtime
from apps.phase_sweep.figures import write_figure
from apps.phase_sweep.report import (
    format_float,
    partial_report,
    run_sweep,
    write_json,
    write_oracle,
    write_partial,
    write_pt_table,
    write_report,
)
from apps.phase_sweep.verify import run_checks, summarize
from core.errors import ConfigError, NoCriticalRate, NotPureMagnetic, OHPhaseError, TrackingBreakdown
from core.phase import critical_rotation_magnetic

logger = logging.getLogger("ohphase")

EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_TRACKING = 3
EXIT_VERIFY = 4

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

app = typer.Typer(
    name="ohphase",
    help="Geometric phases of OH in rotating magnetic and electric fields",
    add_completion=False,
)


def configure_logging(verbose: bool) -> None:
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, stream=sys.stderr, format=LOG_FORMAT, force=True)
    logging.captureWarnings(True)


def _prepare(
    config_path: Path,
    output_dir: Optional[str],
    fmt: Optional[str],
    threads: Optional[int],
    figure: Optional[bool],
    verbose: bool,
):
    configure_logging(verbose)
    config = load_config(str(config_path))
    return config, resolve_runtime(config, output_dir, fmt, threads, figure)


def _guarded(action: Callable[[], None], on_tracking: Optional[Callable[[TrackingBreakdown], None]] = None) -> None:
    """Run a command body and map library errors to exit codes."""
    try:
        action()
    except typer.Exit:
        raise
    except ConfigError as exc:
        logger.error("config error: %s", exc)
        raise typer.Exit(EXIT_CONFIG)
    except TrackingBreakdown as exc:
        logger.error("%s", exc)
        if on_tracking is not None:
            on_tracking(exc)
        raise typer.Exit(EXIT_TRACKING)
    except OHPhaseError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        raise typer.Exit(EXIT_ERROR)


def _write_partial(config: RunConfig, runtime: Runtime) -> Callable[[TrackingBreakdown], None]:
    def handler(exc: TrackingBreakdown) -> None:
        write_partial(partial_report(config, exc.partial), runtime)

    return handler


OutputDir = typer.Option(None, "--output-dir", "-o", help="Output directory")
Format = typer.Option(None, "--format", help="csv or json")
Threads = typer.Option(None, "--threads", "-t", help="Worker threads for diagonalization")
Verbose = typer.Option(False, "--verbose", "-v", help="Debug logging")


@app.command()
def sweep(
    config_path: Path = typer.Argument(..., exists=True, dir_okay=False, help="Run config (.ini)"),
    output_dir: Optional[str] = OutputDir,
    fmt: Optional[str] = Format,
    threads: Optional[int] = Threads,
    figure: Optional[bool] = typer.Option(None, "--figure/--no-figure", help="Also write <stem>.html"),
    verbose: bool = Verbose,
):
    """Sweep omega_r and write the phase table and annotations."""
    state = {}

    def body():
        config, runtime = _prepare(config_path, output_dir, fmt, threads, figure, verbose)
        state["handler"] = _write_partial(config, runtime)
        report = run_sweep(config, runtime.threads)
        written = write_report(report, runtime)
        if runtime.figure:
            written.append(write_figure(report.rows, runtime.directory / f"{config.stem}.html", config.stem, config.params.hbar))
        if config.pt_compare:
            if config.fields.b_mag > 0.0:
                written.append(write_pt_table(config, runtime))
            else:
                logger.warning("pt_compare skipped: perturbation theory needs B > 0")
        if config.oracle_check:
            written.append(write_oracle(config, runtime))
        typer.echo(f"{len(report.rows)} rows, {len(report.zeros)} zeros, {len(report.gaps)} gap events")
        for path in written:
            typer.echo(f"  {path}")

    _guarded(body, lambda exc: state["handler"](exc) if "handler" in state else None)


@app.command()
def critical(
    config_path: Path = typer.Argument(..., exists=True, dir_okay=False, help="Run config (.ini)"),
    output_dir: Optional[str] = OutputDir,
    threads: Optional[int] = Threads,
    verbose: bool = Verbose,
):
    """Zero-phase rotation rates, per state and per pair, plus the closed form when E = 0."""
    state = {}

    def body():
        config, runtime = _prepare(config_path, output_dir, None, threads, False, verbose)
        state["handler"] = _write_partial(config, runtime)
        try:
            closed = critical_rotation_magnetic(config.params, config.fields)
        except (NoCriticalRate, NotPureMagnetic) as exc:
            logger.info("closed form: %s", exc)
            closed = None

        report = run_sweep(config, runtime.threads)
        document = {
            "closed_form_rad_s": closed,
            "single_state": report.annotations()["zeros"]["single_state"],
            "relative": report.annotations()["zeros"]["relative"],
        }
        if closed is not None and report.zeros:
            document["max_relative_deviation"] = max(abs(zero.omega_r / closed - 1.0) for zero in report.zeros)
        path = write_json(document, runtime.directory / f"{config.stem}.critical.json")

        if closed is None:
            typer.echo("no critical rate (closed form)")
        else:
            typer.echo(f"closed-form critical rate {format_float(closed)} rad/s")
        for zero in report.zeros:
            typer.echo(f"  {format_float(zero.omega_r)} rad/s  {zero.states[0]}")
        typer.echo(f"{len(report.zeros)} single-state zeros, {len(report.relative_zeros)} relative zeros")
        typer.echo(f"  {path}")

    _guarded(body, lambda exc: state["handler"](exc) if "handler" in state else None)


@app.command()
def verify(
    config_path: Path = typer.Argument(..., exists=True, dir_okay=False, help="Run config (.ini)"),
    output_dir: Optional[str] = OutputDir,
    threads: Optional[int] = Threads,
    verbose: bool = Verbose,
):
    """Run the consistency checks; exit 4 if any non-advisory check fails."""
    outcome = {}

    def body():
        config, runtime = _prepare(config_path, output_dir, None, threads, False, verbose)
        summary = summarize(run_checks(config, runtime.threads))
        path = write_json(summary, runtime.directory / f"{config.stem}.verify.json")
        for check in summary["checks"]:
            mark = "ok" if check["passed"] else ("advisory" if check["advisory"] else "FAIL")
            value = "n/a" if check["value"] is None else f"{check['value']:.3e}"
            typer.echo(f"  {mark:8s} {check['name']}: {value} (limit {check['threshold']:.1e})")
        typer.echo(f"  {path}")
        outcome["passed"] = summary["passed"]

    _guarded(body)
    if not outcome.get("passed", False):
        raise typer.Exit(EXIT_VERIFY)


def main() -> None:
    app()


if __name__ == "__main__":
    main()
