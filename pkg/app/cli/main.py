#!/usr/bin/env python3
"""
Phase-Shifted Bell State QKD Simulator - Command Line Interface
qkdsim <experiment> [--config PATH] [--seed N] [--out PATH] [--compensation on|off]

Exit codes: 0 success, 1 configuration or validation error, 2 when every
session of the run aborted.
"""

import logging
import sys
from contextlib import contextmanager
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

# Add project root to Python path
project_root = Path(__file__).parent.parent.parent
sys.path.insert(0, str(project_root))

import typer
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from app.models.errors import NoSecureOperatingPointError, QKDSimError
from app.models.models import ExperimentConfig, ExperimentName
from app.services.experiments import CRYSTAL_SWEEP_COLUMNS, PUMP_SWEEP_COLUMNS, ExperimentService
from app.services.tomography import write_counts_csv
from app.utils.utils import FormattingUtils, LoggingUtils, SerializationUtils
from config.config import load_settings

logger = logging.getLogger("qkdsim")
console = Console(stderr=True)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_ALL_ABORTED = 2

app = typer.Typer(
    name="qkdsim",
    help="BBM92 simulator for phase-shifted Bell states with geometric-phase compensation",
    add_completion=False,
    no_args_is_help=True,
)


class Compensation(str, Enum):
    ON = "on"
    OFF = "off"


ConfigOption = typer.Option(None, "--config", "-c", help="key=value config file")
SeedOption = typer.Option(None, "--seed", help="Base seed (defaults to the config seed)")
OutOption = typer.Option(None, "--out", "-o", help="Output file")
CompensationOption = typer.Option(Compensation.OFF, "--compensation", help="Receiver-side compensation")
AlwaysCompensatedOption = typer.Option(
    Compensation.ON, "--compensation", help="Accepted for a uniform interface; this experiment always compensates"
)


@contextmanager
def cli_errors():
    """Map domain and validation errors to exit code 1"""
    try:
        yield
    except (QKDSimError, ValidationError, ValueError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        raise typer.Exit(code=EXIT_ERROR)


def _service(run: ExperimentConfig) -> ExperimentService:
    app_settings = load_settings(run.config_path)
    LoggingUtils.configure("DEBUG" if app_settings.debug else app_settings.log_level, app_settings.log_file)
    return ExperimentService(app_settings, run.seed)


def _run(experiment: ExperimentName, config, seed, out, compensation: Compensation) -> ExperimentConfig:
    return ExperimentConfig(
        experiment=experiment,
        config_path=config,
        output_path=out,
        seed=seed,
        compensation=compensation == Compensation.ON,
    )


def _print_rows(title: str, columns, rows: List[Dict[str, Any]]):
    table = Table(title=title)
    for column in columns:
        table.add_column(column, justify="right")
    for row in rows:
        table.add_row(*[FormattingUtils.cell(row[c]) for c in columns])
    console.print(table)


def _sweep_exit(rows: List[Dict[str, Any]]) -> int:
    if rows and all(row["aborted"] for row in rows):
        logger.warning("Every session of the sweep aborted")
        return EXIT_ALL_ABORTED
    return EXIT_OK


@app.command("sweep-pump-phase")
def sweep_pump_phase(
    config: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    out: Optional[Path] = OutOption,
    compensation: Compensation = CompensationOption,
    start: Optional[float] = typer.Option(None, help="First pump angle (deg)"),
    stop: Optional[float] = typer.Option(None, help="Last pump angle (deg)"),
    step: Optional[float] = typer.Option(None, help="Pump angle step (deg)"),
    fit: bool = typer.Option(False, "--fit", help="Also fit a - b|cos(4 theta + delta)|"),
):
    """QBER versus pump geometric-phase angle"""
    run = _run(ExperimentName.SWEEP_PUMP_PHASE, config, seed, out, compensation)
    with cli_errors():
        service = _service(run)
        rows = service.sweep_pump_phase(start, stop, step, run.compensation)
        path = run.output(".csv")
        service.write_rows(path, PUMP_SWEEP_COLUMNS, rows)
        _print_rows("Pump-phase sweep", PUMP_SWEEP_COLUMNS, rows)
        if fit:
            result = service.fit_pump_sweep(rows)
            SerializationUtils.write_json(path.with_suffix(".fit.json"), result.model_dump())
            console.print(f"Fit: a={result.a:.2f}%  b={result.b:.2f}%  delta={result.delta:.4f} rad")
    raise typer.Exit(code=_sweep_exit(rows))


@app.command("sweep-crystal")
def sweep_crystal(
    config: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    out: Optional[Path] = OutOption,
    compensation: Compensation = CompensationOption,
    start: Optional[float] = typer.Option(None, help="First displacement (mm)"),
    stop: Optional[float] = typer.Option(None, help="Last displacement (mm)"),
    step: Optional[float] = typer.Option(None, help="Displacement step (mm)"),
):
    """QBER versus crystal displacement"""
    run = _run(ExperimentName.SWEEP_CRYSTAL, config, seed, out, compensation)
    with cli_errors():
        service = _service(run)
        rows = service.sweep_crystal(start, stop, step, run.compensation)
        service.write_rows(run.output(".csv"), CRYSTAL_SWEEP_COLUMNS, rows)
        _print_rows("Crystal sweep", CRYSTAL_SWEEP_COLUMNS, rows)
    raise typer.Exit(code=_sweep_exit(rows))


@app.command("compensate")
def compensate(
    config: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    out: Optional[Path] = OutOption,
    compensation: Compensation = AlwaysCompensatedOption,
):
    """Active compensation loop; writes the controller trace CSV and a summary JSON"""
    run = _run(ExperimentName.COMPENSATE, config, seed, out, compensation)
    with cli_errors():
        service = _service(run)
        path = run.output(".csv")
        try:
            outcome = service.compensate(trace_path=path)
        except NoSecureOperatingPointError as e:
            logger.warning(f"No secure operating point: {e}")
            raise typer.Exit(code=EXIT_ALL_ABORTED)
        summary = outcome.to_json_dict()
        SerializationUtils.write_json(path.with_suffix(".json"), summary)
        console.print(
            f"Compensated at {summary['theta_final_deg']:.4f} deg, "
            f"QBER {FormattingUtils.percent(outcome.qber_final)}"
        )
    raise typer.Exit(code=EXIT_ALL_ABORTED if outcome.aborted else EXIT_OK)


@app.command("tomography")
def tomography(
    config: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    out: Optional[Path] = OutOption,
    compensation: Compensation = CompensationOption,
    counts: Optional[Path] = typer.Option(None, "--counts", help="Recorded counts CSV (projector_a, projector_b, counts)"),
    shots: Optional[int] = typer.Option(None, "--shots", help="Shots per basis pair when synthesizing"),
):
    """Reconstruct the source state; writes the result JSON"""
    run = _run(ExperimentName.TOMOGRAPHY, config, seed, out, compensation)
    with cli_errors():
        service = _service(run)
        result, settings_used = service.tomography(counts, shots, run.compensation)
        path = run.output(".json")
        SerializationUtils.write_json(path, result.to_json_dict())
        if counts is None:
            write_counts_csv(path.with_suffix(".counts.csv"), settings_used)
        console.print(
            f"Fidelity {result.fidelity_to_target:.4f}, purity {result.purity:.4f}, "
            f"concurrence {result.concurrence:.4f}"
        )
    raise typer.Exit(code=EXIT_OK)


@app.command("bbm92-run")
def bbm92_run(
    config: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    out: Optional[Path] = OutOption,
    compensation: Compensation = CompensationOption,
):
    """One BBM92 session; writes the session report JSON"""
    run = _run(ExperimentName.BBM92_RUN, config, seed, out, compensation)
    with cli_errors():
        service = _service(run)
        report = service.bbm92_run(run.compensation)
        SerializationUtils.write_json(run.output(".json"), report.to_json_dict())
        console.print(
            f"QBER {FormattingUtils.percent(report.qber_total)}, "
            f"{'ABORTED' if report.aborted else f'key {report.key_length} bits'}"
        )
    raise typer.Exit(code=EXIT_ALL_ABORTED if report.aborted else EXIT_OK)


@app.command("table1")
def table1(
    config: Optional[Path] = ConfigOption,
    seed: Optional[int] = SeedOption,
    out: Optional[Path] = OutOption,
    compensation: Compensation = AlwaysCompensatedOption,
):
    """State-transformation table: states, fidelities, QBER before and after compensation"""
    run = _run(ExperimentName.TABLE1, config, seed, out, compensation)
    with cli_errors():
        service = _service(run)
        data = service.table1()
        SerializationUtils.write_json(run.output(".json"), data)
        table = Table(title="Phase-shifted Bell state transformation")
        for column in ("θP / Δx", "state", "QBER", "angle", "compensated", "QBER after"):
            table.add_column(column)
        for row in data["rows"]:
            for variant in ("pump", "crystal"):
                entry = row[variant]
                table.add_row(
                    f"{row['theta_h_p_deg']}°" if variant == "pump" else f"{row['delta_x_mm']} mm",
                    entry["state"],
                    FormattingUtils.percent(entry["qber"]),
                    f"{entry['compensation_angle_deg']:.2f}°",
                    entry["compensated_state"],
                    FormattingUtils.percent(entry["compensated_qber"]),
                )
        console.print(table)
    raise typer.Exit(code=EXIT_OK)


def main():
    app()


if __name__ == "__main__":
    main()
