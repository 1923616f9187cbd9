#!/usr/bin/env python3
"""
Phase-Shifted Bell State QKD Simulator - Reproduce All Experiments
Run every experiment with one config and seed into an output directory
"""

import logging
import sys
from pathlib import Path
from typing import Optional

# Add project root to Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

import typer

from app.models.errors import QKDSimError
from app.services.experiments import CRYSTAL_SWEEP_COLUMNS, PUMP_SWEEP_COLUMNS, ExperimentService
from app.services.tomography import write_counts_csv
from app.utils.utils import LoggingUtils, SerializationUtils
from config.config import load_settings

logger = logging.getLogger(__name__)


def reproduce(service: ExperimentService, out_dir: Path):
    """
    Sweeps with and without compensation, the fit, the table, tomography,
    one BBM92 run and the compensation trace
    """
    for compensation in (False, True):
        tag = "on" if compensation else "off"

        rows = service.sweep_pump_phase(compensation=compensation)
        path = out_dir / f"sweep-pump-phase-{tag}.csv"
        service.write_rows(path, PUMP_SWEEP_COLUMNS, rows)
        if not compensation:
            fit = service.fit_pump_sweep(rows)
            SerializationUtils.write_json(path.with_suffix(".fit.json"), fit.model_dump())

        rows = service.sweep_crystal(compensation=compensation)
        service.write_rows(out_dir / f"sweep-crystal-{tag}.csv", CRYSTAL_SWEEP_COLUMNS, rows)

    SerializationUtils.write_json(out_dir / "table1.json", service.table1())

    result, counts = service.tomography()
    SerializationUtils.write_json(out_dir / "tomography.json", result.to_json_dict())
    write_counts_csv(out_dir / "tomography.counts.csv", counts)

    report = service.bbm92_run()
    SerializationUtils.write_json(out_dir / "bbm92-run.json", report.to_json_dict())

    outcome = service.compensate(trace_path=out_dir / "compensate.csv")
    SerializationUtils.write_json(out_dir / "compensate.json", outcome.to_json_dict())


def main(
    config: Optional[Path] = typer.Option(None, "--config", help="key=value config file"),
    seed: Optional[int] = typer.Option(None, "--seed"),
    out: Path = typer.Option(Path("results"), "--out", help="Output directory"),
):
    """
    Main reproduction function
    """
    try:
        app_settings = load_settings(config)
        LoggingUtils.configure("DEBUG" if app_settings.debug else app_settings.log_level, app_settings.log_file)
        service = ExperimentService(app_settings, seed)
        logger.info(f"Reproducing all experiments into {out} (seed {service.seed})")
        reproduce(service, out)
        logger.info("All experiments completed successfully!")

    except QKDSimError as e:
        logger.error(f"Reproduction failed: {e}")
        sys.exit(1)


if __name__ == "__main__":
    typer.run(main)
