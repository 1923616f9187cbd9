# File: app/services/experiments.py
"""
Experiment runners behind the qkdsim commands: QBER sweeps over the pump
angle and the crystal position, the state-transformation table, tomography,
single BBM92 runs and the active compensation loop.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from app.models.models import (
    CompensationOutcome,
    FitResult,
    SessionConfig,
    SessionReport,
    SourceConfig,
    TomographyResult,
    TomographySetting,
    XParity,
)
from app.models.quantum import JonesMatrix
from app.services.biphoton import (
    PHI_PLUS,
    apply_local_density,
    canonicalize,
    state_after_pump_gp,
    state_after_receiver_gp,
    state_label,
)
from app.services.compensator import CompensationController, fit_qber_curve
from app.services.metrics import compensation_angle, composite_qber, residual_phase
from app.services.polarization import qhq
from app.services.protocol import run_session
from app.services.source import emission_rate, emitted_state, unknown_phase
from app.services.tomography import read_counts_csv, synthesize_counts, tomography_report
from app.utils.utils import AngleUtils, RandomUtils, SerializationUtils, log_execution_time
from config.config import Settings, settings as default_settings

logger = logging.getLogger(__name__)

PUMP_SWEEP_COLUMNS = ("theta_deg", "qber", "qber_analytic", "aborted")
CRYSTAL_SWEEP_COLUMNS = ("delta_x_mm", "qber", "aborted")

# (theta_H_P degrees, delta_x mm) rows of the state-transformation table
TABLE1_ROWS = ((0.0, 0.0), (22.5, 0.5), (45.0, 1.0), (67.5, 1.5), (90.0, 2.0))


class ExperimentService:
    """
    Runs experiments from one Settings instance and a base seed
    """

    def __init__(self, app_settings: Optional[Settings] = None, seed: Optional[int] = None):
        self.settings = app_settings or default_settings
        self.seed = self.settings.seed if seed is None else seed
        self.rotator = self.settings.get_rotator_model()
        self.workers = max(1, self.settings.experiment.workers)

    # -------------------------------------------------
    # Session plumbing
    # -------------------------------------------------

    def duration_for(self, source: SourceConfig, sifted_pairs: Optional[int] = None) -> float:
        """
        Run length giving the requested number of sifted pairs on average
        """
        sifted_pairs = sifted_pairs or self.settings.experiment.sifted_pairs_per_point
        station = self.settings.station
        sift_prob = (
            station.basis_bias_a * station.basis_bias_b
            + (1.0 - station.basis_bias_a) * (1.0 - station.basis_bias_b)
        )
        return sifted_pairs / sift_prob / emission_rate(source)

    def oracle_angle(self, source: SourceConfig) -> float:
        """Quantized receiver angle cancelling the source phase"""
        phi_un = unknown_phase(source.delta_x, source.phi0, source.kappa)
        return self.rotator.quantize(compensation_angle(phi_un, source.theta_H_P))

    def session_config(
        self,
        theta_H_P: float,
        delta_x: float,
        gp_theta_b: Optional[float],
        seed: int,
        x_parity: Optional[XParity] = None,
    ) -> SessionConfig:
        """
        Characterization session sized to sifted_pairs_per_point
        """
        source = self.settings.get_source_config(theta_H_P=theta_H_P, delta_x=delta_x, seed=seed)
        source = source.model_copy(update={"duration": self.duration_for(source)})
        overrides: Dict[str, Any] = {
            "seed": seed,
            "qber_sample_fraction": self.settings.experiment.sample_fraction,
        }
        if x_parity is not None:
            overrides["x_parity"] = x_parity
        return self.settings.get_session_config(source=source, gp_theta_b=gp_theta_b, **overrides)

    def _map(self, fn: Callable, points: Sequence) -> List:
        """Concurrent map; results keep the input order"""
        with ThreadPoolExecutor(max_workers=self.workers) as executor:
            return list(executor.map(fn, points))

    def _point_seeds(self, count: int) -> List[int]:
        return RandomUtils.derive_seeds(self.seed, count)

    # -------------------------------------------------
    # Sweeps
    # -------------------------------------------------

    @log_execution_time
    def sweep_pump_phase(
        self,
        start_deg: Optional[float] = None,
        stop_deg: Optional[float] = None,
        step_deg: Optional[float] = None,
        compensation: bool = False,
    ) -> List[Dict[str, Any]]:
        """
        One session per pump angle at the configured crystal position
        """
        exp = self.settings.experiment
        angles = AngleUtils.grid(
            exp.pump_start_deg if start_deg is None else start_deg,
            exp.pump_stop_deg if stop_deg is None else stop_deg,
            exp.pump_step_deg if step_deg is None else step_deg,
        )
        delta_x = self.settings.source.delta_x_mm
        noise_p = self.settings.source.noise_p
        seeds = self._point_seeds(len(angles))

        def run_point(point: Tuple[float, int]) -> Dict[str, Any]:
            theta_deg, seed = point
            theta = math.radians(theta_deg)
            source = self.settings.get_source_config(theta_H_P=theta, delta_x=delta_x)
            gp_theta_b = self.oracle_angle(source) if compensation else None
            config = self.session_config(theta, delta_x, gp_theta_b, seed)
            report = run_session(config)
            phi_un = unknown_phase(delta_x, config.source.phi0, config.source.kappa)
            analytic = composite_qber(residual_phase(phi_un, theta, gp_theta_b), noise_p)
            return {
                "theta_deg": theta_deg,
                "qber": report.qber_total,
                "qber_analytic": analytic,
                "aborted": report.aborted,
            }

        logger.info(f"Pump-phase sweep: {len(angles)} points, compensation={'on' if compensation else 'off'}")
        return self._map(run_point, list(zip(angles, seeds)))

    @log_execution_time
    def sweep_crystal(
        self,
        start_mm: Optional[float] = None,
        stop_mm: Optional[float] = None,
        step_mm: Optional[float] = None,
        compensation: bool = False,
    ) -> List[Dict[str, Any]]:
        """
        One session per crystal displacement with theta_H_P = 0
        """
        exp = self.settings.experiment
        positions = AngleUtils.grid(
            exp.crystal_start_mm if start_mm is None else start_mm,
            exp.crystal_stop_mm if stop_mm is None else stop_mm,
            exp.crystal_step_mm if step_mm is None else step_mm,
        )
        seeds = self._point_seeds(len(positions))

        def run_point(point: Tuple[float, int]) -> Dict[str, Any]:
            delta_x, seed = point
            source = self.settings.get_source_config(theta_H_P=0.0, delta_x=delta_x)
            gp_theta_b = self.oracle_angle(source) if compensation else None
            config = self.session_config(0.0, delta_x, gp_theta_b, seed)
            report = run_session(config)
            return {"delta_x_mm": delta_x, "qber": report.qber_total, "aborted": report.aborted}

        logger.info(f"Crystal sweep: {len(positions)} points, compensation={'on' if compensation else 'off'}")
        return self._map(run_point, list(zip(positions, seeds)))

    @staticmethod
    def fit_pump_sweep(rows: Sequence[Dict[str, Any]]) -> FitResult:
        """a - b|cos(4 theta + delta)| through a pump-phase sweep"""
        return fit_qber_curve([(math.radians(r["theta_deg"]), r["qber"]) for r in rows])

    # -------------------------------------------------
    # Single runs
    # -------------------------------------------------

    @log_execution_time
    def bbm92_run(self, compensation: bool = False) -> SessionReport:
        """
        One session with the configured source, stations and session keys
        """
        config = self.settings.get_session_config(seed=self.seed)
        if compensation:
            config = self.settings.get_session_config(
                source=config.source, gp_theta_b=self.oracle_angle(config.source), seed=self.seed
            )
        return run_session(config)

    def _tomography_state(self, source: SourceConfig, compensation: bool):
        rho = emitted_state(source)
        phi_un = unknown_phase(source.delta_x, source.phi0, source.kappa)
        ket = state_after_pump_gp(phi_un, source.theta_H_P)
        if not compensation:
            return rho, ket
        theta = self.oracle_angle(source)
        rho_c = apply_local_density(JonesMatrix.identity(), qhq(theta), rho)
        return rho_c, state_after_receiver_gp(ket, theta)

    @log_execution_time
    def tomography(
        self,
        counts_path: Optional[Path] = None,
        shots: Optional[int] = None,
        compensation: bool = False,
    ) -> Tuple[TomographyResult, List[TomographySetting]]:
        """
        Reconstruct the configured source state from synthesized or recorded counts.

        The target is the ideal (noise-free) state at the same settings.
        """
        source = self.settings.get_source_config()
        rho, target = self._tomography_state(source, compensation)
        if counts_path is not None:
            counts = read_counts_csv(counts_path)
            logger.info(f"Loaded {len(counts)} tomography settings from {counts_path}")
        else:
            counts = synthesize_counts(
                rho, shots or self.settings.experiment.tomography_shots, RandomUtils.rng(self.seed)
            )
        result = tomography_report(counts, target)
        logger.info(f"Tomography fidelity {result.fidelity_to_target:.4f}")
        return result, counts

    @log_execution_time
    def compensate(self, trace_path: Optional[Path] = None) -> CompensationOutcome:
        """
        Active compensation on Bob's receiver element for the configured source
        """
        src = self.settings.source
        theta_H_P, delta_x = math.radians(src.theta_h_p_deg), src.delta_x_mm

        def factory(theta_b: float, seed: int, **options) -> SessionReport:
            return run_session(self.session_config(theta_H_P, delta_x, theta_b, seed, options.get("x_parity")))

        controller = CompensationController(
            factory,
            rotator=self.rotator,
            coarse_step=math.radians(self.settings.rotator.coarse_step_deg),
            averaging=self.settings.rotator.averaging,
            seed=self.seed,
        )
        outcome = controller.run()
        if trace_path is not None:
            controller.write_trace(trace_path)
        return outcome

    # -------------------------------------------------
    # State-transformation table
    # -------------------------------------------------

    def _table_entry(self, theta_H_P: float, delta_x: float, seeds: Sequence[int]) -> Dict[str, Any]:
        source = self.settings.get_source_config(theta_H_P=theta_H_P, delta_x=delta_x)
        shots = self.settings.experiment.tomography_shots
        phi_un = unknown_phase(delta_x, source.phi0, source.kappa)
        ket = state_after_pump_gp(phi_un, theta_H_P)
        rho = emitted_state(source)

        initial = tomography_report(synthesize_counts(rho, shots, RandomUtils.rng(seeds[0])), ket)
        uncompensated = run_session(self.session_config(theta_H_P, delta_x, None, seeds[1]))

        theta_ab = self.oracle_angle(source)
        compensated_ket = state_after_receiver_gp(ket, theta_ab)
        rho_c = apply_local_density(JonesMatrix.identity(), qhq(theta_ab), rho)
        final = tomography_report(synthesize_counts(rho_c, shots, RandomUtils.rng(seeds[2])), PHI_PLUS)
        compensated = run_session(self.session_config(theta_H_P, delta_x, theta_ab, seeds[1]))

        theta_deg = math.degrees(theta_ab)
        return {
            "state": state_label(canonicalize(ket)),
            "fidelity": initial.fidelity_to_target,
            "qber": uncompensated.qber_total,
            "compensation_angle_deg": theta_deg,
            "compensation_angle_alt_deg": theta_deg - 90.0,
            "compensated_state": state_label(canonicalize(compensated_ket)),
            "compensated_fidelity": final.fidelity_to_target,
            "compensated_qber": compensated.qber_total,
        }

    @log_execution_time
    def table1(self) -> Dict[str, Any]:
        """
        Each row prepared twice: by the pump angle alone (pump) and by the
        crystal position alone (crystal)
        """
        seeds = self._point_seeds(6 * len(TABLE1_ROWS))
        jobs = []
        for i, (theta_deg, delta_x) in enumerate(TABLE1_ROWS):
            jobs.append((math.radians(theta_deg), 0.0, seeds[6 * i: 6 * i + 3]))
            jobs.append((0.0, delta_x, seeds[6 * i + 3: 6 * i + 6]))
        entries = self._map(lambda job: self._table_entry(*job), jobs)

        rows = []
        for i, (theta_deg, delta_x) in enumerate(TABLE1_ROWS):
            rows.append({
                "theta_h_p_deg": theta_deg,
                "delta_x_mm": delta_x,
                "pump": entries[2 * i],
                "crystal": entries[2 * i + 1],
            })
        return {"noise_p": self.settings.source.noise_p, "seed": self.seed, "rows": rows}

    # -------------------------------------------------
    # Output
    # -------------------------------------------------

    @staticmethod
    def write_rows(path: Path, columns: Sequence[str], rows: Sequence[Dict[str, Any]]):
        SerializationUtils.write_csv(path, columns, ([row[c] for c in columns] for row in rows))
        logger.info(f"Wrote {len(rows)} rows to {path}")
