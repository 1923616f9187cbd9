# File: app/utils/utils.py
"""
Utility functions shared by services, CLI and scripts
"""
import csv
import json
import logging
import math
import time
from functools import wraps
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
from rich.logging import RichHandler

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s - %(message)s"


class LoggingUtils:
    """Logging setup for entry points"""

    @staticmethod
    def configure(level: str = "INFO", log_file: Optional[str] = None):
        """Console through rich, optional plain-text file"""
        handlers: List[logging.Handler] = [
            RichHandler(rich_tracebacks=False, show_path=False, markup=False)
        ]
        if log_file:
            Path(log_file).parent.mkdir(parents=True, exist_ok=True)
            file_handler = logging.FileHandler(log_file)
            file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
            handlers.append(file_handler)
        logging.basicConfig(
            level=getattr(logging, level.upper(), logging.INFO),
            format="%(name)s - %(message)s",
            handlers=handlers,
            force=True,
        )


class AngleUtils:
    """Angle conversions; radians internally, degrees at the boundaries"""

    @staticmethod
    def wrap(angle: float, period: float = 2 * math.pi) -> float:
        """Reduce into [0, period)"""
        wrapped = angle % period
        return 0.0 if math.isclose(wrapped, period) else wrapped

    @staticmethod
    def grid(start: float, stop: float, step: float) -> List[float]:
        """Inclusive grid, robust to float accumulation"""
        if not step > 0:
            raise ValueError("step must be > 0")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [start + i * step for i in range(max(count, 0))]


class RandomUtils:
    """Deterministic seed handling"""

    @staticmethod
    def rng(seed: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(seed))

    @staticmethod
    def spawn(seed: int, count: int) -> List[np.random.Generator]:
        """Independent generators derived from one seed"""
        children = np.random.SeedSequence(seed).spawn(count)
        return [np.random.default_rng(child) for child in children]

    @staticmethod
    def derive_seeds(seed: int, count: int) -> List[int]:
        """Independent integer seeds for sub-runs (sweep points, probes)"""
        words = np.random.SeedSequence(seed).generate_state(count, dtype=np.uint32)
        return [int(w) for w in words]


class SerializationUtils:
    """JSON and CSV output"""

    @staticmethod
    def complex_matrix(matrix: np.ndarray) -> List[List[List[float]]]:
        """Matrix as nested [re, im] pairs"""
        return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(matrix)]

    @staticmethod
    def matrix_from_pairs(pairs: Sequence) -> np.ndarray:
        arr = np.asarray(pairs, dtype=float)
        return arr[..., 0] + 1j * arr[..., 1]

    @staticmethod
    def bits_to_hex(bits: Sequence[int]) -> str:
        if len(bits) == 0:
            return ""
        return np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes().hex()

    @staticmethod
    def write_json(path: Path, data: Dict[str, Any]):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(data, f, indent=2, sort_keys=False)
            f.write("\n")

    @staticmethod
    def read_json(path: Path) -> Dict[str, Any]:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)

    @staticmethod
    def write_csv(path: Path, columns: Sequence[str], rows: Iterable[Sequence[Any]]):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([FormattingUtils.cell(value) for value in row])

    @staticmethod
    def read_csv(path: Path) -> List[Dict[str, str]]:
        with open(path, "r", newline="", encoding="utf-8") as f:
            return list(csv.DictReader(f))


class FormattingUtils:
    """Text formatting utilities"""

    @staticmethod
    def cell(value: Any) -> str:
        """Stable CSV cell text"""
        if isinstance(value, bool):
            return "true" if value else "false"
        if isinstance(value, float):
            return f"{value:.10g}"
        if value is None:
            return ""
        return str(value)

    @staticmethod
    def percent(fraction: float) -> str:
        return f"{100.0 * fraction:.2f}%"


def log_execution_time(func):
    """Decorator to log function execution time"""
    @wraps(func)
    def wrapper(*args, **kwargs):
        start_time = time.time()
        result = func(*args, **kwargs)
        execution_time = time.time() - start_time
        logger.info(f"{func.__name__} executed in {execution_time:.2f} seconds")
        return result
    return wrapper
