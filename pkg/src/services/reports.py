"""
CapMass 1.0 - Report Writers
CSV records (pandas), JSON reports and two-column gnuplot series.
"""
import json
import logging
from pathlib import Path
from typing import Iterable, List, Sequence

import numpy as np
import pandas as pd

from src.core.mass import DeficitRecord, MassReport
from src.utils.constants import ReportConfig

logger = logging.getLogger(__name__)


def _clean(value):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if np.isfinite(value) else None
    return value


def records_frame(records: Sequence[DeficitRecord]) -> pd.DataFrame:
    columns = ReportConfig.CSV_COLUMNS + ReportConfig.ERROR_COLUMNS
    return pd.DataFrame([r.to_row() for r in records], columns=columns)


def write_records_csv(records: Sequence[DeficitRecord], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    records_frame(records).to_csv(path, index=False, float_format=ReportConfig.FLOAT_FORMAT)
    return path


def write_json(payload: dict, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_clean(payload), f, indent=4, sort_keys=True, ensure_ascii=False)
        f.write("\n")
    return path


def write_report(report: MassReport, path: Path) -> Path:
    return write_json(report.to_dict(), path)


def write_series(path: Path, xs: Iterable[float], ys: Iterable[float], header: str = "") -> Path:
    """Two whitespace-separated numeric columns, readable by gnuplot."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pairs = [(float(x), float(y)) for x, y in zip(xs, ys) if x is not None and y is not None]
    with open(path, "w", encoding="utf-8") as f:
        if header:
            f.write(f"# {header}\n")
        for x, y in pairs:
            f.write(f"{x:.12g} {y:.12g}\n")
    return path


def write_record_series(records: Sequence[DeficitRecord], out_dir: Path) -> List[Path]:
    """
    One .dat file per plotted series: each deficit against rho, and the
    isoperimetric deficit against 1/sqrt(A) for the quasi-local bound.
    """
    out_dir = Path(out_dir)
    written = []
    for attribute, name in (
        ("cv_deficit_radius", "cv_def_radius"),
        ("cv_deficit_normalized", "cv_def_norm"),
        ("iso_deficit", "iso_def"),
        ("iso_deficit_alt", "iso_def_alt"),
    ):
        points = [(r.rho, getattr(r, attribute)) for r in records if getattr(r, attribute) is not None]
        if points:
            xs, ys = zip(*points)
            written.append(write_series(out_dir / f"{name}.dat", xs, ys, header=f"rho {name}"))
    iso = [(1.0 / np.sqrt(r.area.value), r.iso_deficit) for r in records if r.area and r.iso_deficit is not None]
    if iso:
        xs, ys = zip(*iso)
        written.append(write_series(out_dir / "iso_def_vs_inv_sqrt_area.dat", xs, ys, header="1/sqrt(A) iso_def"))
    logger.debug("Wrote %d series to %s", len(written), out_dir)
    return written


def format_error(error: float) -> str:
    """One significant digit, exponent without zero padding (1e-8)."""
    if error == 0:
        return "0"
    return np.format_float_scientific(error, precision=0, unique=False, trim="-", exp_digits=1)


def format_capacity_line(value: float, error: float, method: str) -> str:
    return f"{value:.6f} ± {format_error(error)} ({method})"
