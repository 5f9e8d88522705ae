import json
import math

import numpy as np
import pandas as pd
import pytest

from src.core.radial_capacity import radial_backend
from src.core.mass import deficit_record
from src.core.regions import Ball
from src.services.reports import (
    format_capacity_line,
    format_error,
    records_frame,
    write_json,
    write_record_series,
    write_records_csv,
    write_series,
)
from src.utils.constants import ReportConfig


@pytest.fixture
def records(schwarzschild, quad):
    return [
        deficit_record(Ball(radius=rho), schwarzschild, [radial_backend], j=j, rho=rho, quad=quad,
                       with_asymmetry=False)
        for j, rho in enumerate((10.0, 20.0, 40.0))
    ]


def test_records_csv_columns(records, tmp_path):
    path = write_records_csv(records, tmp_path / "records.csv")
    frame = pd.read_csv(path)
    assert list(frame.columns) == ReportConfig.CSV_COLUMNS + ReportConfig.ERROR_COLUMNS
    assert frame["rho"].tolist() == [10.0, 20.0, 40.0]
    assert frame["capacity"].iloc[0] == pytest.approx(10.5)
    assert frame["asymmetry"].isna().all()


def test_records_frame_is_empty_for_no_records():
    assert records_frame([]).empty


def test_json_is_cleaned(tmp_path):
    payload = {"a": np.float64(1.5), "b": np.int64(3), "c": float("nan"), "d": np.array([1.0, 2.0]),
               "e": np.bool_(True), 4: (1, 2)}
    data = json.loads(write_json(payload, tmp_path / "x" / "report.json").read_text(encoding="utf-8"))
    assert data == {"a": 1.5, "b": 3, "c": None, "d": [1.0, 2.0], "e": True, "4": [1, 2]}


def test_series_are_gnuplot_columns(tmp_path):
    path = write_series(tmp_path / "s.dat", [1.0, 2.0, None], [3.0, 4.0, 5.0], header="x y")
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines == ["# x y", "1 3", "2 4"]


def test_record_series_files(records, tmp_path):
    names = sorted(p.name for p in write_record_series(records, tmp_path))
    assert names == [
        "cv_def_norm.dat",
        "cv_def_radius.dat",
        "iso_def.dat",
        "iso_def_alt.dat",
        "iso_def_vs_inv_sqrt_area.dat",
    ]
    rows = np.loadtxt(tmp_path / "iso_def_vs_inv_sqrt_area.dat")
    assert rows.shape == (3, 2)
    assert rows[0, 0] == pytest.approx(1.0 / math.sqrt(records[0].area.value))


def test_capacity_line_format():
    assert format_capacity_line(10.5, 3e-12, "radial-quadrature") == "10.500000 ± 3e-12 (radial-quadrature)"


@pytest.mark.parametrize("error, text", [(1e-8, "1e-8"), (9.6e-9, "1e-8"), (2.4e-3, "2e-3"), (0.0, "0")])
def test_error_exponent_is_not_padded(error, text):
    assert format_error(error) == text
    assert format_capacity_line(1.0, error, "conformal-shift") == f"1.000000 ± {text} (conformal-shift)"
