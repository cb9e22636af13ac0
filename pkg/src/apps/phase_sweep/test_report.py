"""
Tests for sweep orchestration and the table/annotation files.
"""

import json
import math
import sys
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd

# Add src to path
src_path = Path(__file__).parent.parent.parent
sys.path.insert(0, str(src_path))

from apps.phase_sweep.config import Runtime, parse_config
from apps.phase_sweep.report import (
    COLUMNS,
    SCHEMA_LINE,
    oracle_rates,
    partial_report,
    pt_angle_grid,
    read_table,
    run_sweep,
    write_partial,
    write_pt_table,
    write_report,
    write_table,
)
from core.phase import critical_rotation_magnetic

SMALL_FIG1B = """
[fields]
b_tesla = 0.1
theta_m = pi/8

[sweep]
omega_r_min_rad_s = 0
omega_r_max_rad_s = 4e10
points = 21
"""

SMALL_FIG3B = """
[fields]
b_tesla = 0.01
theta_m = pi/3
e_kv_per_cm = 2
theta_e = pi/8

[sweep]
omega_r_min_rad_s = 0
omega_r_max_rad_s = 5e10
points = 26
"""


def _runtime(directory: str, fmt: str = "csv") -> Runtime:
    return Runtime(directory=Path(directory), format=fmt, threads=1, figure=False)


def test_rows_are_sorted_and_complete():
    report = run_sweep(parse_config(SMALL_FIG1B, stem="fig1b"))
    rows = report.rows
    assert list(rows.columns) == COLUMNS
    assert len(rows) == 21 * 8
    ordered = rows.sort_values(["omega_r_rad_s", "state_index"], kind="stable").reset_index(drop=True)
    pd.testing.assert_frame_equal(rows, ordered)
    assert set(rows["parity"]) == {"e", "f"}
    assert sorted(set(rows["M_times_2"])) == [-3, -1, 1, 3]

    at_zero = rows[rows["omega_r_rad_s"] == 0.0]
    assert at_zero["total_phase_rad"].isna().all()
    assert at_zero["geometric_phase_rad"].notna().all()
    print(f"  {len(rows)} rows, {len(report.zeros)} zeros")


def test_common_zero_is_annotated():
    config = parse_config(SMALL_FIG1B, stem="fig1b")
    report = run_sweep(config)
    critical = critical_rotation_magnetic(config.params, config.fields)
    zeros = report.annotations()["zeros"]["single_state"]
    assert len(zeros) == 8
    for entry in zeros:
        assert math.isclose(entry["omega_r_rad_s"], critical, rel_tol=1e-9)
        assert len(entry["states"]) == 1
    print(f"  critical rate {critical:.6e} rad/s")


def test_csv_and_json_tables_agree():
    report = run_sweep(parse_config(SMALL_FIG3B, stem="fig3b"))
    with tempfile.TemporaryDirectory() as tmp:
        csv_path = write_table(report.rows, Path(tmp) / "fig3b.csv", "csv")
        json_path = write_table(report.rows, Path(tmp) / "fig3b.json", "json")

        assert csv_path.read_text().splitlines()[0] == SCHEMA_LINE
        document = json.loads(json_path.read_text())
        assert document["schema"] == 1 and document["columns"] == COLUMNS

        from_csv = read_table(csv_path)
        from_json = read_table(json_path)
        pd.testing.assert_frame_equal(from_csv, report.rows, check_dtype=False, check_exact=True)
        pd.testing.assert_frame_equal(from_json, report.rows, check_dtype=False, check_exact=True)


def test_repeated_writes_are_byte_identical():
    config = parse_config(SMALL_FIG3B, stem="fig3b")
    with tempfile.TemporaryDirectory() as first, tempfile.TemporaryDirectory() as second:
        one = write_report(run_sweep(config), _runtime(first))
        two = write_report(run_sweep(config), _runtime(second))
        for a, b in zip(one, two):
            assert a.name == b.name
            assert a.read_bytes() == b.read_bytes(), a.name
        assert sorted(path.name for path in one) == ["fig3b.annotations.json", "fig3b.csv"]


def test_annotations_document():
    report = run_sweep(parse_config(SMALL_FIG3B, stem="fig3b"))
    annotations = report.annotations()
    assert annotations["schema"] == 1
    assert set(annotations) == {"schema", "zeros", "gaps", "refinements", "warnings"}
    for gap in annotations["gaps"]:
        assert gap["kind"] in ("crossing", "avoided")
        assert len(gap["pair"]) == 2
    for entry in annotations["zeros"]["relative"]:
        assert len(entry["states"]) == 2
    omegas = [entry["omega_r_rad_s"] for entry in annotations["zeros"]["single_state"]]
    assert omegas == sorted(omegas)


def test_partial_table_suffix():
    config = parse_config(SMALL_FIG1B, stem="fig1b")
    empty = partial_report(config, None)
    assert list(empty.rows.columns) == COLUMNS and empty.rows.empty

    tracked = run_sweep(config).sweep
    partial = partial_report(config, tracked)
    assert len(partial.rows) == 21 * 8
    with tempfile.TemporaryDirectory() as tmp:
        path = write_partial(partial, _runtime(tmp, "json"))
        assert path.name == "fig1b.json.partial"
        assert len(read_table(path)) == 21 * 8


def test_pt_table():
    config = parse_config(SMALL_FIG1B + "\n[toggles]\npt_compare = true\n", stem="fig1b")
    vary, angles = pt_angle_grid(config)
    assert vary == "theta_m"
    assert angles[0] == 0.0 and math.isclose(angles[-1], math.pi / 8)
    with tempfile.TemporaryDirectory() as tmp:
        path = write_pt_table(config, _runtime(tmp))
        lines = path.read_text().splitlines()
        assert lines[0] == "# vary: theta_m"
        assert lines[1] == "theta,pt2,pt3,exact,residual"
        assert len(lines) == 2 + len(angles)

    combined = parse_config(SMALL_FIG3B)
    assert pt_angle_grid(combined)[0] == "both"


def test_oracle_rates():
    rates = oracle_rates(np.linspace(0.0, 4e10, 21))
    assert len(rates) == 2
    assert math.isclose(rates[0], 2.2e10) and rates[1] == 4e10
    assert oracle_rates(np.array([0.0, 1e9])) == [1e9]
    assert oracle_rates(np.array([0.0])) == []


if __name__ == "__main__":
    tests = [
        test_rows_are_sorted_and_complete,
        test_common_zero_is_annotated,
        test_csv_and_json_tables_agree,
        test_repeated_writes_are_byte_identical,
        test_annotations_document,
        test_partial_table_suffix,
        test_pt_table,
        test_oracle_rates,
    ]
    for test in tests:
        print(f"{test.__name__}")
        test()
    print(f"\n{len(tests)} report tests passed")
