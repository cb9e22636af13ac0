"""
Sweep orchestration and file emission.

Data files are byte-stable for a given config and thread count: rows are
sorted by (omega_r, state_index) and every float is written with 17
significant digits in scientific notation.
"""

import json
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from apps.phase_sweep.config import RunConfig, Runtime
from core.floquet_pt import pt_vs_exact_report
from core.model import validity_warnings
from core.oracle import dressed_propagator, propagate_period, quasi_energy_mismatch
from core.phase import PhaseRecord, ZeroPhase, find_zero_phase, sweep_phases
from core.spectrum import CANONICAL_LABELS, SpectrumGap, TrackedSweep, find_spectrum_gaps, track_sweep

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SCHEMA_LINE = f"# ohphase-sweep-schema: {SCHEMA_VERSION}"
COLUMNS = [
    "omega_r_rad_s",
    "state_index",
    "M_times_2",
    "parity",
    "energy_joule",
    "total_phase_rad",
    "dynamical_phase_rad",
    "geometric_phase_rad",
]
FLOAT_FORMAT = "%.16e"
PT_ANGLES = 11


@dataclass
class SweepReport:
    stem: str
    rows: pd.DataFrame
    sweep: Optional[TrackedSweep] = None
    phases: List[PhaseRecord] = field(default_factory=list)
    zeros: List[ZeroPhase] = field(default_factory=list)
    relative_zeros: List[ZeroPhase] = field(default_factory=list)
    gaps: List[SpectrumGap] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    def annotations(self) -> Dict:
        return {
            "schema": SCHEMA_VERSION,
            "zeros": {
                "single_state": [_zero_entry(zero) for zero in self.zeros],
                "relative": [_zero_entry(zero) for zero in self.relative_zeros],
            },
            "gaps": [
                {
                    "omega_r_rad_s": gap.omega_r,
                    "pair": [str(label) for label in gap.pair],
                    "gap_joule": gap.gap,
                    "kind": gap.kind,
                }
                for gap in self.gaps
            ],
            "refinements": self.sweep.refinements if self.sweep is not None else 0,
            "warnings": list(self.warnings),
        }


def _zero_entry(zero: ZeroPhase) -> Dict:
    return {"omega_r_rad_s": zero.omega_r, "states": [str(label) for label in zero.states]}


def format_float(value: float) -> str:
    return "nan" if math.isnan(value) else FLOAT_FORMAT % value


def sweep_rows(sweep: TrackedSweep, phases: Sequence[PhaseRecord]) -> pd.DataFrame:
    """One row per state per grid point, sorted by (omega_r, state_index)."""
    energies = sweep.energies() if sweep.spectra else np.empty((0, len(CANONICAL_LABELS)))
    records = []
    for row, record in zip(energies, phases):
        for index, label in enumerate(CANONICAL_LABELS):
            records.append(
                (
                    record.omega_r,
                    index,
                    label.m_twice,
                    label.parity,
                    float(row[index]),
                    float(record.total_phase[index]),
                    float(record.dynamical_phase[index]),
                    float(record.geometric_phase[index]),
                )
            )
    return pd.DataFrame.from_records(records, columns=COLUMNS)


def run_sweep(config: RunConfig, threads: int = 1) -> SweepReport:
    """
    Track the configured sweep and collect phases, zeros, gaps and warnings.

    Raises:
        TrackingBreakdown: with .partial set to the sweep up to the failure
    """
    caught: List[str] = list(validity_warnings(config.fields))
    known = len(caught)
    with warnings.catch_warnings(record=True) as recorded:
        warnings.simplefilter("always")
        sweep = track_sweep(config.params, config.fields, config.grid(), threads=threads)
        phases = sweep_phases(sweep)
        zeros = find_zero_phase(sweep, phases, "single_state")
        relative = find_zero_phase(sweep, phases, "relative")
        gaps = find_spectrum_gaps(sweep)
    for item in recorded:
        message = str(item.message)
        if message not in caught:
            caught.append(message)
    for message in caught[known:]:
        logger.warning(message)

    logger.info(
        "sweep %s: %d points, %d zeros, %d relative zeros, %d gap events",
        config.stem, len(sweep.grid), len(zeros), len(relative), len(gaps),
    )
    return SweepReport(config.stem, sweep_rows(sweep, phases), sweep, phases, zeros, relative, gaps, caught)


def partial_report(config: RunConfig, partial: Optional[TrackedSweep]) -> SweepReport:
    """Rows of the points tracked before a TrackingBreakdown."""
    if partial is None or not partial.spectra:
        return SweepReport(config.stem, pd.DataFrame(columns=COLUMNS), partial)
    return SweepReport(config.stem, sweep_rows(partial, sweep_phases(partial)), partial)


# --- emission ---------------------------------------------------------------


def write_table(rows: pd.DataFrame, path: Path, fmt: str) -> Path:
    """Write the sweep table as schema-tagged CSV or JSON."""
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        with open(path, "w", newline="") as handle:
            handle.write(SCHEMA_LINE + "\n")
            rows.to_csv(handle, index=False, float_format=FLOAT_FORMAT, na_rep="nan", lineterminator="\n")
        return path

    lines = []
    for values in rows.itertuples(index=False):
        tokens = []
        for value in values:
            if isinstance(value, str):
                tokens.append(json.dumps(value))
            elif isinstance(value, (int, np.integer)):
                tokens.append(str(int(value)))
            else:
                tokens.append("null" if math.isnan(value) else FLOAT_FORMAT % value)
        lines.append("[" + ",".join(tokens) + "]")
    body = ",\n".join(lines)
    with open(path, "w", newline="") as handle:
        handle.write(f'{{"schema": {SCHEMA_VERSION}, "columns": {json.dumps(COLUMNS)}, "data": [\n{body}\n]}}\n')
    return path


def read_table(path: Path) -> pd.DataFrame:
    """Read a table written by write_table, either format."""
    path = Path(path)
    with open(path) as handle:
        first = handle.readline().strip()
    if first == SCHEMA_LINE:
        return pd.read_csv(path, comment="#", keep_default_na=False, na_values=["nan"], float_precision="round_trip")
    if first.startswith("{"):
        with open(path) as handle:
            document = json.load(handle)
        if document.get("schema") != SCHEMA_VERSION:
            raise ValueError(f"{path}: unsupported schema {document.get('schema')!r}")
        table = pd.DataFrame(document["data"], columns=document["columns"])
        return table.astype({column: float for column in COLUMNS if column.endswith(("_rad", "_joule", "_rad_s"))})
    raise ValueError(f"{path}: not an ohphase sweep table")


def write_json(document: Dict, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as handle:
        json.dump(document, handle, indent=2, sort_keys=True, allow_nan=False, default=_json_default)
        handle.write("\n")
    return path


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"cannot serialise {type(value).__name__}")


def table_path(directory: Path, stem: str, fmt: str) -> Path:
    return Path(directory) / f"{stem}.{fmt}"


def write_report(report: SweepReport, runtime: Runtime) -> List[Path]:
    """Sweep table plus <stem>.annotations.json."""
    written = [
        write_table(report.rows, table_path(runtime.directory, report.stem, runtime.format), runtime.format),
        write_json(report.annotations(), runtime.directory / f"{report.stem}.annotations.json"),
    ]
    for path in written:
        logger.info("wrote %s", path)
    return written


def write_partial(report: SweepReport, runtime: Runtime) -> Path:
    """Sweep table of a broken sweep, with a .partial suffix."""
    path = table_path(runtime.directory, report.stem, runtime.format)
    path = write_table(report.rows, path.with_name(path.name + ".partial"), runtime.format)
    logger.info("wrote partial table %s", path)
    return path


# --- optional outputs ---------------------------------------------------------


def pt_angle_grid(config: RunConfig):
    """(vary, angles) for the pt-vs-exact table: 0 up to the configured tilt."""
    fields = config.fields
    if fields.theta_e == 0.0 or fields.e_mag == 0.0:
        vary, top = "theta_m", fields.theta_m
    elif fields.theta_m == 0.0:
        vary, top = "theta_e", fields.theta_e
    else:
        vary, top = "both", max(fields.theta_m, fields.theta_e)
    return vary, np.linspace(0.0, top, PT_ANGLES)


def write_pt_table(config: RunConfig, runtime: Runtime) -> Path:
    """<stem>.pt.csv: perturbative against exact adiabatic phases over the tilt angle."""
    vary, angles = pt_angle_grid(config)
    table = pt_vs_exact_report(config.params, config.fields, angles, vary, config.pt3_omega_l_squared)
    path = runtime.directory / f"{config.stem}.pt.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as handle:
        handle.write(f"# vary: {vary}\n")
        table.to_csv(handle, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info("wrote %s", path)
    return path


def oracle_rates(grid: np.ndarray) -> List[float]:
    """Largest and middle nonzero rates of the sweep."""
    nonzero = grid[grid > 0]
    if len(nonzero) == 0:
        return []
    return sorted({float(nonzero[-1]), float(nonzero[len(nonzero) // 2])})


def oracle_summary(config: RunConfig) -> Dict:
    """Propagator checks at the oracle rates."""
    entries = []
    for omega in oracle_rates(config.grid()):
        fields = replace(config.fields, omega_r=omega)
        result = propagate_period(config.params, fields, scheme="magnus4")
        mismatch, _ = quasi_energy_mismatch(config.params, fields, result)
        entries.append(
            {
                "omega_r_rad_s": omega,
                "steps": result.step_count,
                "scheme": result.scheme,
                "unitarity_defect": result.unitarity_defect,
                "identity_defect": float(np.max(np.abs(result.U - dressed_propagator(config.params, fields)))),
                "quasi_energy_mismatch_rad": mismatch,
            }
        )
    return {"schema": SCHEMA_VERSION, "checks": entries}


def write_oracle(config: RunConfig, runtime: Runtime) -> Path:
    path = write_json(oracle_summary(config), runtime.directory / f"{config.stem}.oracle.json")
    logger.info("wrote %s", path)
    return path
