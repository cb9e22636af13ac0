"""
Geometric phases from dressed spectra.

Over one rotation period T = 2 pi / omega_r a dressed state collects

    gamma(omega_r)  = E~(omega_r) T / hbar            total
    gamma(0)        = E~(0) T / hbar                  dynamical (same T)
    dgamma          = gamma(omega_r) - gamma(0)       geometric

Phases are reported unwrapped. dgamma has a removable singularity at
omega_r = 0; below omega_floor it is replaced by its limit 2 pi dE~/domega_r / hbar.
"""

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import bisect

from core.dressing import rotation_generator
from core.errors import (
    LabelMismatch,
    NoCriticalRate,
    NotPureMagnetic,
    RegimeUndefined,
    ValidityWarning,
)
from core.model import FieldProtocol, MoleculeParams, derived_frequencies, freeze
from core.spectrum import (
    CANONICAL_LABELS,
    DressedSpectrum,
    StateLabel,
    TrackedSweep,
    continue_spectrum,
    spectrum_at,
    static_spectrum,
    track_sweep,
)

logger = logging.getLogger(__name__)

FLOOR_FRACTION = 1e-6
ZERO_REFINE_RTOL = 1e-12
IDENTICAL_TOL = 1e-6  # rad; relative phases this small everywhere are identically zero
MUCH_SMALLER = 0.1  # "a << b" taken as a < 0.1 b

REGIMES = ("magnetic_adiabatic", "magnetic_fast", "electric_weak", "electric_strong")
TOP_STATE = StateLabel(3, "f")

M_CANONICAL = np.array([label.m for label in CANONICAL_LABELS])


@dataclass(frozen=True)
class PhaseRecord:
    """Per-state phases at one rotation rate, in canonical label order."""

    omega_r: float
    total_phase: np.ndarray
    dynamical_phase: np.ndarray
    geometric_phase: np.ndarray
    labels: Tuple[StateLabel, ...] = CANONICAL_LABELS

    def __post_init__(self):
        for name in ("total_phase", "dynamical_phase", "geometric_phase"):
            object.__setattr__(self, name, freeze(np.asarray(getattr(self, name), dtype=float)))

    def of(self, label: StateLabel) -> float:
        return float(self.geometric_phase[self.labels.index(label)])


class AsymptoticExpansion(NamedTuple):
    """
    leading + correction * x, with x = omega_r (adiabatic regimes) or
    1/omega_r (magnetic_fast). Magnetic values are per unit M; electric values
    are for the (3/2, f) state.
    """

    regime: str
    leading: float
    correction: float
    variable: str
    valid: bool
    notes: Tuple[str, ...]

    def evaluate(self, omega_r: float) -> float:
        x = omega_r if self.variable == "omega_r" else 1.0 / omega_r
        return self.leading + self.correction * x


class ZeroPhase(NamedTuple):
    omega_r: float
    states: Tuple[StateLabel, ...]  # one label, or a pair for relative zeros


def omega_floor(params: MoleculeParams, fields: FieldProtocol) -> float:
    freq = derived_frequencies(params, fields)
    return FLOOR_FRACTION * max(freq.omega_l, freq.omega_e, params.delta)


def _limit_phases(params: MoleculeParams, fields: FieldProtocol, zero: DressedSpectrum) -> np.ndarray:
    """omega_r -> 0 limit of dgamma by a centred difference at +/- omega_floor."""
    step = omega_floor(params, fields)
    above, _ = continue_spectrum(params, fields, zero, step)
    below, _ = continue_spectrum(params, fields, zero, -step)
    slope = (above.canonical_energies() - below.canonical_energies()) / (2.0 * step)
    return 2.0 * math.pi * slope / params.hbar


def _phases_from_energies(params, omega_r: float, energies: np.ndarray, static: np.ndarray):
    period = 2.0 * math.pi / omega_r
    total = energies * period / params.hbar
    dynamical = static * period / params.hbar
    return total, dynamical


def geometric_phase(
    params: MoleculeParams,
    fields: FieldProtocol,
    spectrum: DressedSpectrum,
    zero_spectrum: DressedSpectrum,
) -> PhaseRecord:
    """
    Phases of every labeled state at spectrum.omega_r.

    Raises:
        LabelMismatch: the spectra are unlabeled or carry different label sets
    """
    if spectrum.labels is None or zero_spectrum.labels is None:
        raise LabelMismatch("both spectra must be labeled")
    if set(spectrum.labels) != set(zero_spectrum.labels):
        raise LabelMismatch("spectra carry different label sets")

    omega_r = spectrum.omega_r
    energies = spectrum.canonical_energies()
    static = zero_spectrum.canonical_energies()

    if omega_r > omega_floor(params, fields):
        total, dynamical = _phases_from_energies(params, omega_r, energies, static)
        return PhaseRecord(omega_r, total, dynamical, total - dynamical)

    limit = _limit_phases(params, fields, zero_spectrum)
    if omega_r > 0:
        total, dynamical = _phases_from_energies(params, omega_r, energies, static)
    else:
        total = dynamical = np.full(len(energies), np.nan)
    return PhaseRecord(omega_r, total, dynamical, limit)


def sweep_phases(sweep: TrackedSweep) -> List[PhaseRecord]:
    """PhaseRecord for every grid point of a tracked sweep."""
    params, fields = sweep.params, sweep.fields
    floor = omega_floor(params, fields)
    energies = sweep.energies()
    static = sweep.zero.canonical_energies()

    limit = None
    records = []
    for omega_r, row in zip(sweep.grid, energies):
        if omega_r > floor:
            total, dynamical = _phases_from_energies(params, omega_r, row, static)
            records.append(PhaseRecord(float(omega_r), total, dynamical, total - dynamical))
            continue
        if limit is None:
            limit = _limit_phases(params, fields, sweep.zero)
        if omega_r > 0:
            total, dynamical = _phases_from_energies(params, omega_r, row, static)
        else:
            total = dynamical = np.full(len(row), np.nan)
        records.append(PhaseRecord(float(omega_r), total, dynamical, limit))
    return records


def phases_at(params: MoleculeParams, fields: FieldProtocol, omegas: Sequence[float]) -> List[PhaseRecord]:
    """Track from the static spectrum through ascending omegas and return their phases."""
    return sweep_phases(track_sweep(params, fields, omegas))


# --- closed forms ------------------------------------------------------------


def _require_pure_magnetic(fields: FieldProtocol) -> None:
    if fields.e_mag != 0.0:
        raise NotPureMagnetic(f"closed form needs E = 0, got {fields.e_mag} V/m")


def magnetic_phase_closed_form(params: MoleculeParams, fields: FieldProtocol, omega_r: float) -> np.ndarray:
    """
    dgamma / M for M = -3/2, -1/2, +1/2, +3/2 in a pure rotating magnetic field.

        dgamma / M = (2 pi / w) (sqrt(wL^2 + w^2 - 2 wL w cos(theta_m)) - wL)

    evaluated in the cancellation-free form 2 pi (w - 2 wL cos) / (sqrt(...) + wL).
    """
    _require_pure_magnetic(fields)
    omega_l = derived_frequencies(params, fields).omega_l
    cos_m = math.cos(fields.theta_m)
    if omega_r == 0.0:
        value = -2.0 * math.pi * cos_m if omega_l > 0 else 2.0 * math.pi
    else:
        root = math.sqrt(max(omega_l**2 + omega_r**2 - 2.0 * omega_l * omega_r * cos_m, 0.0))
        value = 2.0 * math.pi * (omega_r - 2.0 * omega_l * cos_m) / (root + omega_l)
    return np.full(4, value)


def magnetic_energies_closed_form(params: MoleculeParams, fields: FieldProtocol, omega_r: float) -> np.ndarray:
    """E~_{M,eps} = (eps/2) hbar Delta + M hbar sqrt(...), canonical label order."""
    _require_pure_magnetic(fields)
    omega_l = derived_frequencies(params, fields).omega_l
    root = math.sqrt(max(omega_l**2 + omega_r**2 - 2.0 * omega_l * omega_r * math.cos(fields.theta_m), 0.0))
    return np.array([0.5 * label.epsilon * params.hbar * params.delta + label.m * params.hbar * root for label in CANONICAL_LABELS])


def critical_rotation_magnetic(params: MoleculeParams, fields: FieldProtocol) -> float:
    """
    Rotation rate 2 omega_L cos(theta_m) where every magnetic geometric phase vanishes.

    Raises:
        NotPureMagnetic: E != 0
        NoCriticalRate: theta_m >= pi/2 or B = 0
    """
    _require_pure_magnetic(fields)
    cos_m = math.cos(fields.theta_m)
    omega_l = derived_frequencies(params, fields).omega_l
    if fields.theta_m >= 0.5 * math.pi or cos_m <= 0.0:
        raise NoCriticalRate(f"no critical rate for theta_m={fields.theta_m:.6f} >= pi/2")
    if omega_l == 0.0:
        raise NoCriticalRate("no critical rate without a magnetic field")
    return 2.0 * omega_l * cos_m


def adiabatic_phases(params: MoleculeParams, fields: FieldProtocol) -> np.ndarray:
    """
    Exact omega_r -> 0 geometric phases, canonical order.

    dH_d/domega_r = -hbar J_z, so the limit is -2 pi <J_z> of each static state.
    """
    zero = static_spectrum(params, fields)
    jz = zero.expectation(rotation_generator())
    return -2.0 * math.pi * jz[zero.canonical_order()]


def berry_standard_offset(geometric: np.ndarray, labels: Sequence[StateLabel] = CANONICAL_LABELS) -> np.ndarray:
    """Add 2 pi per unit M, the convention where the Berry phase reads 2 pi M (1 - cos theta)."""
    return np.asarray(geometric) + 2.0 * math.pi * np.array([label.m for label in labels])


def fast_rotation_limit(params: MoleculeParams, fields: FieldProtocol, omega_r: float) -> np.ndarray:
    """
    Large-omega_r phases, canonical order: 2 pi M, plus the first 1/omega_r
    correction -2 pi M (1 + cos(theta_m)) omega_L / omega_r when E = 0.
    """
    limit = 2.0 * math.pi * M_CANONICAL
    if fields.e_mag != 0.0:
        return limit
    omega_l = derived_frequencies(params, fields).omega_l
    return limit * (1.0 - (1.0 + math.cos(fields.theta_m)) * omega_l / omega_r)


def _characteristic_rate(params: MoleculeParams, fields: FieldProtocol) -> float:
    freq = derived_frequencies(params, fields)
    candidates = [params.delta]
    if freq.omega_l > 0:
        candidates.append(freq.omega_l)
    if freq.omega_e > 0:
        candidates.append(freq.omega_e**2 / max(params.delta, freq.omega_e))
    return min(candidates)


def extrapolate_adiabatic(
    params: MoleculeParams,
    fields: FieldProtocol,
    omega_max: Optional[float] = None,
    points: int = 6,
) -> np.ndarray:
    """Quadratic fit of exact dgamma on (0, omega_max], intercept per canonical state."""
    if omega_max is None:
        omega_max = 1e-3 * _characteristic_rate(params, fields)
    grid = np.linspace(omega_max / points, omega_max, points)
    geometric = np.array([record.geometric_phase for record in phases_at(params, fields, grid)])
    return np.array([np.polyfit(grid / omega_max, geometric[:, k], 2)[-1] for k in range(geometric.shape[1])])


def nonadiabatic_slope(params: MoleculeParams, fields: FieldProtocol, omega_r: float) -> np.ndarray:
    """Forward-difference slope d(dgamma)/domega_r between omega_r and 2 omega_r, canonical order."""
    first, second = phases_at(params, fields, [omega_r, 2.0 * omega_r])
    return (second.geometric_phase - first.geometric_phase) / omega_r


def asymptotic_phases(
    params: MoleculeParams,
    fields: FieldProtocol,
    regime: str,
    omega_r: Optional[float] = None,
) -> AsymptoticExpansion:
    """
    Leading term and first correction of dgamma in a limiting regime.

    magnetic_adiabatic   -2 pi cos(th_m)       + 2 pi sin^2(th_m) / (2 wL) * w      (per M)
    magnetic_fast        2 pi                  - 2 pi (1 + cos(th_m)) wL / w        (per M)
    electric_weak        2 pi (3/2) cos(th_e)  + 2 pi (75 D/32 we^2 + 9/16 D + 81 we^2/400 D^3) sin^2(th_e) * w
    electric_strong      2 pi (3/2) cos(th_e)  + 2 pi (15/8 we + 125 D^2/96 we^3) sin^2(th_e) * w

    Conditions of the regime are checked against the fields (and omega_r when
    given); a violation keeps the numbers but sets valid=False and warns.

    Raises:
        RegimeUndefined: regime not in REGIMES
    """
    if regime not in REGIMES:
        raise RegimeUndefined(f"unknown regime {regime!r}; expected one of {REGIMES}")

    freq = derived_frequencies(params, fields)
    w_l, w_e, delta = freq.omega_l, freq.omega_e, params.delta
    notes: List[str] = []

    def need(condition: bool, message: str) -> None:
        if not condition:
            notes.append(message)

    if regime.startswith("magnetic"):
        need(fields.e_mag == 0.0, "magnetic expansion used with a nonzero electric field")
        need(w_l > 0.0, "magnetic expansion needs B > 0")
        cos_m, sin_m = math.cos(fields.theta_m), math.sin(fields.theta_m)
        if regime == "magnetic_adiabatic":
            leading = -2.0 * math.pi * cos_m
            correction = 2.0 * math.pi * sin_m**2 / (2.0 * w_l) if w_l > 0 else math.inf
            variable = "omega_r"
            if omega_r is not None:
                need(omega_r < MUCH_SMALLER * w_l, "omega_r is not << omega_L")
        else:
            leading = 2.0 * math.pi
            correction = -2.0 * math.pi * (1.0 + cos_m) * w_l
            variable = "inverse_omega_r"
            if omega_r is not None:
                need(omega_r * MUCH_SMALLER > w_l, "omega_r is not >> omega_L")
    else:
        need(fields.b_mag == 0.0, "electric expansion used with a nonzero magnetic field")
        need(w_e > 0.0, "electric expansion needs E > 0")
        cos_e, sin_e = math.cos(fields.theta_e), math.sin(fields.theta_e)
        leading = 2.0 * math.pi * 1.5 * cos_e
        variable = "omega_r"
        if w_e == 0.0:
            correction = math.inf
        elif regime == "electric_weak":
            need(w_e < delta, "weak-field expansion needs mu_e E < hbar Delta")
            coefficient = 75.0 * delta / (32.0 * w_e**2) + 9.0 / (16.0 * delta) + 81.0 * w_e**2 / (400.0 * delta**3)
            correction = 2.0 * math.pi * coefficient * sin_e**2
            if omega_r is not None:
                bound = min(w_e**2 / delta, delta, delta**3 / w_e**2)
                need(omega_r < MUCH_SMALLER * bound, "omega_r outside the weak-field window")
        else:
            need(w_e > delta, "strong-field expansion needs mu_e E > hbar Delta")
            coefficient = 15.0 / (8.0 * w_e) + 125.0 * delta**2 / (96.0 * w_e**3)
            correction = 2.0 * math.pi * coefficient * sin_e**2
            if omega_r is not None:
                bound = min(w_e, w_e**3 / delta**2)
                need(omega_r < MUCH_SMALLER * bound, "omega_r outside the strong-field window")

    for note in notes:
        warnings.warn(f"{regime}: {note}", ValidityWarning, stacklevel=2)
    return AsymptoticExpansion(regime, leading, correction, variable, not notes, tuple(notes))


# --- zero-phase search -------------------------------------------------------


def _series(phases: Sequence[PhaseRecord], mode: str) -> Dict[Tuple[StateLabel, ...], Tuple[np.ndarray, Tuple[int, ...]]]:
    geometric = np.array([record.geometric_phase for record in phases])
    if mode == "single_state":
        return {(label,): (geometric[:, k], (k,)) for k, label in enumerate(CANONICAL_LABELS)}
    if mode == "relative":
        series = {}
        for i in range(len(CANONICAL_LABELS)):
            for j in range(i + 1, len(CANONICAL_LABELS)):
                values = geometric[:, i] - geometric[:, j]
                if np.max(np.abs(values)) < IDENTICAL_TOL:
                    continue
                series[(CANONICAL_LABELS[i], CANONICAL_LABELS[j])] = (values, (i, j))
        return series
    raise ValueError(f"mode must be 'single_state' or 'relative', got {mode!r}")


def find_zero_phase(sweep: TrackedSweep, phases: Sequence[PhaseRecord], mode: str = "single_state") -> List[ZeroPhase]:
    """
    Rotation rates where a geometric phase (single_state) or a relative phase
    between two states (relative) changes sign.

    Each grid bracket is refined by bisection to a relative width of 1e-12.
    Pairs whose relative phase is zero everywhere are skipped.
    """
    params, fields = sweep.params, sweep.fields
    grid = sweep.grid
    cache: Dict[float, np.ndarray] = {float(omega): record.geometric_phase for omega, record in zip(grid, phases)}

    def phases_at_rate(omega: float) -> np.ndarray:
        if omega not in cache:
            spectrum = spectrum_at(sweep, omega)
            cache[omega] = geometric_phase(params, fields, spectrum, sweep.zero).geometric_phase
        return cache[omega]

    zeros: List[ZeroPhase] = []
    for states, (values, columns) in _series(phases, mode).items():

        def objective(omega: float) -> float:
            row = phases_at_rate(omega)
            return float(row[columns[0]] - (row[columns[1]] if len(columns) == 2 else 0.0))

        for k in range(len(grid) - 1):
            if values[k] == 0.0:
                zeros.append(ZeroPhase(float(grid[k]), states))
            elif values[k] * values[k + 1] < 0.0:
                lo, hi = float(grid[k]), float(grid[k + 1])
                root = bisect(objective, lo, hi, xtol=np.finfo(float).tiny, rtol=ZERO_REFINE_RTOL)
                zeros.append(ZeroPhase(float(root), states))
        if values[-1] == 0.0:
            zeros.append(ZeroPhase(float(grid[-1]), states))

    zeros.sort(key=lambda zero: (zero.omega_r, zero.states))
    logger.info("found %d %s zero(s) of the geometric phase", len(zeros), mode)
    return zeros
