"""
Time-dependent (Floquet) perturbation theory for the rotating-field phase.

The co-rotating Hamiltonian splits as H_M(t) = H_u + V_s + V_- e^{-iwt} + V_+ e^{+iwt}.
H_u is diagonal in the parity basis, so its states are the bare states. First
order vanishes; the lowest correction to the Berry phase is second order in V.
"""

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np
import pandas as pd

from core.dressing import M_TWICE
from core.errors import DegenerateBareSpectrum, ValidityWarning
from core.model import DIM, FieldProtocol, MoleculeParams, decompose_monochromatic, derived_frequencies
from core.phase import adiabatic_phases
from core.spectrum import CANONICAL_LABELS, StateLabel

logger = logging.getLogger(__name__)

SMALL_ANGLE = 0.3  # rad; tan^2 departs from theta^2 by more than 3% beyond this
BARE_DEGENERACY_TOL = 1e-12  # relative to the largest bare energy
ANGLE_KEYS = ("theta_m", "theta_e", "both")


@dataclass(frozen=True)
class PerturbationResult:
    order2_phase: float  # rad
    order3_phase: float  # rad
    validity_flags: Dict[str, bool]

    @property
    def total(self) -> float:
        return self.order2_phase + self.order3_phase


def pt2_formula(omega_l: float, omega_e: float, delta: float, theta_m: float, theta_e: float) -> float:
    """2 pi [ (3/4) tan^2(th_m) + 3 (we sin th_e)^2 / (5 Delta + wL cos th_m)^2 ]"""
    magnetic = 0.75 * math.tan(theta_m) ** 2
    electric = 3.0 * (omega_e * math.sin(theta_e)) ** 2 / (5.0 * delta + omega_l * math.cos(theta_m)) ** 2
    return 2.0 * math.pi * (magnetic + electric)


def pt3_formula(
    omega_l: float,
    omega_e: float,
    delta: float,
    theta_m: float,
    theta_e: float,
    omega_l_squared: bool = False,
) -> float:
    """
    Third-order correction as printed:

        2 pi sin(th_m) sin(2 th_e) (2 we^2 / 5 Delta wL)
            * [(5 Delta)^2 + 2 (5 Delta) wL cos th_m + (3/2) wL cos^2 th_m] / (5 Delta + wL cos th_m)^3

    omega_l_squared replaces the (3/2) wL term by (3/2) wL^2.
    """
    five_delta = 5.0 * delta
    cos_m = math.cos(theta_m)
    last = 1.5 * (omega_l**2 if omega_l_squared else omega_l) * cos_m**2
    numerator = five_delta**2 + 2.0 * five_delta * omega_l * cos_m + last
    prefactor = 2.0 * omega_e**2 / (five_delta * omega_l)
    return 2.0 * math.pi * math.sin(theta_m) * math.sin(2.0 * theta_e) * prefactor * numerator / (five_delta + omega_l * cos_m) ** 3


def _check_fields(fields: FieldProtocol) -> Dict[str, bool]:
    if fields.b_mag == 0.0:
        raise DegenerateBareSpectrum("perturbation theory diverges at zero magnetic field")
    flags = {
        "small_theta_m": fields.theta_m <= SMALL_ANGLE,
        "small_theta_e": fields.theta_e <= SMALL_ANGLE or fields.e_mag == 0.0,
        "non_degenerate": True,
    }
    for name in ("theta_m", "theta_e"):
        if not flags[f"small_{name}"]:
            warnings.warn(f"{name}={getattr(fields, name):.3f} rad exceeds the small-angle range {SMALL_ANGLE}", ValidityWarning, stacklevel=3)
    return flags


def pt2_phase(params: MoleculeParams, fields: FieldProtocol) -> float:
    """
    Second-order phase of the most energetic state above its zero-angle value.

    Raises:
        DegenerateBareSpectrum: B = 0
    """
    _check_fields(fields)
    freq = derived_frequencies(params, fields)
    return pt2_formula(freq.omega_l, freq.omega_e, params.delta, fields.theta_m, fields.theta_e)


def pt3_phase(params: MoleculeParams, fields: FieldProtocol, omega_l_squared: bool = False) -> float:
    _check_fields(fields)
    freq = derived_frequencies(params, fields)
    return pt3_formula(freq.omega_l, freq.omega_e, params.delta, fields.theta_m, fields.theta_e, omega_l_squared)


def perturbation_result(params: MoleculeParams, fields: FieldProtocol, omega_l_squared: bool = False) -> PerturbationResult:
    flags = _check_fields(fields)
    freq = derived_frequencies(params, fields)
    args = (freq.omega_l, freq.omega_e, params.delta, fields.theta_m, fields.theta_e)
    try:
        _bare_energies(params, fields)
    except DegenerateBareSpectrum:
        flags["non_degenerate"] = False
    return PerturbationResult(pt2_formula(*args), pt3_formula(*args, omega_l_squared=omega_l_squared), flags)


# --- generic second-order sum ------------------------------------------------


def _bare_energies(params: MoleculeParams, fields: FieldProtocol) -> np.ndarray:
    energies = np.real(np.diag(decompose_monochromatic(params, fields).h_u))
    tol = BARE_DEGENERACY_TOL * float(np.max(np.abs(energies)))
    gaps = np.abs(energies[:, None] - energies[None, :]) + np.eye(DIM) * np.inf
    if np.min(gaps) <= tol:
        raise DegenerateBareSpectrum("bare H_u spectrum is degenerate")
    return energies


def bare_label(index: int) -> StateLabel:
    """Label of bare basis state `index` (parity block and lab projection)."""
    return StateLabel(int(M_TWICE[index]), "e" if index < 4 else "f")


def most_energetic_state(params: MoleculeParams, fields: FieldProtocol) -> int:
    """Basis index of the highest bare level."""
    return int(np.argmax(np.real(np.diag(decompose_monochromatic(params, fields).h_u))))


def first_order_correction(params: MoleculeParams, fields: FieldProtocol, state: Optional[int] = None) -> float:
    """<n|V_s|n>; the oscillating parts average out at first order. Zero for every bare state."""
    if state is None:
        state = most_energetic_state(params, fields)
    return float(np.real(decompose_monochromatic(params, fields).v_s[state, state]))


def floquet_second_order_shift(
    params: MoleculeParams,
    fields: FieldProtocol,
    state: Optional[int] = None,
    omega_r: Optional[float] = None,
) -> float:
    """
    Second-order quasi-energy shift of a bare state (joules):

        sum_m |V_s,mn|^2 / (E_n - E_m) + |V_-,mn|^2 / (E_n - E_m + hbar w) + |V_+,mn|^2 / (E_n - E_m - hbar w)

    Raises:
        DegenerateBareSpectrum: two bare levels coincide
        ValueError: a sideband is resonant with another level
    """
    parts = decompose_monochromatic(params, fields)
    energies = _bare_energies(params, fields)
    if state is None:
        state = int(np.argmax(energies))
    if omega_r is None:
        omega_r = fields.omega_r
    quantum = params.hbar * omega_r

    gaps = energies[state] - energies
    others = np.arange(DIM) != state
    shift = 0.0
    for coupling, sideband in ((parts.v_s, 0.0), (parts.v_minus, quantum), (parts.v_plus, -quantum)):
        weights = np.abs(coupling[:, state]) ** 2
        active = others & (weights > 0.0)
        denominators = gaps[active] + sideband
        if np.any(denominators == 0.0):
            raise ValueError(f"sideband resonance at omega_r={omega_r:.6e} rad/s")
        shift += float(np.sum(weights[active] / denominators))
    return shift


def floquet_second_order_phase(
    params: MoleculeParams,
    fields: FieldProtocol,
    state: Optional[int] = None,
    omega_r: Optional[float] = None,
) -> float:
    """
    Geometric phase implied by the second-order shift, above the zero-angle value.

    With omega_r=None the adiabatic limit 2 pi sum (|V_+,mn|^2 - |V_-,mn|^2) / (E_n - E_m)^2
    is returned, otherwise (2 pi / w) (shift(w) - shift(0)) / hbar.
    """
    if omega_r is not None:
        moving = floquet_second_order_shift(params, fields, state, omega_r)
        still = floquet_second_order_shift(params, fields, state, 0.0)
        return 2.0 * math.pi * (moving - still) / (params.hbar * omega_r)

    parts = decompose_monochromatic(params, fields)
    energies = _bare_energies(params, fields)
    if state is None:
        state = int(np.argmax(energies))
    others = np.arange(DIM) != state
    gaps = (energies[state] - energies)[others]
    net = np.abs(parts.v_plus[others, state]) ** 2 - np.abs(parts.v_minus[others, state]) ** 2
    return 2.0 * math.pi * float(np.sum(net / gaps**2))


# --- comparison with exact phases ---------------------------------------------


def _with_angle(fields: FieldProtocol, vary: str, theta: float) -> FieldProtocol:
    values = {}
    if vary in ("theta_m", "both"):
        values["theta_m"] = theta
    if vary in ("theta_e", "both"):
        values["theta_e"] = theta
    return FieldProtocol(
        b_mag=fields.b_mag,
        theta_m=values.get("theta_m", fields.theta_m),
        e_mag=fields.e_mag,
        theta_e=values.get("theta_e", fields.theta_e),
        omega_r=fields.omega_r,
    )


def pt_vs_exact_report(
    params: MoleculeParams,
    fields: FieldProtocol,
    angle_grid: Sequence[float],
    vary: str = "theta_m",
    omega_l_squared: bool = False,
) -> pd.DataFrame:
    """
    Tabulate the perturbative phase against the exact adiabatic phase of the
    most energetic state, both measured from the zero-angle protocol.

    Args:
        params: Molecule constants
        fields: Base protocol; the angle(s) named by `vary` are overwritten
        angle_grid: Tilt angles (rad)
        vary: "theta_m", "theta_e" or "both"
        omega_l_squared: Variant switch passed to pt3_formula

    Returns:
        DataFrame with columns theta, pt2, pt3, exact, residual
    """
    if vary not in ANGLE_KEYS:
        raise ValueError(f"vary must be one of {ANGLE_KEYS}, got {vary!r}")

    reference_fields = _with_angle(fields, vary, 0.0)
    label = bare_label(most_energetic_state(params, reference_fields))
    column = CANONICAL_LABELS.index(label)
    reference = adiabatic_phases(params, reference_fields)[column]
    freq = derived_frequencies(params, fields)

    rows = []
    for theta in angle_grid:
        tilted = _with_angle(fields, vary, float(theta))
        pt2 = pt2_formula(freq.omega_l, freq.omega_e, params.delta, tilted.theta_m, tilted.theta_e)
        pt3 = pt3_formula(freq.omega_l, freq.omega_e, params.delta, tilted.theta_m, tilted.theta_e, omega_l_squared)
        exact = adiabatic_phases(params, tilted)[column] - reference
        rows.append({"theta": float(theta), "pt2": pt2, "pt3": pt3, "exact": exact, "residual": abs(pt2 + pt3 - exact)})

    table = pd.DataFrame(rows, columns=["theta", "pt2", "pt3", "exact", "residual"])
    logger.debug("pt-vs-exact over %d angles for state %s", len(table), label)
    return table


def fit_residual_exponent(table: pd.DataFrame) -> float:
    """Log-log slope of residual against theta, ignoring zero entries."""
    usable = table[(table["theta"] > 0) & (table["residual"] > 0)]
    if len(usable) < 2:
        raise ValueError("need at least two nonzero residuals to fit an exponent")
    slope, _ = np.polyfit(np.log(usable["theta"]), np.log(usable["residual"]), 1)
    return float(slope)
