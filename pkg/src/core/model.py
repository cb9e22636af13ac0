"""
Stark-Zeeman model of the OH ground manifold (X2Pi3/2, J=3/2) in rotating fields.

Basis order is fixed: indices 0-3 are the e-parity states and 4-7 the f-parity
states, each block in the row order of the P/Q/R matrices, i.e. lab projection
m = -3/2, -1/2, +1/2, +3/2. All energies are joules, all rates rad/s.

    H_M = [[P, Q], [Q^dagger, R]],  R = P + hbar*Delta*I4

Fields rotate about the lab z axis:

    B = B (sin(theta_m) cos(w t), sin(theta_m) sin(w t), cos(theta_m))

and the same for E with theta_e.
"""

import logging
import math
import warnings
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Tuple

import numpy as np
from scipy import constants

from core.errors import ValidityWarning

logger = logging.getLogger(__name__)

HBAR = constants.hbar
MU_B = constants.physical_constants["Bohr magneton"][0]
DEBYE = 3.33564e-30  # C*m

OH_DELTA_GHZ = 1.66
OH_DIPOLE_DEBYE = 1.667

# Model accuracy thresholds for the effective Hamiltonian
MIN_VALID_E_FIELD = 1.0e5  # V/m (1 kV/cm)
MIN_VALID_B_FIELD = 1.0e-2  # T (100 G)

BASIS = "hund_a_parity:e[-3/2,-1/2,+1/2,+3/2],f[-3/2,-1/2,+1/2,+3/2]"
DIM = 8

ZEEMAN_DIAGONAL = np.array([-6.0, -2.0, 2.0, 6.0]) / 5.0
ZEEMAN_LADDER = np.array([2.0 * math.sqrt(3.0), 4.0, 2.0 * math.sqrt(3.0)]) / 5.0
STARK_DIAGONAL = np.array([3.0, 1.0, -1.0, -3.0]) / 5.0
STARK_LADDER = -np.array([math.sqrt(3.0), 2.0, math.sqrt(3.0)]) / 5.0


def freeze(array: np.ndarray) -> np.ndarray:
    array = np.array(array)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class MoleculeParams:
    """Constants of the OH ground manifold plus the universal constants used with them."""

    delta: float  # Lambda-doubling splitting, rad/s
    mu_e: float  # electric dipole moment, C*m
    mu_b: float = MU_B  # J/T
    hbar: float = HBAR  # J*s

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if not self.mu_e > 0:
            raise ValueError(f"mu_e must be positive, got {self.mu_e}")
        if not (self.mu_b > 0 and self.hbar > 0):
            raise ValueError("mu_b and hbar must be positive")

    @classmethod
    def oh_ground_state(
        cls,
        delta_ghz: float = OH_DELTA_GHZ,
        delta_is_angular: bool = False,
        mu_e_debye: float = OH_DIPOLE_DEBYE,
        mu_b: Optional[float] = None,
        hbar: Optional[float] = None,
    ) -> "MoleculeParams":
        """
        Build parameters from the usual quoted values.

        Args:
            delta_ghz: Lambda doubling in GHz. Read as delta/2pi unless
                delta_is_angular, in which case value*1e9 is taken as rad/s.
            delta_is_angular: Interpretation switch for delta_ghz
            mu_e_debye: Dipole moment in debye
            mu_b: Bohr magneton override (J/T)
            hbar: Reduced Planck constant override (J*s)
        """
        delta = delta_ghz * 1e9 if delta_is_angular else 2.0 * math.pi * delta_ghz * 1e9
        return cls(
            delta=delta,
            mu_e=mu_e_debye * DEBYE,
            mu_b=MU_B if mu_b is None else mu_b,
            hbar=HBAR if hbar is None else hbar,
        )


@dataclass(frozen=True)
class FieldProtocol:
    """
    Magnitudes, tilts and rotation rate of the magnetic and electric fields.

    electric_rotation is an escape hatch for protocols where E rotates at a
    different rate than B. Those protocols have no time-independent dressed
    matrix and are rejected by dressing.dress().
    """

    b_mag: float = 0.0  # T
    theta_m: float = 0.0  # rad
    e_mag: float = 0.0  # V/m
    theta_e: float = 0.0  # rad
    omega_r: float = 0.0  # rad/s
    electric_rotation: Optional[float] = None  # rad/s

    def __post_init__(self):
        if self.b_mag < 0 or self.e_mag < 0:
            raise ValueError("field magnitudes must be non-negative")
        for name in ("theta_m", "theta_e"):
            angle = getattr(self, name)
            if not 0.0 <= angle <= math.pi:
                raise ValueError(f"{name} must lie in [0, pi], got {angle}")
        if self.omega_r < 0:
            raise ValueError(f"omega_r must be non-negative, got {self.omega_r}")
        if self.electric_rotation is not None and self.electric_rotation < 0:
            raise ValueError("electric_rotation must be non-negative")
        for message in validity_warnings(self):
            warnings.warn(message, ValidityWarning, stacklevel=3)

    @property
    def electric_rate(self) -> float:
        return self.omega_r if self.electric_rotation is None else self.electric_rotation

    @property
    def co_rotating(self) -> bool:
        return self.electric_rotation is None or self.electric_rotation == self.omega_r


@dataclass(frozen=True)
class HamiltonianMatrix:
    entries: np.ndarray  # 8x8 complex, joules
    basis: str = BASIS

    def __post_init__(self):
        if self.entries.shape != (DIM, DIM):
            raise ValueError(f"expected an {DIM}x{DIM} matrix, got {self.entries.shape}")
        object.__setattr__(self, "entries", freeze(self.entries.astype(complex)))


class DerivedFrequencies(NamedTuple):
    omega_l: float  # Larmor frequency (4/5) mu_B B / hbar
    omega_e: float  # electric analogue mu_e E / hbar


class MonochromaticParts(NamedTuple):
    """H_M(t) = h_u + v_s + v_minus exp(-i w t) + v_plus exp(+i w t)."""

    h_u: np.ndarray
    v_s: np.ndarray
    v_minus: np.ndarray
    v_plus: np.ndarray


def validity_warnings(fields: FieldProtocol) -> List[str]:
    """Messages for field strengths below the range where the 8-level model holds."""
    messages = []
    if 0.0 < fields.e_mag < MIN_VALID_E_FIELD:
        messages.append(
            f"electric field {fields.e_mag / 1e5:.3g} kV/cm is below 1 kV/cm; "
            "the effective Hamiltonian is not accurate there"
        )
    if 0.0 < fields.b_mag < MIN_VALID_B_FIELD:
        messages.append(
            f"magnetic field {fields.b_mag * 1e4:.3g} G is below 100 G; "
            "the effective Hamiltonian is not accurate there"
        )
    return messages


def derived_frequencies(params: MoleculeParams, fields: FieldProtocol) -> DerivedFrequencies:
    return DerivedFrequencies(
        omega_l=0.8 * params.mu_b * fields.b_mag / params.hbar,
        omega_e=params.mu_e * fields.e_mag / params.hbar,
    )


def _components(magnitude: float, theta: float, rate: float, t: np.ndarray):
    if magnitude == 0.0:
        zero = np.zeros_like(t)
        return zero, zero, zero
    transverse = magnitude * math.sin(theta)
    return (
        transverse * np.cos(rate * t),
        transverse * np.sin(rate * t),
        np.full_like(t, magnitude * math.cos(theta)),
    )


def field_vectors(fields: FieldProtocol, t: float) -> Tuple[np.ndarray, np.ndarray]:
    """Cartesian (B, E) in tesla and V/m at time t."""
    times = np.array([float(t)])
    b = np.array([c[0] for c in _components(fields.b_mag, fields.theta_m, fields.omega_r, times)])
    e = np.array([c[0] for c in _components(fields.e_mag, fields.theta_e, fields.electric_rate, times)])
    return b, e


def _fill_ladder(target: np.ndarray, row0: int, col0: int, coefficients: np.ndarray, raising: np.ndarray):
    """Write c_k*raising at (row0+k, col0+k+1) and c_k*conj(raising) at (row0+k+1, col0+k)."""
    for k, c in enumerate(coefficients):
        target[..., row0 + k, col0 + k + 1] = c * raising
        target[..., row0 + k + 1, col0 + k] = c * np.conj(raising)


def hamiltonian_series(params: MoleculeParams, fields: FieldProtocol, times) -> np.ndarray:
    """
    H_M at every entry of times, shape (len(times), 8, 8).

    P and Q are filled element by element from the field components; the lower
    left block is Q^dagger and R = P + hbar*Delta.
    """
    t = np.atleast_1d(np.asarray(times, dtype=float))
    b_x, b_y, b_z = _components(fields.b_mag, fields.theta_m, fields.omega_r, t)
    e_x, e_y, e_z = _components(fields.e_mag, fields.theta_e, fields.electric_rate, t)

    half_split = 0.5 * params.hbar * params.delta

    p = np.zeros(t.shape + (4, 4), dtype=complex)
    for k in range(4):
        p[..., k, k] = -half_split + ZEEMAN_DIAGONAL[k] * params.mu_b * b_z
    _fill_ladder(p, 0, 0, ZEEMAN_LADDER, params.mu_b * (b_x + 1j * b_y))

    q = np.zeros(t.shape + (4, 4), dtype=complex)
    for k in range(4):
        q[..., k, k] = STARK_DIAGONAL[k] * params.mu_e * e_z
    _fill_ladder(q, 0, 0, STARK_LADDER, params.mu_e * (e_x + 1j * e_y))

    h = np.zeros(t.shape + (DIM, DIM), dtype=complex)
    h[..., :4, :4] = p
    h[..., :4, 4:] = q
    h[..., 4:, :4] = np.conj(np.swapaxes(q, -1, -2))
    h[..., 4:, 4:] = p + 2.0 * half_split * np.eye(4)
    return h


def build_hamiltonian(params: MoleculeParams, fields: FieldProtocol, t: float) -> HamiltonianMatrix:
    """H_M(t) for the given protocol."""
    return HamiltonianMatrix(hamiltonian_series(params, fields, [t])[0])


def decompose_monochromatic(params: MoleculeParams, fields: FieldProtocol) -> MonochromaticParts:
    """
    Split H_M(t) into its static diagonal part, static coupling and the two
    Fourier components at +/- omega_r.

    v_plus multiplies exp(+i w t) and collects the (B_x + iB_y) and (E_x + iE_y)
    entries; v_minus is its conjugate transpose.
    """
    if not fields.co_rotating:
        raise ValueError("monochromatic decomposition needs B and E rotating at the same rate")

    b_z = fields.b_mag * math.cos(fields.theta_m)
    e_z = fields.e_mag * math.cos(fields.theta_e)
    b_l = fields.b_mag * math.sin(fields.theta_m) if fields.b_mag else 0.0
    e_l = fields.e_mag * math.sin(fields.theta_e) if fields.e_mag else 0.0
    half_split = 0.5 * params.hbar * params.delta

    zeeman = ZEEMAN_DIAGONAL * params.mu_b * b_z
    h_u = np.diag(np.concatenate([-half_split + zeeman, half_split + zeeman])).astype(complex)

    v_s = np.zeros((DIM, DIM), dtype=complex)
    for k in range(4):
        v_s[k, 4 + k] = v_s[4 + k, k] = STARK_DIAGONAL[k] * params.mu_e * e_z

    v_plus = np.zeros((DIM, DIM), dtype=complex)
    for k, c in enumerate(ZEEMAN_LADDER):
        v_plus[k, k + 1] = v_plus[4 + k, 5 + k] = c * params.mu_b * b_l
    for k, c in enumerate(STARK_LADDER):
        # Q[k][k+1] sits in the upper-right block, Q^dagger[k][k+1] in the lower-left
        v_plus[k, 5 + k] = c * params.mu_e * e_l
        v_plus[4 + k, k + 1] = c * params.mu_e * e_l

    return MonochromaticParts(h_u=h_u, v_s=v_s, v_minus=v_plus.conj().T, v_plus=v_plus)
