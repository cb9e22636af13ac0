"""
Independent check of the dressed-matrix results: propagate the lab-frame
Schrodinger equation over one rotation period and compare with

    U(T) = W(T) exp(-i H_d T / hbar) = -exp(-i H_d T / hbar)

Each substep is the exponential of a Hermitian generator, computed through
eigh8, so every factor is unitary to rounding.
"""

import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from core.dressing import antiperiodicity_factor, dress
from core.errors import StepCountTooSmall
from core.model import FieldProtocol, MoleculeParams, freeze, build_hamiltonian, hamiltonian_series
from core.spectrum import eigh8

logger = logging.getLogger(__name__)

DEFAULT_STEPS = 4096
MIN_STEPS = 256
MAX_SUBSTEP_PHASE = 0.1  # rad, bound on delta * ||H|| / hbar
SCHEMES = ("midpoint", "magnus4")

GAUSS_OFFSET = math.sqrt(3.0) / 6.0


@dataclass(frozen=True)
class PropagatorResult:
    U: np.ndarray
    step_count: int
    unitarity_defect: float
    period: float
    hbar: float
    scheme: str = "midpoint"

    def __post_init__(self):
        object.__setattr__(self, "U", freeze(self.U))


def _exponentials(generators: np.ndarray, duration: float, hbar: float) -> np.ndarray:
    """exp(-i K duration / hbar) for a stack of Hermitian K."""
    hermitian = 0.5 * (generators + np.conj(np.swapaxes(generators, -1, -2)))
    values, vectors = eigh8(hermitian)
    phases = np.exp(-1j * values * (duration / hbar))
    return np.einsum("nij,nj,nkj->nik", vectors, phases, np.conj(vectors))


def _ordered_product(factors: np.ndarray) -> np.ndarray:
    """factors[-1] @ ... @ factors[0], reduced pairwise."""
    while len(factors) > 1:
        tail = factors[-1:] if len(factors) % 2 else None
        even = factors[: len(factors) - (len(factors) % 2)]
        paired = np.matmul(even[1::2], even[0::2])
        factors = paired if tail is None else np.concatenate([paired, tail])
    return factors[0]


def _step_factors(params: MoleculeParams, fields: FieldProtocol, period: float, steps: int, scheme: str) -> np.ndarray:
    delta = period / steps
    starts = np.arange(steps) * delta
    if scheme == "midpoint":
        return _exponentials(hamiltonian_series(params, fields, starts + 0.5 * delta), delta, params.hbar)

    # two-point Gauss-Legendre Magnus step, written for K = i hbar Omega / delta
    h1 = hamiltonian_series(params, fields, starts + (0.5 - GAUSS_OFFSET) * delta)
    h2 = hamiltonian_series(params, fields, starts + (0.5 + GAUSS_OFFSET) * delta)
    commutator = np.matmul(h2, h1) - np.matmul(h1, h2)
    generator = 0.5 * (h1 + h2) - 1j * (math.sqrt(3.0) * delta / (12.0 * params.hbar)) * commutator
    return _exponentials(generator, delta, params.hbar)


def required_steps(params: MoleculeParams, fields: FieldProtocol, steps: int = DEFAULT_STEPS) -> int:
    """steps, raised until each substep turns by less than 0.1 rad under ||H_M||."""
    norm = float(np.max(np.abs(eigh8(build_hamiltonian(params, fields, 0.0))[0])))
    period = 2.0 * math.pi / fields.omega_r
    needed = math.ceil(period * norm / (MAX_SUBSTEP_PHASE * params.hbar))
    return max(steps, needed)


def propagate_period(
    params: MoleculeParams,
    fields: FieldProtocol,
    steps: int = DEFAULT_STEPS,
    scheme: str = "midpoint",
    auto_scale: bool = True,
) -> PropagatorResult:
    """
    One-period evolution operator of the lab-frame Hamiltonian.

    Args:
        params: Molecule constants
        fields: Protocol with omega_r > 0
        steps: Substep count (at least 256)
        scheme: "midpoint" (second order) or "magnus4" (fourth order)
        auto_scale: Raise steps so that each substep turns by less than 0.1 rad

    Raises:
        StepCountTooSmall: steps < 256
    """
    if not fields.omega_r > 0:
        raise ValueError("propagation needs omega_r > 0")
    if steps < MIN_STEPS:
        raise StepCountTooSmall(f"{steps} substeps requested, need at least {MIN_STEPS}")
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}, got {scheme!r}")

    if auto_scale:
        scaled = required_steps(params, fields, steps)
        if scaled != steps:
            logger.info("raising substeps from %d to %d for omega_r=%.6e", steps, scaled, fields.omega_r)
            steps = scaled

    period = 2.0 * math.pi / fields.omega_r
    u = _ordered_product(_step_factors(params, fields, period, steps, scheme))
    defect = float(np.max(np.abs(np.conj(u.T) @ u - np.eye(len(u)))))
    return PropagatorResult(u, steps, defect, period, params.hbar, scheme)


def dressed_propagator(params: MoleculeParams, fields: FieldProtocol) -> np.ndarray:
    """W(T) exp(-i H_d T / hbar) with W(T) = -1."""
    h_d = dress(params, fields)
    period = 2.0 * math.pi / fields.omega_r
    return antiperiodicity_factor(fields) * _exponentials(h_d.entries[None], period, params.hbar)[0]


def identity_defect(
    params: MoleculeParams,
    fields: FieldProtocol,
    steps: int = DEFAULT_STEPS,
    scheme: str = "magnus4",
) -> float:
    """max |U(T) + exp(-i H_d T / hbar)| over entries."""
    result = propagate_period(params, fields, steps, scheme)
    return float(np.max(np.abs(result.U - dressed_propagator(params, fields))))


def quasi_energies(result: PropagatorResult, omega_r: float) -> np.ndarray:
    """Quasi-energies in [0, hbar omega_r), ascending, from the eigenphases of U(T)."""
    hbar = result.hbar
    phases = np.angle(np.linalg.eigvals(result.U))
    energies = -hbar * (phases - math.pi) / result.period
    return np.sort(np.mod(energies, hbar * omega_r))


def dressed_quasi_energies(params: MoleculeParams, fields: FieldProtocol) -> np.ndarray:
    """Dressed eigenvalues reduced to the zone [0, hbar omega_r), ascending."""
    values, _ = eigh8(dress(params, fields))
    return np.sort(np.mod(values, params.hbar * fields.omega_r))


def quasi_energy_mismatch(params: MoleculeParams, fields: FieldProtocol, result: PropagatorResult) -> Tuple[float, np.ndarray]:
    """
    Largest phase distance between the eigenvalues of U(T) and the set
    -exp(-i E~_j T / hbar) predicted by the dressed spectrum.

    Returns:
        (max mismatch in rad, eigenphases of U matched to the dressed order)
    """
    values, _ = eigh8(dress(params, fields))
    predicted = -np.exp(-1j * values * result.period / params.hbar)
    observed = np.linalg.eigvals(result.U)
    distance = np.abs(np.angle(observed[:, None] / predicted[None, :]))
    rows, cols = linear_sum_assignment(distance)
    matched = np.empty(len(values))
    matched[cols] = np.angle(observed[rows])
    return float(np.max(distance[rows, cols])), matched


def convergence_order(
    params: MoleculeParams,
    fields: FieldProtocol,
    steps: int = 1024,
    scheme: str = "midpoint",
) -> float:
    """Observed order from U at steps, 2 steps and 4 steps (self-convergence)."""
    coarse, medium, fine = (
        propagate_period(params, fields, count, scheme, auto_scale=False).U for count in (steps, 2 * steps, 4 * steps)
    )
    first = float(np.max(np.abs(coarse - medium)))
    second = float(np.max(np.abs(medium - fine)))
    order = math.log2(first / second)
    logger.debug("self-convergence %.3e -> %.3e, order %.3f", first, second, order)
    return order
