"""
Dressed-molecule transformation.

psi(t) = W(t) psi'(t) with W = diag(exp(-i w_k t)) and w_k = m_k * omega_r turns
the periodic H_M(t) into

    H' = W^-1 H_M W - D,   D = hbar * diag(w_k)

which is time independent for co-rotating fields. Because every w_k is linear in
omega_r, the dressed matrix is affine in the rotation rate:

    H_d(omega_r) = H_M(0) - hbar * omega_r * J_z,   J_z = diag(m_k)
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from core.errors import NonCancellation
from core.model import DIM, FieldProtocol, MoleculeParams, freeze, build_hamiltonian, hamiltonian_series

logger = logging.getLogger(__name__)

M_VALUES = np.array([-1.5, -0.5, 0.5, 1.5, -1.5, -0.5, 0.5, 1.5])
M_TWICE = np.array([-3, -1, 1, 3, -3, -1, 1, 3])

RESIDUAL_LIMIT = 1e-12
RESIDUAL_SAMPLES = 16


@dataclass(frozen=True)
class DressingFrequencies:
    omega: np.ndarray  # rad/s, one per basis state

    @classmethod
    def for_rate(cls, omega_r: float) -> "DressingFrequencies":
        return cls(freeze(M_VALUES * omega_r))


@dataclass(frozen=True)
class DressedMatrix:
    entries: np.ndarray  # 8x8 complex, joules
    residual: float
    omega_r: float

    def __post_init__(self):
        object.__setattr__(self, "entries", freeze(self.entries))


def rotation_generator() -> np.ndarray:
    """J_z in module basis order."""
    return np.diag(M_VALUES).astype(complex)


def dressed_stack(params: MoleculeParams, fields: FieldProtocol, omegas) -> np.ndarray:
    """H_d for every rotation rate in omegas, shape (len(omegas), 8, 8)."""
    static = build_hamiltonian(params, fields, 0.0).entries
    rates = np.atleast_1d(np.asarray(omegas, dtype=float))
    return static[None, :, :] - params.hbar * rates[:, None, None] * rotation_generator()[None, :, :]


def dress(params: MoleculeParams, fields: FieldProtocol, samples: int = RESIDUAL_SAMPLES) -> DressedMatrix:
    """
    Dressed matrix of the protocol, certified time independent.

    The phases exp(i (w_i - w_j) t) cancel the field rotation entry by entry, so
    H_d is H_M(0) - D. The certificate re-applies the transformation at samples
    times over one period and compares.

    Raises:
        NonCancellation: residual >= 1e-12
    """
    omega_r = fields.omega_r
    frequencies = DressingFrequencies.for_rate(omega_r)
    frame_energy = params.hbar * np.diag(frequencies.omega)
    h_zero = build_hamiltonian(params, fields, 0.0).entries
    h_d = h_zero - frame_energy

    if omega_r == 0.0:
        if not fields.co_rotating:
            raise NonCancellation(math.inf, RESIDUAL_LIMIT)
        return DressedMatrix(h_d, 0.0, 0.0)

    period = 2.0 * math.pi / omega_r
    times = np.arange(samples) * (period / samples)
    series = hamiltonian_series(params, fields, times)
    detuning = frequencies.omega[:, None] - frequencies.omega[None, :]
    phases = np.exp(1j * detuning[None, :, :] * times[:, None, None])
    transformed = series * phases - frame_energy[None, :, :]

    residual = float(np.max(np.abs(transformed - h_d[None, :, :])) / np.max(np.abs(h_d)))
    logger.debug("dressing residual %.3e at omega_r=%.6e", residual, omega_r)
    if residual >= RESIDUAL_LIMIT:
        raise NonCancellation(residual, RESIDUAL_LIMIT)
    return DressedMatrix(h_d, residual, omega_r)


def antiperiodicity_factor(fields: FieldProtocol) -> complex:
    """
    W(T) collapsed to its common scalar, rounded to 12 decimals. Every
    w_k T = 2 pi m_k is an odd multiple of pi, so the value is -1.
    """
    if not fields.omega_r > 0:
        raise ValueError("antiperiodicity needs omega_r > 0")
    period = 2.0 * math.pi / fields.omega_r
    diagonal = np.exp(-1j * DressingFrequencies.for_rate(fields.omega_r).omega * period)
    if np.max(np.abs(diagonal - diagonal[0])) > 1e-9:
        raise ValueError("W(T) is not a multiple of the identity")
    value = complex(np.mean(diagonal))
    return complex(round(value.real, 12), round(value.imag, 12))


def chiral_operator() -> np.ndarray:
    """
    Real signed permutation C with C H_d C^T = -H_d for every co-rotating protocol.

    C sends (e, m) to (f, -m) and (f, m) to (e, -m) with sign (-1)^k on block
    index k. Spectra of H_d are therefore symmetric about zero.
    """
    c = np.zeros((DIM, DIM))
    for k in range(4):
        sign = (-1.0) ** k
        c[7 - k, k] = sign
        c[3 - k, 4 + k] = sign
    return c
