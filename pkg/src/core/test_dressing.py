"""
Tests for the co-rotating (dressed) transformation.
"""

import math
import sys
from pathlib import Path

import numpy as np

# Add src to path
src_path = Path(__file__).parent.parent
sys.path.insert(0, str(src_path))

from core.dressing import (
    antiperiodicity_factor,
    chiral_operator,
    dress,
    dressed_stack,
    rotation_generator,
)
from core.errors import NonCancellation
from core.model import FieldProtocol, MoleculeParams, build_hamiltonian

PARAMS = MoleculeParams.oh_ground_state()
COMBINED = FieldProtocol(b_mag=0.1, theta_m=math.pi / 3, e_mag=2e5, theta_e=math.pi / 8, omega_r=5e9)


def _random_protocols(count: int, seed: int):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        yield FieldProtocol(
            b_mag=rng.uniform(0.01, 1.0),
            theta_m=rng.uniform(0, math.pi),
            e_mag=rng.uniform(1e5, 3e6),
            theta_e=rng.uniform(0, math.pi),
            omega_r=rng.uniform(1e8, 1e11),
        )


def test_dressed_matrix_is_time_independent():
    for fields in _random_protocols(10, seed=11):
        dressed = dress(PARAMS, fields)
        assert dressed.residual < 1e-12
        expected = dressed_stack(PARAMS, fields, [fields.omega_r])[0]
        assert np.max(np.abs(dressed.entries - expected)) < 1e-15 * np.max(np.abs(expected))


def test_dressed_matrix_is_affine_in_rate():
    h0 = build_hamiltonian(PARAMS, COMBINED, 0.0).entries
    stack = dressed_stack(PARAMS, COMBINED, [0.0, 1e9, 4e9])
    assert np.array_equal(stack[0], h0)
    step = stack[2] - stack[1]
    expected = -PARAMS.hbar * 3e9 * rotation_generator()
    assert np.max(np.abs(step - expected)) < 1e-12 * np.max(np.abs(h0))


def test_static_protocol_needs_no_certificate():
    dressed = dress(PARAMS, FieldProtocol(b_mag=0.1, theta_m=0.4))
    assert dressed.residual == 0.0 and dressed.omega_r == 0.0


def test_different_rates_do_not_cancel():
    fields = FieldProtocol(
        b_mag=0.1, theta_m=math.pi / 8, e_mag=2e5, theta_e=math.pi / 8, omega_r=1e9, electric_rotation=2e9
    )
    try:
        dress(PARAMS, fields)
    except NonCancellation as exc:
        print(f"  residual {exc.residual:.3e}")
        assert exc.residual > 1e-6
        return
    raise AssertionError("bichromatic protocol was dressed")


def test_antiperiodicity_is_minus_one():
    assert antiperiodicity_factor(COMBINED) == complex(-1.0, 0.0)
    for omega_r in (1e3, 7.3e9, 2.9e11):
        fields = FieldProtocol(b_mag=0.1, theta_m=math.pi / 8, omega_r=omega_r)
        factor = antiperiodicity_factor(fields)
        w_of_t = np.exp(-1j * rotation_generator().diagonal() * omega_r * (2.0 * math.pi / omega_r))
        assert np.max(np.abs(w_of_t - factor)) < 1e-12
        assert factor == complex(-1.0, 0.0)
    try:
        antiperiodicity_factor(FieldProtocol(b_mag=0.1))
    except ValueError:
        return
    raise AssertionError("W(T) defined for a static field")


def test_chiral_operator_reverses_spectrum():
    c = chiral_operator()
    assert np.allclose(c @ c.T, np.eye(8))
    for fields in _random_protocols(10, seed=12):
        h_d = dress(PARAMS, fields).entries
        scale = np.max(np.abs(h_d))
        assert np.max(np.abs(c @ h_d @ c.T + h_d)) < 1e-14 * scale


if __name__ == "__main__":
    tests = [
        test_dressed_matrix_is_time_independent,
        test_dressed_matrix_is_affine_in_rate,
        test_static_protocol_needs_no_certificate,
        test_different_rates_do_not_cancel,
        test_antiperiodicity_is_minus_one,
        test_chiral_operator_reverses_spectrum,
    ]
    for test in tests:
        print(f"{test.__name__}")
        test()
    print(f"\n{len(tests)} dressing tests passed")
