"""
Tests for geometric phases, closed forms, expansions and zero-phase search.
"""

import math
import sys
import warnings
from pathlib import Path

import numpy as np

# Add src to path
src_path = Path(__file__).parent.parent
sys.path.insert(0, str(src_path))

from core.errors import NoCriticalRate, NotPureMagnetic, RegimeUndefined, ValidityWarning, LabelMismatch
from core.model import FieldProtocol, MoleculeParams, derived_frequencies
from core.phase import (
    TOP_STATE,
    adiabatic_phases,
    asymptotic_phases,
    berry_standard_offset,
    critical_rotation_magnetic,
    extrapolate_adiabatic,
    fast_rotation_limit,
    find_zero_phase,
    geometric_phase,
    magnetic_phase_closed_form,
    nonadiabatic_slope,
    phases_at,
    sweep_phases,
)
from core.spectrum import CANONICAL_LABELS, StateLabel, spectrum_at, spectrum_of, static_spectrum, track_sweep

PARAMS = MoleculeParams.oh_ground_state()
FIG1B = FieldProtocol(b_mag=0.1, theta_m=math.pi / 8)
FIG2A = FieldProtocol(e_mag=2e5, theta_e=0.0)
FIG2B = FieldProtocol(e_mag=2e5, theta_e=math.pi / 8)
FIG2C = FieldProtocol(e_mag=2e5, theta_e=math.pi / 4)
FIG3C = FieldProtocol(b_mag=0.1, theta_m=math.pi / 3, e_mag=2e5, theta_e=math.pi / 8)
FIG3D = FieldProtocol(b_mag=1.0, theta_m=math.pi / 3, e_mag=2e5, theta_e=math.pi / 8)

M = np.array([label.m for label in CANONICAL_LABELS])


def _fast_rate(fields: FieldProtocol) -> float:
    freq = derived_frequencies(PARAMS, fields)
    return 1e3 * max(freq.omega_l, freq.omega_e, PARAMS.delta)


def test_closed_form_examples():
    omega_l = derived_frequencies(PARAMS, FIG1B).omega_l
    side = FieldProtocol(b_mag=0.1, theta_m=math.pi / 2)
    assert np.allclose(magnetic_phase_closed_form(PARAMS, side, omega_l), 2.0 * math.pi * (math.sqrt(2.0) - 1.0), rtol=1e-14)

    aligned = FieldProtocol(b_mag=0.1)
    assert np.allclose(magnetic_phase_closed_form(PARAMS, aligned, 0.3 * omega_l), -2.0 * math.pi, rtol=1e-14)

    critical = critical_rotation_magnetic(PARAMS, FIG1B)
    assert np.allclose(magnetic_phase_closed_form(PARAMS, FIG1B, critical), 0.0, atol=1e-14)


def test_critical_rotation():
    critical = critical_rotation_magnetic(PARAMS, FIG1B)
    print(f"  omega_rc = {critical:.6e} rad/s ({critical / (2 * math.pi) / 1e9:.4f} GHz as a frequency)")
    assert abs(critical / 1.300e10 - 1.0) < 1e-3
    doubled = critical_rotation_magnetic(PARAMS, FieldProtocol(b_mag=0.2, theta_m=math.pi / 8))
    assert math.isclose(doubled, 2.0 * critical, rel_tol=1e-14)

    for fields, error in (
        (FieldProtocol(b_mag=0.1, theta_m=math.pi / 2), NoCriticalRate),
        (FieldProtocol(b_mag=0.1, theta_m=2.0), NoCriticalRate),
        (FieldProtocol(b_mag=0.1, e_mag=2e5), NotPureMagnetic),
    ):
        try:
            critical_rotation_magnetic(PARAMS, fields)
        except error:
            continue
        raise AssertionError(f"{error.__name__} not raised for {fields}")


def test_numeric_phases_match_closed_form():
    grid = np.linspace(0.0, 4e10, 81)
    sweep = track_sweep(PARAMS, FIG1B, grid)
    worst = 0.0
    for record in sweep_phases(sweep)[1:]:
        expected = M * magnetic_phase_closed_form(PARAMS, FIG1B, record.omega_r)[0]
        worst = max(worst, float(np.max(np.abs(record.geometric_phase - expected))))
        # parity independence
        assert np.max(np.abs(record.geometric_phase[:4] - record.geometric_phase[4:])) < 1e-10
    print(f"  worst closed-form deviation {worst:.2e} rad")
    assert worst < 1e-10


def test_geometric_phase_label_checks():
    zero = static_spectrum(PARAMS, FIG1B)
    unlabeled = spectrum_of(PARAMS, FIG1B, 1e9)
    try:
        geometric_phase(PARAMS, FIG1B, unlabeled, zero)
    except LabelMismatch:
        return
    raise AssertionError("unlabeled spectrum accepted")


def test_zero_rate_uses_limit():
    records = phases_at(PARAMS, FIG1B, [0.0, 1e3])
    berry = -2.0 * math.pi * M * math.cos(math.pi / 8)
    for record in records:
        assert np.max(np.abs(record.geometric_phase - berry)) < 1e-6
    assert np.all(np.isnan(records[0].total_phase))


def test_common_critical_zero():
    critical = critical_rotation_magnetic(PARAMS, FIG1B)
    grid = np.linspace(0.0, 2.5 * critical, 97)
    sweep = track_sweep(PARAMS, FIG1B, grid)
    phases = sweep_phases(sweep)

    zeros = find_zero_phase(sweep, phases, "single_state")
    assert len(zeros) == 8
    assert sorted(zero.states[0] for zero in zeros) == sorted(CANONICAL_LABELS)
    for zero in zeros:
        assert abs(zero.omega_r / critical - 1.0) < 1e-9

    relative = find_zero_phase(sweep, phases, "relative")
    # same-M pairs across parity are identically zero and skipped
    assert len(relative) == 24
    for zero in relative:
        assert zero.states[0].m != zero.states[1].m
        assert abs(zero.omega_r / critical - 1.0) < 1e-9


def test_electric_zeros_are_refined():
    grid = np.linspace(0.0, 4e10, 201)
    sweep = track_sweep(PARAMS, FIG2C, grid)
    zeros = find_zero_phase(sweep, sweep_phases(sweep), "single_state")
    rates = sorted({round(zero.omega_r, -3) for zero in zeros})
    print(f"  {len(zeros)} zeros at {len(rates)} distinct rates")
    assert [zero.omega_r for zero in zeros] == sorted(zero.omega_r for zero in zeros)
    for zero in zeros:
        record = geometric_phase(PARAMS, FIG2C, spectrum_at(sweep, zero.omega_r), sweep.zero)
        assert abs(record.of(zero.states[0])) < 1e-9


def test_find_zero_phase_mode_check():
    sweep = track_sweep(PARAMS, FIG1B, [0.0, 1e9])
    try:
        find_zero_phase(sweep, sweep_phases(sweep), "pairs")
    except ValueError:
        return
    raise AssertionError("unknown mode accepted")


def test_magnetic_berry_limit():
    for theta in (math.pi / 8, math.pi / 4, 3 * math.pi / 8):
        fields = FieldProtocol(b_mag=0.1, theta_m=theta)
        intercept = extrapolate_adiabatic(PARAMS, fields)
        per_m = intercept / M
        assert np.max(np.abs(per_m + 2.0 * math.pi * math.cos(theta))) < 1e-3
        exact = adiabatic_phases(PARAMS, fields)
        assert np.max(np.abs(exact + 2.0 * math.pi * M * math.cos(theta))) < 1e-12


def test_electric_berry_limit():
    intercept = extrapolate_adiabatic(PARAMS, FIG2B)[TOP_STATE.index]
    expected = 2.0 * math.pi * 1.5 * math.cos(math.pi / 8)
    print(f"  (3/2,f) Berry phase {intercept:.6f} vs {expected:.6f}")
    assert abs(intercept - expected) < 1e-2
    assert abs(adiabatic_phases(PARAMS, FIG2B)[TOP_STATE.index] - expected) < 1e-10


def test_magnetic_slope():
    omega_l = derived_frequencies(PARAMS, FIG1B).omega_l
    omega_r = 1e-3 * omega_l
    slope = nonadiabatic_slope(PARAMS, FIG1B, omega_r) / M
    expansion = asymptotic_phases(PARAMS, FIG1B, "magnetic_adiabatic", omega_r)
    assert expansion.valid
    assert abs(expansion.leading + 2.0 * math.pi * math.cos(math.pi / 8)) < 1e-12
    assert abs(expansion.leading - (-5.8049)) < 1e-4
    assert np.max(np.abs(slope / expansion.correction - 1.0)) < 0.01


def test_weak_electric_slope():
    fields = FieldProtocol(e_mag=1e5, theta_e=math.pi / 8)
    freq = derived_frequencies(PARAMS, fields)
    omega_r = 1e-4 * freq.omega_e**2 / PARAMS.delta
    expansion = asymptotic_phases(PARAMS, fields, "electric_weak", omega_r)
    assert expansion.valid
    assert math.isclose(expansion.leading, 2.0 * math.pi * 1.5 * math.cos(math.pi / 8), rel_tol=1e-14)
    slope = nonadiabatic_slope(PARAMS, fields, omega_r)[TOP_STATE.index]
    print(f"  weak slope exact {slope:.6e} vs expansion {expansion.correction:.6e}")
    assert abs(slope / expansion.correction - 1.0) < 0.05


def test_strong_electric_slope():
    fields = FieldProtocol(e_mag=2e6, theta_e=math.pi / 8)
    freq = derived_frequencies(PARAMS, fields)
    omega_r = 1e-4 * freq.omega_e
    expansion = asymptotic_phases(PARAMS, fields, "electric_strong", omega_r)
    assert expansion.valid
    slope = nonadiabatic_slope(PARAMS, fields, omega_r)[TOP_STATE.index]
    print(f"  strong slope exact {slope:.6e} vs expansion {expansion.correction:.6e}")
    assert abs(slope / expansion.correction - 1.0) < 0.05


def test_asymptotic_validity_flags():
    try:
        asymptotic_phases(PARAMS, FIG1B, "electric_medium")
    except RegimeUndefined:
        pass
    else:
        raise AssertionError("unknown regime accepted")

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        expansion = asymptotic_phases(PARAMS, FieldProtocol(e_mag=1e5, theta_e=math.pi / 8), "electric_strong")
    assert not expansion.valid
    assert any(issubclass(w.category, ValidityWarning) for w in caught)

    fast = asymptotic_phases(PARAMS, FIG1B, "magnetic_fast", _fast_rate(FIG1B))
    assert fast.valid and fast.leading == 2.0 * math.pi
    omega = _fast_rate(FIG1B)
    assert math.isclose(fast.evaluate(omega), fast_rotation_limit(PARAMS, FIG1B, omega)[-1] / 1.5, rel_tol=1e-12)


def _fast_phases(fields: FieldProtocol) -> np.ndarray:
    grid = np.concatenate([[0.0], np.geomspace(1e7, _fast_rate(fields), 300)])
    return phases_at(PARAMS, fields, grid)[-1].geometric_phase


def test_fast_rotation_limit_per_state():
    for fields in (FIG1B, FIG2A):
        geometric = _fast_phases(fields)
        print(f"  max |dgamma - 2 pi M| = {np.max(np.abs(geometric - 2.0 * math.pi * M)):.4f}")
        assert np.max(np.abs(geometric - 2.0 * math.pi * M)) < 0.02

    omega = _fast_rate(FIG1B)
    closed = M * magnetic_phase_closed_form(PARAMS, FIG1B, omega)[0]
    assert np.max(np.abs(fast_rotation_limit(PARAMS, FIG1B, omega) - closed)) < 1e-5


def test_fast_rotation_limit_as_multiset():
    target = np.sort(2.0 * math.pi * M)
    for fields in (FIG2B, FIG3C):
        geometric = np.sort(_fast_phases(fields))
        assert np.max(np.abs(geometric - target)) < 0.02


def test_reflection_symmetry():
    grid = np.linspace(0.0, 3e10, 61)
    for fields in (FIG2A, FIG2B, FIG2C, FIG3C, FIG3D):
        sweep = track_sweep(PARAMS, fields, grid)
        for record in sweep_phases(sweep)[1:]:
            phases = np.sort(record.geometric_phase)
            assert np.max(np.abs(phases + phases[::-1])) < 1e-8


def test_standard_offset_keeps_relative_phases():
    geometric = adiabatic_phases(PARAMS, FIG3C)
    shifted = berry_standard_offset(geometric)
    before = geometric[:, None] - geometric[None, :]
    after = shifted[:, None] - shifted[None, :]
    turns = (after - before) / (2.0 * math.pi)
    assert np.allclose(turns, np.round(turns), atol=1e-12)
    top = StateLabel(3, "f").index
    assert math.isclose(shifted[top] - geometric[top], 3.0 * math.pi, rel_tol=1e-14)


if __name__ == "__main__":
    tests = [
        test_closed_form_examples,
        test_critical_rotation,
        test_numeric_phases_match_closed_form,
        test_geometric_phase_label_checks,
        test_zero_rate_uses_limit,
        test_common_critical_zero,
        test_electric_zeros_are_refined,
        test_find_zero_phase_mode_check,
        test_magnetic_berry_limit,
        test_electric_berry_limit,
        test_magnetic_slope,
        test_weak_electric_slope,
        test_strong_electric_slope,
        test_asymptotic_validity_flags,
        test_fast_rotation_limit_per_state,
        test_fast_rotation_limit_as_multiset,
        test_reflection_symmetry,
        test_standard_offset_keeps_relative_phases,
    ]
    for test in tests:
        print(f"{test.__name__}")
        test()
    print(f"\n{len(tests)} phase tests passed")
