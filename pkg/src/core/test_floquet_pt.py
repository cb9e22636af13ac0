"""
Tests for the perturbative phase formulas and the generic second-order Floquet sum.
"""

import math
import sys
import warnings
from pathlib import Path

import numpy as np

# Add src to path
src_path = Path(__file__).parent.parent
sys.path.insert(0, str(src_path))

from core.errors import DegenerateBareSpectrum, ValidityWarning
from core.floquet_pt import (
    bare_label,
    first_order_correction,
    fit_residual_exponent,
    floquet_second_order_phase,
    most_energetic_state,
    perturbation_result,
    pt2_formula,
    pt2_phase,
    pt3_formula,
    pt3_phase,
    pt_vs_exact_report,
)
from core.model import FieldProtocol, MoleculeParams, derived_frequencies
from core.phase import TOP_STATE

PARAMS = MoleculeParams.oh_ground_state()
DELTA = PARAMS.delta
STRONG_B = FieldProtocol(b_mag=1.0, theta_m=0.05)
COMBINED = FieldProtocol(b_mag=1.0, theta_m=0.05, e_mag=2e5, theta_e=0.05)


def test_pt2_small_angle_reduction():
    omega_l = derived_frequencies(PARAMS, STRONG_B).omega_l
    for theta in (1e-3, 1e-2):
        value = pt2_formula(omega_l, 0.0, DELTA, theta, 0.0)
        assert math.isclose(value, 2.0 * math.pi * 0.75 * theta**2, rel_tol=1e-3)
    assert math.isclose(pt2_phase(PARAMS, STRONG_B), 2.0 * math.pi * 0.75 * math.tan(0.05) ** 2, rel_tol=1e-14)


def test_pt3_vanishing_cases():
    freq = derived_frequencies(PARAMS, COMBINED)
    assert pt3_formula(freq.omega_l, 0.0, DELTA, 0.05, 0.05) == 0.0
    assert pt3_phase(PARAMS, STRONG_B) == 0.0
    scale = abs(pt3_formula(freq.omega_l, freq.omega_e, DELTA, 0.05, math.pi / 4))
    assert abs(pt3_formula(freq.omega_l, freq.omega_e, DELTA, 0.05, math.pi / 2)) < 1e-12 * scale


def test_angle_parity():
    freq = derived_frequencies(PARAMS, COMBINED)
    args = (freq.omega_l, freq.omega_e, DELTA)
    for theta in (0.02, 0.1, 0.25):
        assert pt2_formula(*args, -theta, 0.1) == pt2_formula(*args, theta, 0.1)
        assert pt3_formula(*args, -theta, 0.1) == -pt3_formula(*args, theta, 0.1)
        assert pt3_formula(*args, -theta, 0.1, omega_l_squared=True) == -pt3_formula(*args, theta, 0.1, omega_l_squared=True)


def test_zero_magnetic_field_is_degenerate():
    for call in (pt2_phase, pt3_phase, perturbation_result):
        try:
            call(PARAMS, FieldProtocol(e_mag=2e5, theta_e=0.1))
        except DegenerateBareSpectrum:
            continue
        raise AssertionError(f"{call.__name__} accepted B = 0")


def test_magnetic_and_electric_terms_do_not_add():
    """The electric denominator carries omega_L cos(theta_m), so the fields interfere."""
    freq = derived_frequencies(PARAMS, COMBINED)
    tiny_l = derived_frequencies(PARAMS, FieldProtocol(b_mag=1e-6)).omega_l
    joint = pt2_formula(freq.omega_l, freq.omega_e, DELTA, 0.05, 0.2)
    magnetic = pt2_formula(freq.omega_l, 0.0, DELTA, 0.05, 0.0)
    electric = pt2_formula(tiny_l, freq.omega_e, DELTA, 0.0, 0.2)
    print(f"  joint {joint:.6e} vs sum {magnetic + electric:.6e}")
    assert abs(joint - (magnetic + electric)) > 1e-6


def test_first_order_vanishes():
    for fields in (STRONG_B, COMBINED):
        for state in range(8):
            assert first_order_correction(PARAMS, fields, state) == 0.0


def test_most_energetic_state_is_top_label():
    assert bare_label(most_energetic_state(PARAMS, COMBINED)) == TOP_STATE


def test_generic_sum_matches_pt2_without_electric_field():
    generic = floquet_second_order_phase(PARAMS, STRONG_B)
    assert math.isclose(generic, pt2_phase(PARAMS, STRONG_B), rel_tol=1e-10)

    omega_l = derived_frequencies(PARAMS, STRONG_B).omega_l
    slow = floquet_second_order_phase(PARAMS, STRONG_B, omega_r=1e-4 * omega_l)
    assert math.isclose(slow, generic, rel_tol=1e-3)


def test_validity_flags():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = perturbation_result(PARAMS, FieldProtocol(b_mag=1.0, theta_m=0.5))
    assert not result.validity_flags["small_theta_m"]
    assert result.validity_flags["small_theta_e"] and result.validity_flags["non_degenerate"]
    assert any(issubclass(w.category, ValidityWarning) for w in caught)
    assert result.total == result.order2_phase + result.order3_phase


def test_residual_scales_as_fourth_power():
    grid = np.concatenate([[0.0], np.linspace(0.01, 0.1, 10)])
    table = pt_vs_exact_report(PARAMS, STRONG_B, grid)
    print(table.to_string(index=False))
    assert list(table.columns) == ["theta", "pt2", "pt3", "exact", "residual"]
    assert table["residual"].iloc[0] == 0.0
    exponent = fit_residual_exponent(table)
    print(f"  residual exponent {exponent:.3f}")
    assert abs(exponent - 4.0) < 0.3
    assert np.all(table["pt3"] == 0.0)


def test_combined_fields_hierarchy():
    table = pt_vs_exact_report(PARAMS, COMBINED, [0.05], vary="both")
    row = table.iloc[0]
    print(f"  pt2 {row['pt2']:.6e}  pt3 {row['pt3']:.3e}  exact {row['exact']:.6e}")
    assert abs(row["pt3"]) < 0.1 * row["pt2"]
    assert abs(row["pt2"] - row["exact"]) < 0.1 * abs(row["exact"])


def test_report_rejects_unknown_angle():
    try:
        pt_vs_exact_report(PARAMS, STRONG_B, [0.1], vary="phi")
    except ValueError:
        return
    raise AssertionError("unknown angle accepted")


if __name__ == "__main__":
    tests = [
        test_pt2_small_angle_reduction,
        test_pt3_vanishing_cases,
        test_angle_parity,
        test_zero_magnetic_field_is_degenerate,
        test_magnetic_and_electric_terms_do_not_add,
        test_first_order_vanishes,
        test_most_energetic_state_is_top_label,
        test_generic_sum_matches_pt2_without_electric_field,
        test_validity_flags,
        test_residual_scales_as_fourth_power,
        test_combined_fields_hierarchy,
        test_report_rejects_unknown_angle,
    ]
    for test in tests:
        print(f"{test.__name__}")
        test()
    print(f"\n{len(tests)} perturbation tests passed")
