#!/usr/bin/env python3
"""
Test equivalence checks: explicit maps, flatness and invariant signatures
"""
import sys
from pathlib import Path

import pytest

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from src.config import SamplingConfig
from src.base.expr import Chart, parse
from src.base.flags import AffineDistribution
from src.base.forms import DiffeoMap
from src.base.equiv import (
    POSSIBLY_EQUIVALENT, REFUTED_WITH_WITNESS, VERIFIED_AT_SAMPLES,
    check_point_affine_equiv, flatness_dim2, invariant_signature_compare
)
from src.utils.system_format import load_system

CFG = SamplingConfig(seed=9)
SYSTEMS = project_root / "data" / "systems"
PLANE = Chart('plane', ('x1', 'x2'), ((-1, 1), (0.5, 2)))
POSITIVE_X2 = Chart('positive_x2', ('x1', 'x2', 'x3'), ((-1, 1), (0.5, 2), (-1, 1)))


def surface(j: str) -> AffineDistribution:
    return AffineDistribution.from_strings(PLANE, ["x2", f"x2*({j})"], [["0", "1"]])


def test_identity_map_is_verified():
    F = AffineDistribution.from_strings(POSITIVE_X2, ["1", "x3", "0"], [["0", "0", "1"]])
    report = check_point_affine_equiv(DiffeoMap.identity(POSITIVE_X2), F, F, CFG)
    assert report.verdict == VERIFIED_AT_SAMPLES
    assert report.samples == CFG.samples and report.witness is None
    assert all(r <= CFG.tol for r in report.residuals.values())
    print("✓ identity map verified")


def test_flat_pair_map_is_verified():
    spec = load_system(str(SYSTEMS / "dim2_flat_pair.paf"))
    report = check_point_affine_equiv(spec.diffeo(), spec.distribution(), spec.system2.distribution(), CFG)
    assert report.verdict == VERIFIED_AT_SAMPLES, report.to_dict()
    print(f"✓ J = x2 carried onto J = 0, residuals {report.residuals}")


def test_refuted_pair_carries_witness():
    spec = load_system(str(SYSTEMS / "dim2_refuted_pair.paf"))
    report = check_point_affine_equiv(spec.diffeo(), spec.distribution(), spec.system2.distribution(), CFG)
    assert report.verdict == REFUTED_WITH_WITNESS
    assert report.witness['condition'] == 'drift'
    assert report.witness['residual'] > 10 * CFG.tol
    print(f"✓ refuted at {report.witness['point']}")


def test_control_rank_mismatch_is_refuted():
    chart = Chart('cube', ('x1', 'x2', 'x3'), ((-1, 1),) * 3)
    one = AffineDistribution.from_strings(chart, ["1", "x3", "0"], [["0", "0", "1"]])
    two = AffineDistribution.from_strings(chart, ["1", "0", "0"], [["0", "1", "0"], ["0", "0", "1"]])
    report = check_point_affine_equiv(DiffeoMap.identity(chart), one, two, CFG)
    assert report.verdict == REFUTED_WITH_WITNESS
    assert report.witness == {'condition': 'control_rank'}
    print("✓ control rank mismatch")


def test_flatness_examples():
    assert flatness_dim2(parse("5*x2", PLANE), PLANE, CFG)
    assert flatness_dim2(parse("sin(x1)*x2", PLANE), PLANE, CFG)
    assert not flatness_dim2(parse("x2^2", PLANE), PLANE, CFG)
    assert not flatness_dim2(parse("x2 + 1", PLANE), PLANE, CFG)
    for text, flat in (("0", True), ("x2", True), ("x1*x2", True), ("x2^2", False), ("sin(x1)", False)):
        assert flatness_dim2(parse(text, PLANE), PLANE, CFG) == flat, text
    print("✓ flatness of J = g(x1) x2")


def test_signature_of_a_system_matches_itself():
    report = invariant_signature_compare(surface("x2^2"), surface("x2^2"), CFG)
    assert report.verdict == POSSIBLY_EQUIVALENT
    assert report.invariants == ['T2_12'] and report.distance <= report.threshold
    print("✓ self comparison")


def test_signature_case_mismatch():
    spec = load_system(str(SYSTEMS / "dim3_case_mismatch.paf"))
    report = invariant_signature_compare(spec.distribution(), spec.system2.distribution(), CFG)
    assert report.verdict == REFUTED_WITH_WITNESS
    assert report.case_x['case'] == 1 and report.case_y['case'] == 2
    print("✓ case labels differ")


def test_signature_separates_curved_from_flat():
    report = invariant_signature_compare(surface("x2^2"), surface("0"), CFG)
    assert report.verdict == REFUTED_WITH_WITNESS
    assert report.witness['values']['T2_12'] > 0.2
    assert report.coverage_gap > 0
    assert report.threshold == pytest.approx(10 * (CFG.tol + report.coverage_gap))
    assert any("coverage gap" in note for note in report.notes)
    assert report.to_dict()['coverage_gap'] == report.coverage_gap
    print(f"✓ T2_12 = x2^2 against 0, distance {report.distance:.3f}")


def test_signature_without_invariants_is_inconclusive_only():
    F = AffineDistribution.from_strings(POSITIVE_X2, ["1", "x3", "0"], [["0", "0", "1"]])
    report = invariant_signature_compare(F, F, CFG)
    assert report.verdict == POSSIBLY_EQUIVALENT and report.notes
    print("✓ no invariant functions to compare")


def main():
    """Run all tests"""
    print("\n" + "=" * 80)
    print("Equivalence Tests")
    print("=" * 80)

    try:
        test_identity_map_is_verified()
        test_flat_pair_map_is_verified()
        test_refuted_pair_carries_witness()
        test_control_rank_mismatch_is_refuted()
        test_flatness_examples()
        test_signature_of_a_system_matches_itself()
        test_signature_case_mismatch()
        test_signature_separates_curved_from_flat()
        test_signature_without_invariants_is_inconclusive_only()

        print("\n" + "=" * 80)
        print("✓ All tests passed!")
        print("=" * 80)

    except Exception as e:
        print(f"\n✗ Test failed: {e}")
        import traceback
        traceback.print_exc()
        sys.exit(1)


if __name__ == "__main__":
    main()
