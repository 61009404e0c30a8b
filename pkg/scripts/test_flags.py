#!/usr/bin/env python3
"""
Test derived flags and classification predicates
Growth vectors, bracket classes, constant type, Frobenius and Pfaff rank
"""
import sys
from pathlib import Path
from typing import List

import numpy as np
import pytest

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from src.config import SamplingConfig
from src.base.errors import NonConstantTypeError
from src.base.expr import Chart, Parameter
from src.base.flags import (
    ALMOST_BRACKET_GENERATING, BRACKET_GENERATING, NEITHER,
    AffineDistribution, LinearDistribution, affine_flag, classify_bracket,
    constant_type_check, is_contact, is_engel, is_frobenius, linear_flag,
    pfaff_rank, strictness_check
)
from src.base.forms import DiffeoMap, KForm, VectorField

CFG = SamplingConfig(seed=3)


def chart(n: int, names=None, box=(-1, 1)) -> Chart:
    names = names or tuple(f"x{i}" for i in range(1, n + 1))
    return Chart(f"r{n}", tuple(names), (box,) * n)


def heisenberg() -> LinearDistribution:
    c = chart(3)
    return LinearDistribution(c, (VectorField.from_strings(c, ["0", "1", "0"]),
                                  VectorField.from_strings(c, ["x2", "0", "1"])))


def engel() -> LinearDistribution:
    c = chart(4)
    return LinearDistribution(c, (VectorField.from_strings(c, ["1", "x3", "x4", "0"]),
                                  VectorField.from_strings(c, ["0", "0", "0", "1"])))


def cartan() -> LinearDistribution:
    c = chart(5, ('x', 'y', 'p', 'q', 'z'))
    return LinearDistribution(c, (VectorField.from_strings(c, ["1", "p", "q", "0", "q^2"]),
                                  VectorField.from_strings(c, ["0", "0", "0", "1", "0"])))


def test_linear_growth_vectors():
    assert linear_flag(heisenberg(), CFG).growth == [2, 3]
    assert linear_flag(engel(), CFG).growth == [2, 3, 4]
    assert linear_flag(cartan(), CFG).growth == [2, 3, 5]
    assert is_engel(engel(), CFG)
    assert not is_engel(cartan(), CFG)
    print("✓ Heisenberg (2,3), Engel (2,3,4), Cartan (2,3,5)")


def test_affine_flag_examples():
    c2 = chart(2)
    flat = AffineDistribution.from_strings(c2, ["1", "0"], [["0", "1"]])
    flag = affine_flag(flat, CFG)
    assert flag.growth == [1] and flag.completion == [2]
    assert classify_bracket(flat, CFG).label == ALMOST_BRACKET_GENERATING

    c2_pos = Chart('r2pos', ('x1', 'x2'), ((-1, 1), (0.5, 2)))
    generating = AffineDistribution.from_strings(c2_pos, ["x2", "0"], [["0", "1"]])
    assert affine_flag(generating, CFG).growth == [1, 2]
    assert classify_bracket(generating, CFG).label == BRACKET_GENERATING

    c3 = chart(3)
    almost = AffineDistribution.from_strings(c3, ["1", "x3", "0"], [["0", "0", "1"]])
    flag = affine_flag(almost, CFG)
    assert flag.growth == [1, 2] and flag.completion[-1] == 3
    assert classify_bracket(almost, CFG, flag).label == ALMOST_BRACKET_GENERATING

    neither = AffineDistribution.from_strings(c3, ["1", "0", "0"], [["0", "1", "0"]])
    result = classify_bracket(neither, CFG)
    assert result.label == NEITHER and result.rank == 1
    print("✓ affine flags and bracket classes")


def test_constant_type_passes_on_normal_forms():
    c3 = Chart('r3', ('x1', 'x2', 'x3'), ((-1, 1), (0.5, 2), (-1, 1)))
    for drift in (["1", "x3", "0"], ["x2", "x3", "0"]):
        F = AffineDistribution.from_strings(c3, drift, [["0", "0", "1"]])
        report = constant_type_check(F, CFG)
        assert report.passed, report.to_dict()
    print("✓ normal forms have constant type")


def test_boat_across_zero_heading_fails_with_witness():
    wide = Chart('boat_wide', ('x', 'y', 'psi'), ((-2, 2), (-2, 2), (-1, 1)),
                 (Parameter('c', 0.5, 2, True), Parameter('k', -1, 1)))
    boat = AffineDistribution.from_strings(wide, ["c", "0", "k*cos(psi)"],
                                           [["cos(psi)", "sin(psi)", "0"], ["0", "0", "1"]])
    strict = strictness_check(boat, CFG)
    assert not strict.passed
    assert any(abs(w['point']['psi']) < 1e-6 for w in strict.witnesses)
    report = constant_type_check(boat, CFG)
    assert not report.passed and report.failed()[0].name == 'strictly_affine'
    print(f"✓ boat rejected near psi = 0: {strict.witnesses[0]['point']['psi']:.2e}")


def test_drift_through_control_span_fails():
    F = AffineDistribution.from_strings(chart(2), ["x1", "0"], [["0", "1"]])
    assert not constant_type_check(F, CFG).passed
    print("✓ x1 d1 + span(d2) is not strictly affine across x1 = 0")


def test_strict_flag_raises_on_rank_drop():
    c = chart(2)
    D = LinearDistribution(c, (VectorField.from_strings(c, ["1", "0"]),
                               VectorField.from_strings(c, ["0", "x1^3"])))
    with pytest.raises(NonConstantTypeError):
        linear_flag(D, SamplingConfig(seed=3, samples=400, rank_rtol=1e-2))
    print("✓ rank drop detected")


def test_frobenius_and_contact():
    c3 = chart(3)
    assert is_frobenius(LinearDistribution(c3, (VectorField.coordinate(c3, 1), VectorField.coordinate(c3, 2))), CFG)

    contact = LinearDistribution(c3, (VectorField.from_strings(c3, ["x3", "1", "0"]), VectorField.coordinate(c3, 2)))
    assert not is_frobenius(contact, CFG)
    assert is_contact(contact, CFG)

    # span(a1, [a0, a1]) of x2 d1 + x3 d2 + span(d3)
    normal = LinearDistribution(c3, (VectorField.coordinate(c3, 2), VectorField.from_strings(c3, ["0", "-1", "0"])))
    assert is_frobenius(normal, CFG)
    print("✓ Frobenius and contact predicates")


def test_pfaff_rank_examples():
    c3 = chart(3)
    assert pfaff_rank(KForm.one_form_from_strings(c3, ["1", "-x3", "0"]), CFG) == (1, True)

    c4 = chart(4, ('x0', 'x1', 'x2', 'x3'))
    assert pfaff_rank(KForm.one_form_from_strings(c4, ["0", "x0", "0", "x2"]), CFG) == (1, False)

    c2 = chart(2)
    assert pfaff_rank(KForm.coordinate(c2, 0), CFG) == (0, True)

    with pytest.raises(NonConstantTypeError):
        pfaff_rank(KForm.one_form_from_strings(c2, ["0", "0"]), CFG)
    print("✓ Pfaff rank")


def _unimodular(rng: np.random.Generator, n: int) -> np.ndarray:
    lower = np.eye(n, dtype=int) + np.tril(rng.integers(-1, 2, (n, n)), -1)
    upper = np.eye(n, dtype=int) + np.triu(rng.integers(-1, 2, (n, n)), 1)
    return lower @ upper


def _affine_map(rng: np.random.Generator, source: Chart) -> DiffeoMap:
    n = source.dim
    A = _unimodular(rng, n)
    A_inv = np.rint(np.linalg.inv(A)).astype(int)
    b = rng.integers(-2, 3, n)
    ys = tuple(f"y{i}" for i in range(1, n + 1))
    target = Chart(f"{source.name}_image", ys, ((-1, 1),) * n)

    def rows(M: np.ndarray, names, shift) -> List[str]:
        out = []
        for i in range(n):
            terms = [f"({int(M[i][j])})*({names[j]} - ({int(shift[j])}))" for j in range(n)]
            out.append(" + ".join(terms))
        return out

    forward = [f"{r} + ({int(b[i])})" for i, r in enumerate(rows(A, source.variables, np.zeros(n, dtype=int)))]
    inverse = rows(A_inv, ys, b)
    return DiffeoMap.from_strings(source, target, forward, inverse)


def test_growth_vectors_are_diffeomorphism_invariant():
    rng = np.random.default_rng(20)
    fixtures = [heisenberg(), engel(), cartan()]
    for trial in range(20):
        D = fixtures[trial % len(fixtures)]
        psi = _affine_map(rng, D.chart)
        psi.check()
        assert linear_flag(D.pushed(psi), CFG).growth == linear_flag(D, CFG).growth
    print("✓ growth vectors invariant under 20 random affine maps")


def main():
    """Run all tests"""
    print("\n" + "=" * 80)
    print("Derived Flag Tests")
    print("=" * 80)

    try:
        test_linear_growth_vectors()
        test_affine_flag_examples()
        test_constant_type_passes_on_normal_forms()
        test_boat_across_zero_heading_fails_with_witness()
        test_drift_through_control_span_fails()
        test_strict_flag_raises_on_rank_drop()
        test_frobenius_and_contact()
        test_pfaff_rank_examples()
        test_growth_vectors_are_diffeomorphism_invariant()

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
