#!/usr/bin/env python3
"""
Test exterior calculus
Vector fields, brackets, forms, frames, coframes and maps
"""
import sys
from pathlib import Path

import numpy as np
import pytest

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from src.config import SamplingConfig
from src.base.errors import DimensionMismatchError, MapInconsistencyError, SingularFrameError
from src.base.expr import ONE, ZERO, Chart, Parameter, Var, as_expression, substitute
from src.base.forms import (
    DiffeoMap, Frame, KForm, VectorField, apply, dual_coframe, exterior_derivative,
    gradient, interior, lie_bracket, pullback, pushforward, wedge, wedge_power
)
from src.base.validation import ValidationEngine

CHART2 = Chart('c2', ('x1', 'x2'), ((-1, 1), (-1, 1)))
CHART3 = Chart('c3', ('x1', 'x2', 'x3'), ((-1, 1), (-1, 1), (-1, 1)))
CHART4 = Chart('c4', ('x0', 'x1', 'x2', 'x3'), ((-1, 1),) * 4)
EULER = Chart('euler', ('phi', 'theta', 'psi'), ((0.1, 6.2), (0.2, 2.9), (-3, 3)))
BOAT = Chart('boat', ('x', 'y', 'psi'), ((-2, 2), (-2, 2), (0.3, 2.8)),
             (Parameter('c', 0.5, 2, True), Parameter('k', -1, 1)))

ENGINE = ValidationEngine(SamplingConfig(seed=11))


def su2_fields():
    """Right-invariant su(2) fields in Euler-angle coordinates"""
    e_z = VectorField.from_strings(EULER, ["1", "0", "0"])
    e_x = VectorField.from_strings(EULER, ["-sin(phi)*cos(theta)/sin(theta)", "cos(phi)", "sin(phi)/sin(theta)"])
    e_y = VectorField.from_strings(EULER, ["cos(phi)*cos(theta)/sin(theta)", "sin(phi)", "-cos(phi)/sin(theta)"])
    return e_z, e_x, e_y


def field_vanishes(v: VectorField) -> bool:
    return all(ENGINE.is_zero(c, v.chart).is_zero for c in v.components)


def same_form(a: KForm, b: KForm) -> bool:
    return a.degree == b.degree and (a - b).is_zero_exact()


def form_vanishes(omega: KForm) -> bool:
    return all(ENGINE.is_zero(c, omega.chart).is_zero for c in omega.coeffs.values())


def random_polynomial(rng: np.random.Generator, chart: Chart, degree: int = 2):
    names = chart.variables
    out = ZERO
    for _ in range(4):
        term = as_expression(int(rng.integers(-3, 4)))
        for _ in range(int(rng.integers(0, degree + 1))):
            term = term * Var(names[int(rng.integers(0, len(names)))])
        out = out + term
    return out


def random_field(rng: np.random.Generator, chart: Chart) -> VectorField:
    return VectorField(chart, tuple(random_polynomial(rng, chart) for _ in chart.variables))


def test_bracket_examples():
    """Coordinate bracket, su(2) commutation and antisymmetry"""
    d1 = VectorField.coordinate(CHART2, 0)
    v = VectorField.from_strings(CHART2, ["0", "x1"])
    assert (lie_bracket(d1, v) - VectorField.coordinate(CHART2, 1)).is_zero_exact()

    e_z, e_x, e_y = su2_fields()
    assert field_vanishes(lie_bracket(e_z, e_x) + e_y)
    assert field_vanishes(lie_bracket(e_x, e_y) + e_z)
    assert field_vanishes(lie_bracket(e_y, e_z) + e_x)

    assert lie_bracket(v, v).is_zero_exact()
    print("✓ bracket examples")


def test_bracket_antisymmetry_and_jacobi():
    """[v,w]+[w,v] = 0 and the Jacobi identity, exactly, for random quadratic fields"""
    rng = np.random.default_rng(100)
    for _ in range(100):
        u, v, w = (random_field(rng, CHART3) for _ in range(3))
        assert (lie_bracket(v, w) + lie_bracket(w, v)).is_zero_exact()
        jacobi = (lie_bracket(u, lie_bracket(v, w)) + lie_bracket(v, lie_bracket(w, u))
                  + lie_bracket(w, lie_bracket(u, v)))
        assert jacobi.is_zero_exact()
    print("✓ antisymmetry and Jacobi over 100 trials")


def test_exterior_derivative_examples():
    theta = KForm.one_form_from_strings(CHART3, ["1", "-x3", "0"])
    d_theta = exterior_derivative(theta)
    assert same_form(d_theta, KForm(CHART3, 2, {(1, 2): ONE}))

    model = KForm.one_form_from_strings(CHART4, ["0", "x0", "0", "x2"])
    assert same_form(exterior_derivative(model), KForm(CHART4, 2, {(0, 1): ONE, (2, 3): ONE}))

    rng = np.random.default_rng(5)
    for _ in range(100):
        f = random_polynomial(rng, CHART3) / (Var('x1') ** 2 + 1)
        assert exterior_derivative(gradient(f, CHART3)).is_zero_exact()
    for _ in range(100):
        theta = KForm.one_form(CHART3, [random_polynomial(rng, CHART3) for _ in range(3)])
        assert exterior_derivative(exterior_derivative(theta)).is_zero_exact()

    with pytest.raises(DimensionMismatchError):
        exterior_derivative(KForm(CHART2, 2, {(0, 1): ONE}))
    print("✓ exterior derivative")


def test_wedge_examples():
    dx1 = KForm.coordinate(CHART3, 0)
    assert wedge(dx1, dx1).is_zero_exact()

    theta = KForm.one_form_from_strings(CHART3, ["1", "-x3", "0"])
    dx2_dx3 = KForm(CHART3, 2, {(1, 2): ONE})
    assert same_form(wedge(theta, dx2_dx3), KForm(CHART3, 3, {(0, 1, 2): ONE}))

    eta1 = KForm.one_form_from_strings(CHART3, ["x2", "1", "0"])
    eta2 = KForm.one_form_from_strings(CHART3, ["0", "x3", "x1"])
    assert same_form(wedge(eta1, eta2), -wedge(eta2, eta1))

    # (d theta)^2 vanishes in three variables
    assert wedge_power(exterior_derivative(theta), 2).is_zero_exact()
    print("✓ wedge")


def test_apply_examples():
    d2 = VectorField.coordinate(CHART3, 1)
    assert (apply(KForm.coordinate(CHART3, 1), [d2]) - 1).is_zero_exact()
    theta = KForm.one_form_from_strings(CHART3, ["1", "-x3", "0"])
    assert (apply(theta, [d2]) + Var('x3')).is_zero_exact()
    with pytest.raises(DimensionMismatchError):
        apply(theta, [d2, d2])
    print("✓ apply")


def test_cartan_formula():
    """d theta(X, Y) = X(theta(Y)) - Y(theta(X)) - theta([X, Y])"""
    rng = np.random.default_rng(17)
    for _ in range(100):
        theta = KForm.one_form(CHART3, [random_polynomial(rng, CHART3) for _ in range(3)])
        X, Y = random_field(rng, CHART3), random_field(rng, CHART3)
        lhs = apply(exterior_derivative(theta), [X, Y])
        rhs = X(apply(theta, [Y])) - Y(apply(theta, [X])) - apply(theta, [lie_bracket(X, Y)])
        assert (lhs - rhs).is_zero_exact()
    print("✓ Cartan formula over 100 trials")


def test_leibniz_rule():
    """d(alpha^beta) = d alpha ^ beta - alpha ^ d beta for 1-forms"""
    rng = np.random.default_rng(23)
    for _ in range(100):
        alpha = KForm.one_form(CHART3, [random_polynomial(rng, CHART3) for _ in range(3)])
        beta = KForm.one_form(CHART3, [random_polynomial(rng, CHART3) for _ in range(3)])
        lhs = exterior_derivative(wedge(alpha, beta))
        rhs = wedge(exterior_derivative(alpha), beta) - wedge(alpha, exterior_derivative(beta))
        assert same_form(lhs, rhs)
    print("✓ Leibniz rule over 100 trials")


def test_interior_product():
    omega = KForm(CHART3, 2, {(0, 1): ONE})
    d1 = VectorField.coordinate(CHART3, 0)
    assert same_form(interior(omega, d1), KForm.coordinate(CHART3, 1))
    print("✓ interior product")


def test_dual_coframe_examples():
    frame = Frame(CHART3, tuple(VectorField.coordinate(CHART3, i) for i in range(3)))
    coframe = dual_coframe(frame)
    for i, form in enumerate(coframe.forms):
        assert same_form(form, KForm.coordinate(CHART3, i))

    v1 = VectorField.from_strings(BOAT, ["c", "0", "k*cos(psi)"])
    v2 = VectorField.from_strings(BOAT, ["cos(psi)", "sin(psi)", "0"])
    v3 = VectorField.from_strings(BOAT, ["0", "0", "1"])
    boat = dual_coframe(Frame(BOAT, (v1, v2, v3)), ENGINE)
    expected = KForm.one_form_from_strings(BOAT, ["1/c", "-cos(psi)/(c*sin(psi))", "0"])
    assert form_vanishes(boat.forms[0] - expected)
    for i, eta in enumerate(boat.forms):
        for j, v in enumerate((v1, v2, v3)):
            assert ENGINE.is_zero(apply(eta, [v]) - (1 if i == j else 0), BOAT).is_zero

    repeated = VectorField.from_strings(CHART3, ["1", "x1", "0"])
    with pytest.raises(SingularFrameError):
        dual_coframe(Frame(CHART3, (repeated, repeated, VectorField.coordinate(CHART3, 2))))
    print("✓ dual coframe")


def test_pushforward_and_pullback():
    identity = DiffeoMap.identity(CHART3)
    v = VectorField.from_strings(CHART3, ["x2", "x3^2", "1"])
    assert (pushforward(identity, v) - v).is_zero_exact()
    theta = KForm.one_form_from_strings(CHART3, ["1", "-x3", "x1"])
    assert same_form(pullback(identity, theta), theta)

    target = Chart('c2y', ('y1', 'y2'), ((-1, 1), (-2, 2)))
    scale = DiffeoMap.from_strings(CHART2, target, ["x1", "2*x2"], ["y1", "y2/2"])
    pushed = pushforward(scale, VectorField.coordinate(CHART2, 1))
    assert (pushed - VectorField.from_strings(target, ["0", "2"])).is_zero_exact()
    print("✓ pushforward and pullback")


def test_contact_transformation_preserves_model_form():
    """x1 -> x1 - x2 x3, x2 -> x3, x3 -> -x2 pulls dy1 - y3 dy2 back to dx1 - x3 dx2"""
    target = Chart('contact', ('y1', 'y2', 'y3'), ((-3, 3),) * 3)
    psi = DiffeoMap.from_strings(CHART3, target, ["x1 - x2*x3", "x3", "-x2"], ["y1 - y2*y3", "-y3", "y2"])
    psi.check(ENGINE)
    model_y = KForm.one_form_from_strings(target, ["1", "-y3", "0"])
    model_x = KForm.one_form_from_strings(CHART3, ["1", "-x3", "0"])
    assert same_form(pullback(psi, model_y), model_x)
    back = psi.compose(psi.inverted())
    assert all((a - Var(x)).is_zero_exact() for a, x in zip(back.forward, CHART3.variables))
    print("✓ contact transformation")


def test_map_check_rejects_bad_inverse():
    target = Chart('c2y', ('y1', 'y2'), ((-1, 1), (-2, 2)))
    bad = DiffeoMap.from_strings(CHART2, target, ["x1", "2*x2"], ["y1", "y2"])
    with pytest.raises(MapInconsistencyError) as info:
        bad.check(ENGINE)
    assert info.value.witness is not None and info.value.residual > 0
    print("✓ inconsistent map rejected")


def test_inconsistent_map_refused_before_transport():
    target = Chart('c2y', ('y1', 'y2'), ((-1, 1), (-2, 2)))
    v = VectorField.from_strings(CHART2, ["x2", "0"])
    bad = DiffeoMap.from_strings(CHART2, target, ["x1", "2*x2"], ["y1", "y2"])
    with pytest.raises(MapInconsistencyError):
        pushforward(bad, v, SamplingConfig(seed=3))
    with pytest.raises(MapInconsistencyError):
        pullback(bad, KForm.coordinate(target, 0))

    good = DiffeoMap.from_strings(CHART2, target, ["x1", "2*x2"], ["y1", "y2/2"])
    pushed = pushforward(good, v)
    assert (pushed - VectorField.from_strings(target, ["y2/2", "0"])).is_zero_exact()
    assert good._checked
    print("✓ map inverse checked before pushforward and pullback")


def test_pullback_agrees_with_pushforward():
    """(psi^* omega)(v, ...) = omega(psi_* v, ...) composed with psi, for nonlinear maps"""
    target = Chart('image', ('y1', 'y2', 'y3'), ((-3, 3),) * 3)
    maps = [
        DiffeoMap.from_strings(CHART3, target, ["x1 - x2*x3", "x3", "-x2"], ["y1 - y2*y3", "-y3", "y2"]),
        DiffeoMap.from_strings(CHART3, target, ["x1 + x2^2", "x2", "x3 + x1*x2"],
                               ["y1 - y2^2", "y2", "y3 - (y1 - y2^2)*y2"]),
    ]
    rng = np.random.default_rng(41)
    for psi in maps:
        there = psi.forward_substitution()
        for _ in range(50):
            omega = KForm.one_form(target, [random_polynomial(rng, target) for _ in range(3)])
            v = random_field(rng, CHART3)
            lhs = apply(pullback(psi, omega), [v])
            rhs = substitute(apply(omega, [pushforward(psi, v)]), there)
            assert (lhs - rhs).is_zero_exact()
        for _ in range(10):
            omega = KForm(target, 2, {idx: random_polynomial(rng, target) for idx in ((0, 1), (0, 2), (1, 2))})
            v, w = random_field(rng, CHART3), random_field(rng, CHART3)
            lhs = apply(pullback(psi, omega), [v, w])
            rhs = substitute(apply(omega, [pushforward(psi, v), pushforward(psi, w)]), there)
            assert (lhs - rhs).is_zero_exact()
    print("✓ pullback against pushforward over 120 trials")


def main():
    """Run all tests"""
    print("\n" + "=" * 80)
    print("Exterior Calculus Tests")
    print("=" * 80)

    try:
        test_bracket_examples()
        test_bracket_antisymmetry_and_jacobi()
        test_exterior_derivative_examples()
        test_wedge_examples()
        test_apply_examples()
        test_cartan_formula()
        test_leibniz_rule()
        test_interior_product()
        test_dual_coframe_examples()
        test_pushforward_and_pullback()
        test_contact_transformation_preserves_model_form()
        test_map_check_rejects_bad_inverse()
        test_inconsistent_map_refused_before_transport()
        test_pullback_agrees_with_pushforward()

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
