#!/usr/bin/env python3
"""
Test the expression kernel
Parsing, printing, differentiation, evaluation and zero verdicts
"""
import sys
from fractions import Fraction
from pathlib import Path
from typing import Tuple

import numpy as np
import pytest

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from src.config import SamplingConfig
from src.base.errors import DomainError, ParseError, UnknownIdentifierError
from src.base.expr import (
    Chart, IntegerPower, Parameter, Product, Rational, Sum, Var,
    differentiate, evaluate, evaluate_array, parse, substitute, to_string
)
from src.base.validation import EXACT_NONZERO, EXACT_ZERO, NUMERIC_NONZERO, NUMERIC_ZERO, ValidationEngine, is_zero

CHART3 = Chart('c3', ('x1', 'x2', 'x3'), ((-1, 1), (-1, 1), (-1, 1)))
CHART2 = Chart('c2', ('x1', 'x2'), ((-1, 1), (0.5, 2)))
BOAT = Chart('boat', ('x', 'y', 'psi'), ((-2, 2), (-2, 2), (0.3, 2.8)),
             (Parameter('c', 0.5, 2, True),))


def test_parse_builds_direct_ast():
    """Parsing keeps the written structure"""
    e = parse("x2*(1 + x3^2)", CHART3)
    expected = Product((Var('x2'), Sum((Rational(1), IntegerPower(Var('x3'), 2)))))
    assert e == expected
    print(f"✓ parse: {e!r}")


def test_parse_rejects_unknown_identifiers():
    with pytest.raises(UnknownIdentifierError) as info:
        parse("csc(psi)", BOAT)
    assert info.value.name == 'csc'
    with pytest.raises(UnknownIdentifierError):
        parse("dx1", CHART3)
    print("✓ unknown identifiers rejected")


def test_parse_errors_carry_position():
    with pytest.raises(ParseError) as info:
        parse("x1 + * x2", CHART3)
    assert info.value.position >= 0
    with pytest.raises(ParseError):
        parse("x1^1.5", CHART3)
    with pytest.raises(ParseError):
        parse("", CHART3)
    print("✓ parse errors")


def test_parameters_parse_and_evaluate():
    e = parse("c*cos(psi)", BOAT)
    assert abs(evaluate(e, {'c': 2.0, 'psi': 0.0}) - 2.0) < 1e-15
    print("✓ parameters")


def test_differentiate_examples():
    x2 = Var('x2')
    J = x2
    assert (differentiate(x2 * J, 'x2') - 2 * x2).is_zero_exact()

    e = differentiate(parse("sin(x1)", CHART3), 'x1')
    assert (e - parse("cos(x1)", CHART3)).is_zero_exact()

    R = parse("x3", CHART3)
    f = (parse("x3^2 + 1", CHART3)) * R
    assert (differentiate(f, 'x3') - parse("3*x3^2 + 1", CHART3)).is_zero_exact()
    print("✓ differentiate")


def test_chain_rule_through_functions():
    e = parse("exp(x1*x2) + ln(x2) + sqrt(x2)", CHART2)
    d = differentiate(e, 'x2')
    expected = parse("x1*exp(x1*x2) + 1/x2 + 1/(2*sqrt(x2))", CHART2)
    engine = ValidationEngine(SamplingConfig(seed=7))
    assert engine.is_zero(d - expected, CHART2).is_zero
    print("✓ chain rule")


def test_evaluate_examples():
    J = parse("x2^2", CHART2)
    e = Var('x2') * differentiate(J, 'x2') - J
    assert evaluate(e, {'x1': 0.0, 'x2': 3.0}) == pytest.approx(9.0)

    with pytest.raises(DomainError):
        evaluate(parse("1/sin(psi)", BOAT), {'x': 0.0, 'y': 0.0, 'psi': 0.0, 'c': 1.0})

    assert evaluate(Rational(Fraction(2, 3)), {}) == pytest.approx(2 / 3)
    print("✓ evaluate")


def test_evaluate_array_marks_domain_errors():
    e = parse("ln(x1)", CHART3)
    values, bad = evaluate_array(e, {'x1': np.array([1.0, -1.0, np.e])})
    assert list(bad) == [False, True, False]
    assert values[0] == pytest.approx(0.0) and values[2] == pytest.approx(1.0)
    print("✓ evaluate_array")


def test_zero_verdicts():
    cfg = SamplingConfig()
    numeric = is_zero(parse("sin(x1)^2 + cos(x1)^2 - 1", CHART3), CHART3, cfg)
    assert numeric.kind == NUMERIC_ZERO
    assert numeric.samples == 50 and numeric.tolerance == 1e-9

    exact = is_zero(parse("(x1+x2)^2 - x1^2 - 2*x1*x2 - x2^2", CHART3), CHART3, cfg)
    assert exact.kind == EXACT_ZERO

    flat = is_zero(parse("x2*1 - x2", CHART2), CHART2, cfg)
    assert flat.kind == EXACT_ZERO

    assert is_zero(parse("x1*x2", CHART3), CHART3, cfg).kind == EXACT_NONZERO
    nonzero = is_zero(parse("sin(x1) + 2", CHART3), CHART3, cfg)
    assert nonzero.kind == NUMERIC_NONZERO and nonzero.witness is not None
    print("✓ zero verdicts")


def test_substitute_composes():
    e = parse("x1*x2 + sin(x1)", CHART2)
    out = substitute(e, {'x1': parse("x2", CHART2)})
    assert (out - parse("x2^2 + sin(x2)", CHART2)).is_zero_exact()
    print("✓ substitute")


def _random_term(rng: np.random.Generator, depth: int) -> Tuple[str, int]:
    """Random expression text over x1..x3 and a bound on its polynomial degree"""
    if depth == 0 or rng.random() < 0.3:
        choice = rng.integers(0, 4)
        if choice == 0:
            return str(int(rng.integers(-3, 4))), 0
        return f"x{int(rng.integers(1, 4))}", 1
    kind = rng.integers(0, 5)
    a, da = _random_term(rng, depth - 1)
    b, db = _random_term(rng, depth - 1)
    if kind == 0:
        return f"({a}) + ({b})", max(da, db)
    if kind == 1:
        return f"({a}) - ({b})", max(da, db)
    if kind == 2:
        return f"({a})*({b})", da + db
    if kind == 3:
        exp = int(rng.integers(1, 4))
        return f"({a})^{exp}", exp * da
    return f"sin({a})", 1


def _random_expression(rng: np.random.Generator, depth: int) -> str:
    return _random_term(rng, depth)[0]


def test_print_parse_round_trip():
    """parse(print(e)) has the canonical form of e"""
    rng = np.random.default_rng(2024)
    for _ in range(300):
        text = _random_expression(rng, 3)
        e = parse(text, CHART3)
        canonical = e.canonical()
        again = parse(to_string(canonical), CHART3)
        assert again.rational == canonical.rational, text
        assert (parse(to_string(e), CHART3) - e).is_zero_exact(), text
    print("✓ round trip over 300 random expressions")


def test_derivatives_match_central_differences():
    """Exact partials against central differences, h = 1e-6, 20 points per expression"""
    rng = np.random.default_rng(77)
    h = 1e-6
    trials = 0
    while trials < 100:
        text, degree = _random_term(rng, 5)
        if degree > 6:
            continue
        e = parse(text, CHART3)
        variable = f"x{int(rng.integers(1, 4))}"
        env = {name: rng.uniform(-1, 1, 20) for name in CHART3.variables}
        exact, bad = evaluate_array(differentiate(e, variable), env)
        assert not bad.any(), text
        plus, minus = dict(env), dict(env)
        plus[variable] = env[variable] + h
        minus[variable] = env[variable] - h
        value = evaluate_array(e, env)[0]
        central = (evaluate_array(e, plus)[0] - evaluate_array(e, minus)[0]) / (2 * h)
        scale = np.maximum(1.0, np.maximum(np.abs(exact), np.abs(value)))
        assert np.all(np.abs(central - exact) <= 1e-6 * scale), (text, variable)
        trials += 1
    print(f"✓ derivatives against central differences over {trials} expressions")


def test_negative_powers_print_safely():
    e = -(Var('x1') ** 2)
    again = parse(to_string(e), CHART3)
    assert (again - e).is_zero_exact()
    print(f"✓ {to_string(e)}")


def main():
    """Run all tests"""
    print("\n" + "=" * 80)
    print("Expression Kernel Tests")
    print("=" * 80)

    try:
        test_parse_builds_direct_ast()
        test_parse_rejects_unknown_identifiers()
        test_parse_errors_carry_position()
        test_parameters_parse_and_evaluate()
        test_differentiate_examples()
        test_chain_rule_through_functions()
        test_evaluate_examples()
        test_evaluate_array_marks_domain_errors()
        test_zero_verdicts()
        test_substitute_composes()
        test_print_parse_round_trip()
        test_derivatives_match_central_differences()
        test_negative_powers_print_safely()

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
