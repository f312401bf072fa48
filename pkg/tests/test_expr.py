import math

import numpy as np
import pytest

from metriconn.expr import (
    Call,
    Const,
    DomainError,
    Mul,
    ParseError,
    Var,
    X,
    Y,
    differentiate,
    evaluate,
    exp,
    parse,
    sin,
    to_source,
)

from helpers import random_points, random_safe_expr


def test_parse_product_structure():
    e = parse("sin(x)*y")
    assert isinstance(e, Mul)
    assert isinstance(e.left, Call) and e.left.name == "sin"
    assert isinstance(e.left.arg, Var) and e.left.arg.name == "x"
    assert isinstance(e.right, Var) and e.right.name == "y"


def test_parse_constant():
    e = parse("2")
    assert isinstance(e, Const)
    assert e.value == 2.0


def test_parse_incomplete_expression():
    with pytest.raises(ParseError) as excinfo:
        parse("x + ")
    assert excinfo.value.offset == 4


@pytest.mark.parametrize("text,offset", [
    ("", 0),
    ("foo(x)", 0),
    ("(x + y", 6),
    ("2 2", 2),
    ("x ^ y", 4),
    ("sin x", 4),
])
def test_parse_errors_carry_offsets(text, offset):
    with pytest.raises(ParseError) as excinfo:
        parse(text)
    assert excinfo.value.offset == offset
    assert 0 <= excinfo.value.offset <= len(text)


def test_reserved_constants():
    assert evaluate(parse("pi"), 0.0, 0.0) == math.pi
    assert evaluate(parse("e"), 0.0, 0.0) == math.e
    assert evaluate(parse("cos(pi)"), 1.0, 1.0) == -1.0


def test_scientific_notation():
    assert evaluate(parse("1.5e-3"), 0.0, 0.0) == 1.5e-3
    assert evaluate(parse("2e2 + .5"), 0.0, 0.0) == 200.5


def test_constant_exponent_folds():
    e = parse("x^(1+1)")
    assert evaluate(e, 3.0, 0.0) == 9.0


def test_evaluate_polynomial():
    assert evaluate(parse("x^2 + y"), 2.0, 3.0) == 7.0


def test_evaluate_exp_zero():
    e = parse("exp(0)")
    assert evaluate(e, -1.3, 2.4) == 1.0


def test_evaluate_domain_errors():
    with pytest.raises(DomainError) as excinfo:
        evaluate(parse("ln(x)"), -1.0, 0.0)
    assert excinfo.value.point == (-1.0, 0.0)
    with pytest.raises(DomainError):
        evaluate(parse("1/x"), 0.0, 1.0)
    with pytest.raises(DomainError):
        evaluate(parse("sqrt(x)"), -0.5, 0.0)
    with pytest.raises(DomainError):
        evaluate(parse("x^0.5"), -2.0, 0.0)
    with pytest.raises(DomainError):
        evaluate(parse("x^(-1)"), 0.0, 0.0)


def test_differentiate_product():
    d = differentiate(parse("x*y"), "x")
    for x, y in random_points(np.random.default_rng(0), 20):
        assert evaluate(d, x, y) == y


def test_differentiate_sin():
    d = differentiate(parse("sin(x)"), "x")
    for x, y in random_points(np.random.default_rng(1), 20):
        assert evaluate(d, x, y) == math.cos(x)


def test_differentiate_exp_chain():
    d = differentiate(parse("exp(2*y)"), "y")
    for x, y in random_points(np.random.default_rng(2), 20):
        assert math.isclose(evaluate(d, x, y), 2.0 * math.exp(2.0 * y), rel_tol=1e-15)


def test_derivative_matches_finite_differences():
    rng = np.random.default_rng(7)
    h = 1e-5
    for _ in range(100):
        e = random_safe_expr(rng)
        for variable in ("x", "y"):
            d = differentiate(e, variable)
            for x, y in random_points(rng, 3):
                if variable == "x":
                    fd = (evaluate(e, x + h, y) - evaluate(e, x - h, y)) / (2 * h)
                else:
                    fd = (evaluate(e, x, y + h) - evaluate(e, x, y - h)) / (2 * h)
                exact = evaluate(d, x, y)
                assert abs(exact - fd) <= 1e-6 * (1.0 + abs(exact))


def test_differentiate_total_on_grammar():
    rng = np.random.default_rng(11)
    for _ in range(200):
        e = random_safe_expr(rng, depth=4)
        differentiate(differentiate(e, "x"), "y")  # must not raise


def test_linearity_of_differentiation():
    rng = np.random.default_rng(13)
    for _ in range(25):
        e1 = random_safe_expr(rng)
        e2 = random_safe_expr(rng)
        a = float(rng.uniform(-3, 3))
        combined = differentiate(e1 * a + e2, "x")
        split = differentiate(e1, "x")
        split2 = differentiate(e2, "x")
        for x, y in random_points(rng, 5):
            lhs = evaluate(combined, x, y)
            rhs = a * evaluate(split, x, y) + evaluate(split2, x, y)
            assert abs(lhs - rhs) <= 1e-9 * (1.0 + abs(lhs))


def test_mixed_partials_commute():
    rng = np.random.default_rng(17)
    for _ in range(25):
        e = random_safe_expr(rng)
        dxy = differentiate(differentiate(e, "x"), "y")
        dyx = differentiate(differentiate(e, "y"), "x")
        for x, y in random_points(rng, 5):
            a, b = evaluate(dxy, x, y), evaluate(dyx, x, y)
            assert abs(a - b) <= 1e-9 * (1.0 + abs(a))


def test_constant_folding_preserves_values():
    rng = np.random.default_rng(19)
    for _ in range(50):
        e = random_safe_expr(rng)
        folded = (e + 0) * 1 - 0
        for x, y in random_points(rng, 5):
            assert evaluate(folded, x, y) == evaluate(e, x, y)


def test_print_parse_round_trip():
    rng = np.random.default_rng(23)
    corpus = [random_safe_expr(rng, depth=4) for _ in range(60)]
    corpus += [
        parse("-x^2"),
        parse("x^(-2)"),
        parse("1 - -x"),
        sin(X * 2.0) / (Const(3.0) + exp(Y)),
        (X + Y) ** 3,
        -(X * Y),
    ]
    for e in corpus:
        text = to_source(e)
        back = parse(text)
        for x, y in random_points(rng, 6):
            assert evaluate(back, x, y) == evaluate(e, x, y), text


def test_expressions_are_pure():
    e = parse("sin(x)*exp(y) + x^3")
    first = [evaluate(e, 0.3, -1.2) for _ in range(5)]
    assert len(set(first)) == 1
