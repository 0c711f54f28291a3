import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from renvol.expr import (
    Add, Const, Div, EvaluationError, Mul, Neg, ParseError, Pow, Sub, UnknownIdentifierError,
    Var, diff, differentiate, evaluate, free_vars, parse, simplify, substitute,
)


def central4(f, x, h=1e-3):
    return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h)


# -- parsing -------------------------------------------------------------------

def test_parse_tree_shape():
    e = parse("x - 0.5*r^2")
    assert e is Sub(Var("x"), Mul(Const(0.5), Pow(Var("r"), Const(2))))


def test_trailing_operator_reports_offset():
    with pytest.raises(ParseError) as info:
        parse("x + ")
    assert info.value.offset == 4
    assert "operand" in str(info.value)


def test_unknown_identifier_lists_declared():
    with pytest.raises(UnknownIdentifierError) as info:
        parse("x + zz", variables=("x", "r"))
    assert info.value.offset == 4
    assert "x, r" in str(info.value)


def test_precedence_and_associativity():
    assert parse("-x^2") is Neg(Pow(Var("x"), Const(2)))
    assert parse("2^3^2") is Pow(Const(2), Const(9))
    assert parse("a^b^c") is Pow(Var("a"), Pow(Var("b"), Var("c")))
    assert parse("a-b-c") is Sub(Sub(Var("a"), Var("b")), Var("c"))
    assert parse("a/b*c") is Mul(Div(Var("a"), Var("b")), Var("c"))
    assert parse("x**2") is parse("x^2")


def test_constant_exponent_folded():
    assert parse("(1+r^2)^(3/2)") is Pow(Add(Const(1), Pow(Var("r"), Const(2))), Const(1.5))


def test_pi_and_functions():
    assert evaluate(parse("cos(pi)"), {}) == pytest.approx(-1.0)
    assert evaluate(parse("acos(0)"), {}) == pytest.approx(math.pi / 2)
    with pytest.raises(ParseError):
        parse("foo(x)")


@pytest.mark.parametrize("text", ["", "(", "x +* y", "x)", "3..4", "x $ y", "sin x"])
def test_malformed(text):
    with pytest.raises(ParseError):
        parse(text)


# -- differentiation --------------------------------------------------------------

def test_derivative_of_three_halves_power():
    e = parse("(1+r^2)^(3/2)")
    d = differentiate(e, "r")
    f = lambda r: (1 + r * r) ** 1.5  # noqa: E731
    assert evaluate(d, {"r": 0.7}) == pytest.approx(central4(f, 0.7), abs=1e-8)
    assert evaluate(d, {"r": 0.7}) == pytest.approx(3 * 0.7 * math.sqrt(1.49), rel=1e-14)


def test_derivative_cache_is_shared():
    e = parse("exp(sin(x*y))")
    assert differentiate(e, "x") is differentiate(e, "x")
    assert diff(e, "x", "y") is diff(e, "x", "y")


def test_functions_derivatives():
    x0 = 0.37
    for text in ["exp(x)", "log(x)", "sqrt(x)", "sin(x)", "cos(x)", "tan(x)", "arccos(x)",
                 "abs(x - 1)", "x^x", "2^x", "x^(-2.5)"]:
        e = parse(text)
        f = lambda t: float(evaluate(e, {"x": t}))  # noqa: E731
        d = float(evaluate(differentiate(e, "x"), {"x": x0}))
        assert d == pytest.approx(central4(f, x0, 1e-4), rel=1e-8, abs=1e-9), text


# -- evaluation ---------------------------------------------------------------------

@pytest.mark.parametrize("text,point,msg", [
    ("log(x)", {"x": -1.0}, "log"),
    ("1/(x-1)", {"x": 1.0}, "division"),
    ("x^0.5", {"x": -2.0}, "power"),
    ("sqrt(x)", {"x": -1e-3}, "sqrt"),
    ("arccos(x)", {"x": 1.5}, "arccos"),
])
def test_domain_errors_name_node(text, point, msg):
    with pytest.raises(EvaluationError) as info:
        evaluate(parse(text), point)
    assert msg in str(info.value)
    assert info.value.node is not None


def test_vectorised_and_mp():
    e = parse("x*exp(-y^2)")
    xs = np.linspace(0, 1, 5)
    out = evaluate(e, {"x": xs, "y": 0.5})
    assert out.shape == (5,)
    assert np.allclose(out, xs * math.exp(-0.25))
    with mpmath.workdps(40):
        v = evaluate(e, {"x": mpmath.mpf(1), "y": mpmath.mpf("0.5")})
        assert isinstance(v, mpmath.mpf)
        assert abs(v - mpmath.exp(-mpmath.mpf("0.25"))) < mpmath.mpf(10) ** -35


def test_substitute_and_free_vars():
    e = parse("x - 0.5*r^2")
    assert free_vars(e) == {"x", "r"}
    s = substitute(e, {"x": parse("0.5*r^2")})
    assert simplify(s) is Const(0)


# -- simplification -------------------------------------------------------------------

@pytest.mark.parametrize("text,expected", [
    ("0*x + 1*r", "r"),
    ("x^1 + 0", "x"),
    ("2*3 + r", "6 + r"),
    ("x - x", "0"),
    ("x*x/x", "x"),
    ("(x^2)^3", "x^6"),
    ("-(-x)", "x"),
    ("2*x + 3*x", "5*x"),
])
def test_simplify_examples(text, expected):
    assert str(simplify(parse(text))) == expected


# -- property tests --------------------------------------------------------------------

_leaf = st.one_of(
    st.sampled_from(["x", "y"]),
    st.integers(-3, 3).map(str),
    st.sampled_from(["0.5", "1.25"]),
)


def _combine(children):
    binary = st.tuples(children, st.sampled_from(["+", "-", "*"]), children).map(
        lambda t: f"({t[0]} {t[1]} {t[2]})")
    quotient = st.tuples(children, children).map(lambda t: f"({t[0]})/(1 + ({t[1]})^2)")
    unary = st.tuples(st.sampled_from(["sin", "cos", "exp", "-"]), children).map(
        lambda t: f"{t[0]}(0.3*({t[1]}))" if t[0] != "-" else f"-({t[1]})")
    powers = st.tuples(children, st.integers(0, 3)).map(lambda t: f"({t[0]})^{t[1]}")
    return st.one_of(binary, quotient, unary, powers)


smooth_expr = st.recursive(_leaf, _combine, max_leaves=6).map(parse)
points = st.tuples(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))


@settings(max_examples=150, deadline=None)
@given(smooth_expr, points)
def test_derivative_matches_finite_difference(e, pt):
    x0, y0 = pt
    d = differentiate(e, "x")
    exact = float(evaluate(d, {"x": x0, "y": y0}))
    f = lambda t: float(evaluate(e, {"x": t, "y": y0}))  # noqa: E731
    approx = central4(f, x0, 1e-3)
    assert abs(exact - approx) <= 1e-6 * max(1.0, abs(exact))


@settings(max_examples=200, deadline=None)
@given(smooth_expr)
def test_simplify_idempotent(e):
    s = simplify(e)
    assert simplify(s) is s


@settings(max_examples=200, deadline=None)
@given(smooth_expr, points)
def test_simplify_preserves_value(e, pt):
    p = {"x": pt[0], "y": pt[1]}
    a = float(evaluate(e, p))
    b = float(evaluate(simplify(e), p))
    assert b == pytest.approx(a, rel=1e-9, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(smooth_expr)
def test_print_parse_round_trip(e):
    assert parse(str(e)) is e
    s = simplify(e)
    assert parse(str(s)) is s
