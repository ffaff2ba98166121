import math

import numpy as np
import pytest

from filmflow import expr
from filmflow.expr import (
    EvalDomainError,
    ParseError,
    ScalarField,
    derivative,
    evaluate,
    parse,
    to_source,
)


def central_difference(e, var, point, h):
    """Independent derivative oracle: 2nd-order central difference."""
    vi = expr.VAR_NAMES.index(var)
    up = list(point)
    dn = list(point)
    up[vi] += h
    dn[vi] -= h
    return (evaluate(e, *up) - evaluate(e, *dn)) / (2 * h)


# ---------------------------------------------------------------------------
# parsing

def test_parse_literal_zero():
    e = parse("0")
    assert isinstance(e, expr.Const)
    assert e.value == 0.0


def test_parse_product_structure():
    e = parse("x1*sin(t)")
    assert isinstance(e, expr.Bin) and e.op == "*"
    assert isinstance(e.left, expr.Var) and e.left.index == 0
    assert isinstance(e.right, expr.Call) and e.right.func == "sin"


def test_named_constant_pi():
    assert evaluate(parse("2*pi"), 0.3, -1.0, 4.0, 9.9) == pytest.approx(
        6.283185307179586, abs=0.0)


@pytest.mark.parametrize("src,expected", [
    ("1+2*3", 7.0),
    ("(1+2)*3", 9.0),
    ("-2^2", -4.0),          # power binds tighter than unary minus
    ("6/3/2", 1.0),          # left associative
    ("1-2-3", -4.0),
    ("1.5e-3*1e3", 1.5),
])
def test_precedence_and_literals(src, expected):
    assert evaluate(parse(src), 0, 0, 0, 0) == pytest.approx(expected, rel=1e-15)


def test_syntax_error_reports_offset():
    with pytest.raises(ParseError) as err:
        parse("x1 + * 3")
    assert err.value.offset == 5


def test_unknown_identifier():
    with pytest.raises(ParseError, match="unknown identifier 'y'"):
        parse("x1 + y")


def test_unknown_function_is_unknown_identifier():
    with pytest.raises(ParseError, match="unknown identifier"):
        parse("atan(x1)")


def test_nonconstant_exponent_rejected():
    with pytest.raises(ParseError, match="exponent must be a numeric constant"):
        parse("x1^x2")
    with pytest.raises(ParseError, match="exponent must be a numeric constant"):
        parse("x1^(2)")


def test_chained_exponent_rejected():
    # a factor carries at most one exponent
    with pytest.raises(ParseError, match="trailing"):
        parse("2^3^2")


def test_non_ascii_rejected():
    with pytest.raises(ParseError):
        parse("x1·x2")


def test_custom_variable_vocabulary():
    e = expr.parse_in_vars("rho^2 - rho", ("rho",))
    assert evaluate(e, 3.0, 0, 0, 0) == pytest.approx(6.0)
    with pytest.raises(ParseError, match="unknown identifier 'x1'"):
        expr.parse_in_vars("x1", ("rho",))


# ---------------------------------------------------------------------------
# evaluation

def test_eval_sum():
    assert evaluate(parse("x1+x2"), 1.0, 2.0, 0.0, 0.0) == 3.0


def test_eval_pythagorean_identity():
    v = evaluate(parse("sin(x1)^2+cos(x1)^2"), 0.7, 0, 0, 0)
    assert abs(v - 1.0) <= 1e-15


def test_eval_log_exp_inverse():
    v = evaluate(parse("exp(log(x3))"), 0, 0, 2.5, 0)
    assert abs(v - 2.5) <= 1e-15


def test_eval_vectorized_matches_pointwise():
    e = parse("sin(x1*t)+x2/x3")
    xs = np.linspace(0.1, 2.0, 7)
    batch = evaluate(e, xs, xs + 1, xs + 2, 0.3)
    for i, x in enumerate(xs):
        assert batch[i] == evaluate(e, x, x + 1, x + 2, 0.3)


def test_domain_error_log():
    with pytest.raises(EvalDomainError, match="log"):
        evaluate(parse("log(x1)"), -1.0, 0, 0, 0)


def test_domain_error_division_names_node():
    with pytest.raises(EvalDomainError, match="x1/x2"):
        evaluate(parse("1+x1/x2"), 1.0, 0.0, 0, 0)


def test_domain_error_fractional_power():
    with pytest.raises(EvalDomainError):
        evaluate(parse("x1^1.4"), -2.0, 0, 0, 0)


# ---------------------------------------------------------------------------
# differentiation

def test_power_rule():
    d = derivative(parse("x1^3"), "x1")
    assert evaluate(d, 2.0, 0, 0, 0) == pytest.approx(12.0, abs=0.0)


def test_time_derivative_against_central_difference():
    e = parse("sin(x1*t)")
    point = (0.5, 0.0, 0.0, 2.0)
    exact = evaluate(derivative(e, "t"), *point)
    approx = central_difference(e, "t", point, 1e-6)
    assert abs(exact - approx) <= 1e-8
    assert exact == pytest.approx(0.5 * math.cos(1.0), rel=1e-15)


def test_derivative_of_absent_variable_is_zero():
    d = derivative(parse("x1"), "x2")
    assert isinstance(d, expr.Const) and d.value == 0.0


def test_higher_derivatives_compose():
    e = parse("x1^2*x2^3")
    dxy = derivative(derivative(e, "x1"), "x2")
    # d2/dx1 dx2 (x1^2 x2^3) = 6 x1 x2^2
    assert evaluate(dxy, 2.0, 3.0, 0, 0) == pytest.approx(108.0)


def _random_expression(rng, depth):
    """Seeded random expression generator over a safe value range."""
    if depth == 0 or rng.random() < 0.3:
        if rng.random() < 0.4:
            return expr.Const(float(rng.uniform(-2.0, 2.0)))
        return expr.Var(int(rng.integers(0, 4)))
    kind = rng.integers(0, 6)
    if kind == 0:
        return expr.add(_random_expression(rng, depth - 1), _random_expression(rng, depth - 1))
    if kind == 1:
        return expr.sub(_random_expression(rng, depth - 1), _random_expression(rng, depth - 1))
    if kind == 2:
        return expr.mul(_random_expression(rng, depth - 1), _random_expression(rng, depth - 1))
    if kind == 3:
        fn = ("sin", "cos", "tanh")[int(rng.integers(0, 3))]
        return expr.call(fn, _random_expression(rng, depth - 1))
    if kind == 4:
        # keep exp arguments bounded via tanh
        return expr.call("exp", expr.call("tanh", _random_expression(rng, depth - 1)))
    return expr.powc(_random_expression(rng, depth - 1), float(rng.integers(2, 4)))


def test_derivative_matches_central_difference_on_random_expressions():
    rng = np.random.Generator(np.random.Philox(20240817))
    checked = 0
    while checked < 1000:
        e = _random_expression(rng, depth=int(rng.integers(1, 5)))
        var = expr.VAR_NAMES[int(rng.integers(0, 4))]
        point = tuple(rng.uniform(-1.5, 1.5, size=4))
        try:
            value = evaluate(e, *point)
            exact = evaluate(derivative(e, var), *point)
            approx = central_difference(e, var, point, 1e-5)
        except EvalDomainError:
            continue
        if not (math.isfinite(exact) and math.isfinite(approx)):
            continue
        assert abs(exact - approx) <= 1e-6 * (1.0 + abs(value) + abs(exact)), \
            f"mismatch for {to_source(e)} d/d{var} at {point}"
        checked += 1


def test_mixed_partials_commute():
    rng = np.random.Generator(np.random.Philox(7))
    for _ in range(100):
        e = _random_expression(rng, depth=3)
        d12 = derivative(derivative(e, "x1"), "x2")
        d21 = derivative(derivative(e, "x2"), "x1")
        point = tuple(rng.uniform(-1.0, 1.0, size=4))
        try:
            a, b = evaluate(d12, *point), evaluate(d21, *point)
        except EvalDomainError:
            continue
        assert abs(a - b) <= 1e-12 * (1.0 + abs(a))


# ---------------------------------------------------------------------------
# printing round trip

@pytest.mark.parametrize("src", [
    "x1*sin(t)",
    "1-2-x3",
    "-x1^2",
    "(-x1)^2",
    "x1/(x2*x3)",
    "x1-(x2-x3)",
    "2*pi*x1",
    "sqrt(x1^2+x2^2+x3^2)",
    "tanh(x1)^2-1",
    "x1^-2",
    "1.5e-3+x1",
])
def test_print_parse_fixed_point(src):
    once = to_source(parse(src))
    twice = to_source(parse(once))
    assert once == twice


def test_print_parse_fixed_point_random():
    rng = np.random.Generator(np.random.Philox(99))
    for _ in range(300):
        e = _random_expression(rng, depth=4)
        once = to_source(e)
        reparsed = parse(once)
        assert to_source(reparsed) == once
        # semantics preserved as well
        point = tuple(rng.uniform(-1.0, 1.0, size=4))
        try:
            a, b = evaluate(e, *point), evaluate(reparsed, *point)
        except EvalDomainError:
            continue
        assert a == b


# ---------------------------------------------------------------------------
# fields

def test_scalar_field_arithmetic_and_gradient():
    f = ScalarField("x1*x2") + ScalarField("x3") * 2.0
    g = f.grad()
    assert g[0](1, 2, 3, 0) == 2.0
    assert g[1](1, 2, 3, 0) == 1.0
    assert g[2](1, 2, 3, 0) == 2.0


def test_field_compose_and_freeze():
    f = ScalarField("x1^2+t")
    frozen = f.freeze_time(3.0)
    assert frozen(2.0, 0, 0, 999.0) == 7.0
    swapped = f.compose({"x1": ScalarField("2*x2")})
    assert swapped(0.0, 1.0, 0, 1.0) == 5.0


def test_vector_field_dot():
    v = expr.vector("x1", "x2", "x3")
    assert v.dot(v)(1.0, 2.0, 2.0, 0) == 9.0
