from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from slowfast.expr import (
    Binary,
    Const,
    ExprDomainError,
    ExprSyntaxError,
    Unary,
    UnboundVariableError,
    Var,
    compile_expressions,
    eval_dual,
    eval_second,
    evaluate,
    free_variables,
    parse_expression,
    to_source,
)
from slowfast.systemfile import builtin_names, load_system

H = np.finfo(float).eps ** (1 / 3)


def ev(text, **b):
    return evaluate(parse_expression(text), b)


@pytest.mark.parametrize(
    "text, bindings, expected",
    [
        ("y - x^2", {"x": 1, "y": 0.4}, -0.6),
        ("x^3/3 - x - y", {"x": 1, "y": -2 / 3}, 0.0),
        ("0.5*(1+tanh((x1+0.01)/0.15))", {"x1": -0.01}, 0.5),
        ("7", {}, 7.0),
        ("tanh(x)", {"x": 0.0}, 0.0),
    ],
)
def test_documented_values(text, bindings, expected):
    assert evaluate(parse_expression(text), bindings) == pytest.approx(expected, abs=1e-15)


def test_morris_lecar_x2_equation_cancels():
    sf = load_system("morris-lecar")
    assert evaluate(sf.fast_eqs[1], {"x1": 0.1, "x2": 0.5, "y": 0.0, **sf.params}) == 0.0


def test_precedence_and_associativity():
    assert ev("-2^2") == -4.0
    assert ev("2^3^2") == 512.0
    assert ev("8/4/2") == 1.0
    assert ev("2-3-4") == -5.0
    assert ev("2+3*4") == 14.0
    assert ev("(2+3)*4") == 20.0
    assert ev("2^-1") == 0.5
    assert ev("--3") == 3.0


def test_scientific_literals():
    assert ev("1.5e-3 * 2") == pytest.approx(3e-3)
    assert ev(".5 + 1.") == 1.5


def test_syntax_error_position():
    with pytest.raises(ExprSyntaxError) as info:
        parse_expression("x + * y")
    assert (info.value.line, info.value.column, info.value.token) == (1, 5, "*")


@pytest.mark.parametrize("text", ["", "x +", "(x", "x)", "tanh x", "2 $ 3", "foo(x)"])
def test_syntax_errors(text):
    with pytest.raises(ExprSyntaxError):
        parse_expression(text)


def test_unknown_names_parse_but_do_not_evaluate():
    e = parse_expression("a + b")
    assert free_variables(e) == {"a", "b"}
    with pytest.raises(UnboundVariableError):
        evaluate(e, {"a": 1.0})


def test_fractional_power_needs_positive_base():
    assert ev("x^2", x=-3.0) == 9.0
    assert ev("x^0.5", x=4.0) == 2.0
    with pytest.raises(ExprDomainError):
        ev("x^0.5", x=-1.0)


def test_nonfinite_results_propagate():
    assert math.isinf(ev("1/x", x=0.0))
    assert math.isnan(ev("x/x", x=0.0))


@pytest.mark.parametrize(
    "text, at, seed, expected",
    [
        ("y - x^2", {"x": 3.0, "y": 0.0}, "x", (-9.0, -6.0)),
        ("tanh(x)", {"x": 0.0}, "x", (0.0, 1.0)),
        ("x^3/3 - x - y", {"x": 1.0, "y": 0.0}, "x", (-2 / 3, 0.0)),
        ("abs(x)", {"x": 0.0}, "x", (0.0, 1.0)),
    ],
)
def test_dual_examples(text, at, seed, expected):
    val, der = eval_dual(parse_expression(text), at, seed)
    assert val == pytest.approx(expected[0], abs=1e-15)
    assert der == pytest.approx(expected[1], abs=1e-15)


def test_second_derivative_along_direction():
    e = parse_expression("x^2*y + sin(x)")
    val, d1, d2 = eval_second(e, {"x": 0.3, "y": 2.0}, {"x": 1.0})
    assert val == pytest.approx(0.18 + math.sin(0.3))
    assert d1 == pytest.approx(2 * 0.3 * 2.0 + math.cos(0.3))
    assert d2 == pytest.approx(2 * 2.0 - math.sin(0.3))


def test_compiled_matches_interpreter_bitwise():
    rng = np.random.default_rng(1)
    for name in builtin_names():
        sf = load_system(name)
        fn = compile_expressions(sf.fast_eqs + sf.slow_eqs, [sf.fast, sf.slow], sf.params)
        for _ in range(20):
            x = rng.uniform(-1, 1, sf.m)
            y = rng.uniform(-1, 1, sf.n)
            env = {**dict(zip(sf.fast, x)), **dict(zip(sf.slow, y)), **sf.params}
            want = [evaluate(e, env) for e in sf.fast_eqs + sf.slow_eqs]
            assert list(fn(x, y)) == want


# -- random expressions -----------------------------------------------------

leaves = st.one_of(
    st.floats(-3, 3, allow_nan=False).map(lambda v: Const(round(v, 3))),
    st.sampled_from([Var("x"), Var("y")]),
)


def _extend(children):
    bounded = children.map(lambda c: Unary("tanh", c))
    positive = children.map(lambda c: Binary("+", Const(2.0), Unary("tanh", c)))
    return st.one_of(
        st.tuples(st.sampled_from(["+", "-", "*"]), children, children).map(lambda t: Binary(*t)),
        st.tuples(children, positive).map(lambda t: Binary("/", *t)),
        st.tuples(children, st.sampled_from([2.0, 3.0])).map(lambda t: Binary("^", t[0], Const(t[1]))),
        st.tuples(st.sampled_from(["sin", "cos", "tanh", "neg"]), children).map(lambda t: Unary(*t)),
        st.tuples(st.sampled_from(["exp", "sinh", "cosh"]), bounded).map(lambda t: Unary(*t)),
        st.tuples(st.sampled_from(["log", "sqrt"]), positive).map(lambda t: Unary(*t)),
        st.tuples(positive, st.floats(0.5, 2.5)).map(lambda t: Binary("^", t[0], Const(round(t[1], 2)))),
    )


exprs = st.recursive(leaves, _extend, max_leaves=8)
points = st.tuples(st.floats(-2, 2), st.floats(-2, 2))


@settings(max_examples=100, deadline=None)
@given(exprs, points, st.sampled_from(["x", "y"]))
def test_dual_matches_central_difference(e, p, var):
    at = {"x": p[0], "y": p[1]}
    val, der = eval_dual(e, at, var)
    assume(math.isfinite(val) and abs(val) < 1e6)
    h = H * (1 + abs(at[var]))
    hi, lo = dict(at), dict(at)
    hi[var] += h
    lo[var] -= h
    fd = (evaluate(e, hi) - evaluate(e, lo)) / (2 * h)
    assert der == pytest.approx(fd, rel=1e-6, abs=1e-6)


@settings(max_examples=100, deadline=None)
@given(exprs, st.lists(points, min_size=1, max_size=5))
def test_print_parse_round_trip(e, pts):
    again = parse_expression(to_source(e))
    assert to_source(parse_expression(to_source(again))) == to_source(again)
    for x, y in pts:
        a, b = evaluate(e, {"x": x, "y": y}), evaluate(again, {"x": x, "y": y})
        assert a == b or (math.isnan(a) and math.isnan(b))


def test_builtin_derivatives_match_finite_differences():
    rng = np.random.default_rng(7)
    for name in builtin_names():
        sf = load_system(name)
        names = sf.fast + sf.slow
        for e in sf.fast_eqs + sf.slow_eqs:
            for _ in range(10):
                at = {**dict(zip(names, rng.uniform(-0.5, 0.5, len(names)))), **sf.params}
                for var in names:
                    h = H * (1 + abs(at[var]))
                    hi, lo = dict(at), dict(at)
                    hi[var] += h
                    lo[var] -= h
                    fd = (evaluate(e, hi) - evaluate(e, lo)) / (2 * h)
                    assert eval_dual(e, at, var)[1] == pytest.approx(fd, rel=1e-6, abs=1e-7)
