import math

import numpy as np
import pytest
from hypothesis import given, settings

from orbinv import exprlang, families, jets
from orbinv.exprlang import BinOp, Call, Const, Neg, Num, Var

from strategies import expressions

FAMILY_TEXT = "(x^2+y^2)*(1+e*cos(b*(atan2(y,x)-th0)))^2"


def value(text, **env):
    return exprlang.eval_jet(exprlang.parse(text), env.pop("x", 0.0), env.pop("y", 0.0), env.pop("b", 0.0),
                             order=0, constants=env).value


def test_precedence():
    assert value("1+2*3") == 7.0
    assert value("2*3^2") == 18.0
    assert value("-2^2") == -4.0
    assert value("2^-1") == 0.5
    assert value("2^3^2") == 512.0
    assert value("8/4/2") == 1.0
    assert value("7-3-2") == 2.0


def test_tree_shape():
    assert exprlang.parse("1+2*3") == BinOp("+", Num(1.0), BinOp("*", Num(2.0), Num(3.0)))
    assert exprlang.parse("-x^2") == Neg(BinOp("^", Var("x"), Num(2.0)))
    assert exprlang.parse("atan2(y, k)") == Call("atan2", (Var("y"), Const("k")))


def test_family_text_parses():
    ast = exprlang.parse(FAMILY_TEXT)
    assert exprlang.names(ast) == {"e", "th0"}


def test_whitespace_insensitive():
    assert exprlang.parse(" x *  y+ b ") == exprlang.parse("x*y+b")


@pytest.mark.parametrize(
    "text,offset,needle",
    [
        ("sin(x", 6, "')'"),
        ("(1+2", 5, "')'"),
        ("foo(x)", 1, "unknown function"),
        ("1+2)", 4, "trailing"),
        ("1 $ 2", 3, "unexpected character"),
        ("atan2(x)", 1, "2 argument"),
        ("", 1, "expected"),
        ("2*", 3, "expected"),
    ],
)
def test_parse_errors(text, offset, needle):
    with pytest.raises(exprlang.ParseError) as info:
        exprlang.parse(text)
    assert info.value.offset == offset
    assert needle in str(info.value)


def test_eval_bilinear():
    j = exprlang.eval_jet(exprlang.parse("x*y+b"), 2.0, 3.0, 4.0, order=1)
    assert (j.value, j.partial(1, 0, 0), j.partial(0, 1, 0), j.partial(0, 0, 1)) == (10.0, 3.0, 2.0, 1.0)


def test_eval_anchor_polynomial():
    j = exprlang.eval_jet(exprlang.parse("x^2+b*y^2"), 1.0, 2.0, 3.0, order=2)
    assert (j.value, j.partial(0, 1, 0), j.partial(0, 0, 1)) == (13.0, 12.0, 4.0)


def test_eval_family_text():
    j = exprlang.eval_jet(exprlang.parse(FAMILY_TEXT), 2.0, 0.0, 1.5, order=3, constants={"e": 0.3, "th0": 0.0})
    assert j.value == pytest.approx(6.76, rel=1e-15)


def test_unbound_constant():
    with pytest.raises(exprlang.UnboundConstant):
        exprlang.eval_jet(exprlang.parse("x+k"), 1.0, 1.0, 1.0)


def test_fractional_exponent_rejected():
    with pytest.raises(jets.DomainError):
        exprlang.eval_jet(exprlang.parse("x^0.5"), 1.0, 1.0, 1.0)


def test_domain_error_propagates():
    with pytest.raises(jets.DomainError):
        exprlang.eval_jet(exprlang.parse("log(x)"), -1.0, 1.0, 1.0)
    with pytest.raises(jets.DivisionNearZero):
        exprlang.eval_jet(exprlang.parse("1/(x-1)"), 1.0, 1.0, 1.0)


def test_other_parameter_name():
    ast = exprlang.parse("x + th*y")
    j = exprlang.eval_jet(ast, 1.0, 2.0, 0.5, order=1, constants={"th": 99.0}, param="th")
    assert j.value == 2.0 and j.partial(0, 0, 1) == 2.0


@settings(max_examples=150, deadline=None, derandomize=True)
@given(expressions)
def test_print_round_trip(text):
    ast = exprlang.parse(text)
    again = exprlang.parse(exprlang.to_text(ast))
    assert again == ast
    assert exprlang.parse(exprlang.to_text(again)) == again


def test_round_trip_awkward_cases():
    for text in ["-x^2", "(-x)^2", "2^-x^2", "a-(b-c)", "a/(b*c)", "-(-x)", "x^(2^3)", "(x^2)^3", "-1.5e-3*x"]:
        ast = exprlang.parse(text)
        assert exprlang.parse(exprlang.to_text(ast)) == ast, text


@pytest.mark.parametrize("e,theta0,b", [(0.3, 0.2, 1.5), (0.6, -0.4, 0.8), (0.1, 1.0, 2.0)])
def test_builtin_cartesian_equivalence(e, theta0, b):
    spec = families.precessing_cartesian(e, theta0)
    alt = families.equivalent_expression(spec)
    for th in np.linspace(0.15, math.pi - 0.15, 9):
        x, y = 1.3 * math.cos(th), 1.3 * math.sin(th)
        a = families.family_value(spec, x, y, b, 6)
        c = families.family_value(alt, x, y, b, 6)
        scale = np.max(np.abs(a.c))
        assert np.max(np.abs(a.c - c.c)) <= 1e-12 * scale


@pytest.mark.parametrize("theta0", [0.1, 0.6])
def test_builtin_eccentricity_equivalence(theta0):
    spec = families.precessing_by_eccentricity(0.3, 1.0, 1.0)
    alt = families.equivalent_expression(spec)
    for th in np.linspace(0.2, math.pi - 0.2, 7):
        if abs(math.cos(th - theta0)) < 0.2:
            continue
        x, y = 0.6 * math.cos(th), 0.6 * math.sin(th)
        a = families.family_value(spec, x, y, theta0, 6)
        c = families.family_value(alt, x, y, theta0, 6)
        scale = np.max(np.abs(a.c))
        assert np.max(np.abs(a.c - c.c)) <= 1e-12 * scale
