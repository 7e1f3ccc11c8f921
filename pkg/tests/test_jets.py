import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orbinv import exprlang, jets
from orbinv.jets import Jet

from strategies import CONSTANTS, expressions, mp_partial, multi_indices, points


def poly_xy(order=2):
    x, y, b = jets.seed_point(1.0, 2.0, 3.0, order)
    return x * x + b * y * y


def test_seed_variable_x(backend):
    j = jets.seed_variable("x", 1.0, 2)
    assert j.coefficient(0, 0, 0) == 1.0 and j.coefficient(1, 0, 0) == 1.0
    rest = [j.coefficient(*m) for m in multi_indices(2) if m not in ((0, 0, 0), (1, 0, 0))]
    assert rest == [0.0] * len(rest)


def test_seed_variable_order_zero():
    j = jets.seed_variable("b", 3.0, 0)
    assert j.order == 0 and j.value == 3.0
    assert len(j.c) == 1


def test_seed_variable_y():
    j = jets.seed_variable("y", -2.5, 6)
    assert j.value == -2.5 and j.coefficient(0, 1, 0) == 1.0
    assert np.count_nonzero(j.c) == 2


def test_square_of_x(backend):
    x = jets.seed_variable("x", 1.0, 2)
    sq = x * x
    assert (sq.value, sq.coefficient(1, 0, 0), sq.coefficient(2, 0, 0)) == (1.0, 2.0, 1.0)


def test_anchor_polynomial(backend):
    f = poly_xy()
    assert f.value == 13.0
    assert f.partial(1, 0, 0) == 2.0
    assert f.partial(0, 1, 0) == 12.0
    assert f.partial(0, 0, 1) == 4.0
    assert f.partial(2, 0, 0) == 2.0
    assert f.partial(0, 2, 0) == 6.0
    assert f.partial(0, 1, 1) == 4.0
    assert jets.partial(f, 0, 1, 1) == 4.0


def test_anchor_polynomial_finite_differences():
    def f(x, y, b):
        return x * x + b * y * y

    h = 1e-4
    fy = (f(1, 2 + h, 3) - f(1, 2 - h, 3)) / (2 * h)
    fyb = (f(1, 2 + h, 3 + h) - f(1, 2 + h, 3 - h) - f(1, 2 - h, 3 + h) + f(1, 2 - h, 3 - h)) / (4 * h * h)
    g = poly_xy()
    assert g.partial(0, 1, 0) == pytest.approx(fy, rel=1e-8)
    assert g.partial(0, 1, 1) == pytest.approx(fyb, rel=1e-6)


def test_self_division_is_identity(backend):
    x, y, b = jets.seed_point(0.7, -1.2, 2.0, 5)
    a = jets.sin(x * y) + b * jets.exp(y)
    q = a / a
    assert q.value == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_allclose(q.c[1:], 0.0, atol=1e-13)


def test_sine_maclaurin(backend):
    s = jets.sin(jets.seed_variable("x", 0.0, 3))
    got = [s.coefficient(k, 0, 0) for k in range(4)]
    assert got == pytest.approx([0.0, 1.0, 0.0, -1.0 / 6.0], abs=1e-16)


def test_atan2_polar_angle(backend):
    x, y, _ = jets.seed_point(1.0, 1.0, 0.0, 2)
    th = jets.atan2(y, x)
    assert th.value == pytest.approx(math.pi / 4, rel=1e-15)
    assert th.partial(1, 0, 0) == pytest.approx(-0.5, rel=1e-15)
    assert th.partial(0, 1, 0) == pytest.approx(0.5, rel=1e-15)


@pytest.mark.parametrize("px,py", [(1.0, 1.0), (-1.0, 0.5), (-2.0, -0.3), (0.4, -1.7), (-1.0, 0.0)])
def test_atan2_all_quadrants(px, py):
    x, y, _ = jets.seed_point(px, py, 0.0, 3)
    th = jets.atan2(y, x)
    r2 = px * px + py * py
    assert th.value == pytest.approx(math.atan2(py, px), rel=1e-15)
    assert th.partial(1, 0, 0) == pytest.approx(-py / r2, abs=1e-15)
    assert th.partial(0, 1, 0) == pytest.approx(px / r2, rel=1e-15)


def test_sqrt_of_square(backend):
    x = jets.seed_variable("x", 2.0, 4)
    a = jets.sqrt(x * x)
    assert a.value == pytest.approx(2.0)
    assert a.partial(1, 0, 0) == pytest.approx(1.0, rel=1e-15)
    assert a.partial(2, 0, 0) == pytest.approx(0.0, abs=1e-15)


def test_partial_value_and_seed():
    f = poly_xy(3)
    assert jets.partial(f, 0, 0, 0) == f.value
    assert jets.partial(jets.seed_variable("x", 5.0, 2), 1, 0, 0) == 1.0


def test_partial_order_exceeded():
    with pytest.raises(jets.OrderExceeded):
        poly_xy(2).partial(2, 1, 0)


def test_division_near_zero(backend):
    x = jets.seed_variable("x", 1e-14, 2)
    with pytest.raises(jets.DivisionNearZero):
        jets.Jet.constant(1.0, 2) / x


@pytest.mark.parametrize(
    "fn,arg",
    [(jets.sqrt, -1.0), (jets.sqrt, 0.0), (jets.log, -0.5), (jets.tan, math.pi / 2)],
)
def test_domain_errors(fn, arg):
    with pytest.raises(jets.DomainError):
        fn(jets.seed_variable("x", arg, 3))


def test_atan2_origin():
    x, y, _ = jets.seed_point(0.0, 0.0, 0.0, 2)
    with pytest.raises(jets.DomainError):
        jets.atan2(y, x)


def test_multi_index_layout():
    for order in range(7):
        t = jets.table(order)
        assert jets.n_coefficients(order) == math.comb(order + 3, 3)
        assert all(sum(m) <= order for m in t.multi)
    assert jets.n_coefficients(6) == 84


def test_pow_int_matches_repeated_product(backend):
    x, y, b = jets.seed_point(0.8, 1.1, 1.3, 5)
    a = x + y * b
    np.testing.assert_allclose(jets.pow_int(a, 3).c, (a * a * a).c, rtol=1e-14, atol=1e-14)
    np.testing.assert_allclose(jets.pow_int(a, -2).c, (1.0 / (a * a)).c, rtol=1e-13, atol=1e-13)
    assert jets.pow_int(a, 0).value == 1.0


def test_jets_are_immutable():
    j = jets.seed_variable("x", 1.0, 2)
    with pytest.raises(AttributeError):
        j.order = 3
    with pytest.raises(ValueError):
        j.c[0] = 2.0


def test_mixed_orders_truncate_to_lower():
    s = jets.seed_variable("x", 1.0, 2) + jets.seed_variable("x", 1.0, 3)
    assert s.order == 2 and s.partial(1, 0, 0) == 2.0


# properties ----------------------------------------------------------------------

PROPERTY_SETTINGS = settings(max_examples=120, deadline=None, derandomize=True)


def _jet(text, point, order):
    return exprlang.eval_jet(exprlang.parse(text), *point, order=order, constants=CONSTANTS)


def _close(a: Jet, b: Jet, rel=1e-12):
    scale = max(1.0, float(np.max(np.abs(b.c))))
    return float(np.max(np.abs(a.c - b.c))) <= rel * scale


@PROPERTY_SETTINGS
@given(expressions, points)
def test_finite_difference_agreement(text, point):
    ast = exprlang.parse(text)
    j = exprlang.eval_jet(ast, *point, order=4, constants=CONSTANTS)
    for idx in multi_indices(4):
        d = mp_partial(ast, point, idx)
        assert abs(j.partial(*idx) - d) <= 1e-6 * max(abs(d), 1e-8), (idx, j.partial(*idx), d)


@PROPERTY_SETTINGS
@given(expressions, points, st.integers(0, 5))
def test_truncation_consistency(text, point, low):
    hi = _jet(text, point, 6)
    lo = _jet(text, point, low)
    assert np.array_equal(hi.truncate(low).c, lo.c)


@PROPERTY_SETTINGS
@given(expressions, expressions, points)
def test_leibniz(ta, tb, point):
    a, b = _jet(ta, point, 3), _jet(tb, point, 3)
    prod = a * b
    for axis in ((1, 0, 0), (0, 1, 0), (0, 0, 1)):
        expect = a.partial(*axis) * b.value + a.value * b.partial(*axis)
        scale = abs(a.partial(*axis) * b.value) + abs(a.value * b.partial(*axis))
        assert abs(prod.partial(*axis) - expect) <= 1e-15 * max(scale, 1e-300) * 4


@PROPERTY_SETTINGS
@given(expressions, expressions, points)
def test_division_round_trip(ta, tb, point):
    a, b = _jet(ta, point, 5), _jet(tb, point, 5)
    if abs(b.value) <= 1e-3:
        b = b + 1.0
    # coefficient errors of the division recursion scale with the sums of
    # |coefficient| products it accumulates, not with |a| alone
    mag = Jet(5, np.abs(a.c)) * Jet(5, np.abs(b.c)) * Jet(5, np.abs((1.0 / b).c))
    err = np.abs(((a * b) / b).c - a.c)
    assert np.all(err <= 1e-12 * np.maximum(mag.c, np.max(np.abs(a.c))))


@PROPERTY_SETTINGS
@given(expressions, expressions, expressions, points)
def test_ring_laws(ta, tb, tc, point):
    a, b, c = (_jet(t, point, 4) for t in (ta, tb, tc))
    assert _close(a + b, b + a) and _close(a * b, b * a)
    assert _close((a + b) + c, a + (b + c))
    assert _close((a * b) * c, a * (b * c), rel=1e-11)


@PROPERTY_SETTINGS
@given(expressions, points)
def test_order_zero_matches_float(text, point):
    ast = exprlang.parse(text)
    j = exprlang.eval_jet(ast, *point, order=0, constants=CONSTANTS)
    f = exprlang.eval_float(ast, dict(CONSTANTS, x=point[0], y=point[1], b=point[2]))
    assert j.value == pytest.approx(f, rel=1e-15, abs=1e-300)


@settings(max_examples=40, deadline=None, derandomize=True)
@given(expressions, points)
def test_backends_agree(text, point):
    from orbinv import _kernels_py

    try:
        from orbinv import _kernels
    except ImportError:
        pytest.skip("compiled kernels not built")
    saved = jets.kernels
    try:
        jets.kernels = _kernels_py
        a = _jet(text, point, 6)
        jets.kernels = _kernels
        c = _jet(text, point, 6)
    finally:
        jets.kernels = saved
    assert _close(a, c, rel=1e-13)
