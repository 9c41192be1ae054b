import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wcpde.coefficients import ZERO, CoefficientExpr, TimeFactor
from wcpde.errors import ConfigError, OutOfClass

finite = st.floats(-3, 3, allow_nan=False)


def test_time_factor_kinds():
    assert TimeFactor.const()(5.0) == 1.0
    tf = TimeFactor.sin(0.25, 2.0)
    assert tf(np.pi / 4) == pytest.approx(1.25)
    tab = TimeFactor.tabulated([(0, 1), (1, 3)])
    assert tab(0.5) == pytest.approx(2.0)
    assert tab(-1) == 1.0 and tab(4) == 3.0
    assert not tab.is_constant and TimeFactor.sin(0.0).is_constant


def test_time_factor_rejects_bad_input():
    with pytest.raises(ConfigError):
        TimeFactor.tabulated([(1, 0), (0, 1)])
    with pytest.raises(ConfigError):
        TimeFactor.from_json({"cosine": {}})


@given(st.sampled_from(["const", "sin", "table"]), finite, finite)
def test_time_factor_json_roundtrip(kind, a, b):
    if kind == "const":
        tf = TimeFactor.const()
    elif kind == "sin":
        tf = TimeFactor.sin(a, b, 0.3, 2.0)
    else:
        tf = TimeFactor.tabulated([(0.0, a), (1.0, b)])
    back = TimeFactor.from_json(tf.to_json())
    for t in (0.0, 0.37, 2.0):
        assert back(t) == pytest.approx(tf(t))


def test_expression_values():
    e = CoefficientExpr(-2.0, 0.5, axis=0)
    x = np.array([[3.0, 4.0]])
    assert e(0.0, x)[0] == pytest.approx(-2.0 * 3.0 * np.sqrt(26.0))
    assert e.with_abs()(0.0, x)[0] == pytest.approx(2.0 * 3.0 * np.sqrt(26.0))
    assert ZERO(0.0, x)[0] == 0.0 and ZERO.is_zero
    with pytest.raises(ConfigError):
        CoefficientExpr(1.0, -0.5)


@given(st.floats(0, 1.5), st.sampled_from([None, 0, 1]), st.integers(1, 3))
def test_derivative_matches_finite_differences(power, axis, order):
    e = CoefficientExpr(1.3, power, axis)
    x0 = np.array([0.4, -0.7])
    eps = 1e-4
    D = e.derivative(0.0, x0[None], order)[0]
    Dlow = lambda x: e.derivative(0.0, x[None], order - 1)[0]
    for i in range(2):
        ei = np.zeros(2)
        ei[i] = eps
        fd = (Dlow(x0 + ei) - Dlow(x0 - ei)) / (2 * eps)
        np.testing.assert_allclose(D[..., i] if order > 1 else D[i], fd, rtol=1e-5, atol=1e-6)


def test_absolute_has_no_derivatives():
    with pytest.raises(OutOfClass):
        CoefficientExpr(1.0).with_abs().derivative(0.0, np.zeros((1, 1)), 1)


def test_growth_exponent():
    assert CoefficientExpr(1.0, 0.5, axis=0).growth_exponent() == 1.0
    assert CoefficientExpr(1.0, 0.25).growth_exponent() == 0.25
