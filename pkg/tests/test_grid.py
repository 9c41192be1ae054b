import tempfile
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wcpde.errors import ConfigError, GridTooCoarse, NotNested
from wcpde.grid import (GridFunction, UniformGrid, ck_norm, derivative, holder_norm, holder_seminorm,
                        load_grid_function, restrict, save_grid_function, trapezoid_weights)


def test_grid_geometry():
    g = UniformGrid.box(2.0, 41)
    assert g.h == pytest.approx(0.1)
    assert g.points.shape == (41, 1)
    assert g.refine().n == 81 and g.refine().h == pytest.approx(0.05)
    g2 = UniformGrid.box(1.0, 11, 2)
    assert g2.size == 121 and g2.points.shape == (121, 2)
    with pytest.raises(ConfigError):
        UniformGrid.box(1.0, 10)
    with pytest.raises(NotNested):
        UniformGrid.with_spacing(1.0, 0.3)
    with pytest.raises(GridTooCoarse):
        UniformGrid.box(1.0, 5).inner(0.5)


def test_restrict_is_exact_subsample():
    g = UniformGrid.box(4.0, 81)
    u = GridFunction.from_callable(g, lambda X: np.sin(X[:, 0])[None])
    inner = g.inner(0.5)
    r = restrict(u, inner)
    np.testing.assert_allclose(r.values[0], np.sin(r.grid.axis), atol=1e-14)
    assert r.grid.h == pytest.approx(g.h)


def test_derivatives_of_polynomials_are_exact():
    g = UniformGrid.box(1.0, 21)
    x = g.axis
    # second-order stencils: exact on quadratics, the third derivative on cubics
    u2 = GridFunction.from_callable(g, lambda X: (X[:, 0] ** 2)[None])
    np.testing.assert_allclose(derivative(u2, (0,)).values[0], 2 * x, atol=1e-10)
    np.testing.assert_allclose(derivative(u2, (0, 0)).values[0], 2.0, atol=1e-9)
    u3 = GridFunction.from_callable(g, lambda X: (X[:, 0] ** 3)[None])
    np.testing.assert_allclose(derivative(u3, (0, 0, 0)).values[0], 6.0, atol=1e-7)
    err = np.abs(derivative(u3, (0,)).values[0] - 3 * x**2)[1:-1].max()
    assert err == pytest.approx(g.h**2, rel=1e-6)


def test_mixed_derivative_2d():
    g = UniformGrid.box(1.0, 21, 2)
    u = GridFunction.from_callable(g, lambda X: (X[:, 0] ** 2 * X[:, 1])[None])
    np.testing.assert_allclose(derivative(u, (0, 1)).values[0].ravel(), 2 * g.points[:, 0], atol=1e-9)


def test_ck_norm_of_sine():
    g = UniformGrid.box(np.pi, 2001)
    u = GridFunction.from_callable(g, lambda X: np.sin(X[:, 0])[None])
    assert ck_norm(u, 2) == pytest.approx(3.0, rel=1e-4)


def test_holder_of_linear_function():
    g = UniformGrid.box(1.0, 41)
    u = GridFunction.from_callable(g, lambda X: X[:, 0][None])
    # [x]_1 = 1 and [x]_{1/2} over all pairs = (2R)^{1/2}
    assert holder_seminorm(u, 1.0, None) == pytest.approx(1.0)
    assert holder_seminorm(u, 0.5, None) == pytest.approx(np.sqrt(2.0))
    assert holder_norm(u, 1.5, None) == pytest.approx(1.0 + 1.0 + 0.0, abs=1e-9)


@given(st.floats(0.1, 5.0), st.floats(0.1, 0.9))
def test_holder_norm_is_homogeneous(a, theta):
    g = UniformGrid.box(2.0, 41)
    u = GridFunction.from_callable(g, lambda X: np.tanh(X[:, 0])[None])
    assert holder_norm(u * a, theta) == pytest.approx(a * holder_norm(u, theta), rel=1e-12)


def test_trapezoid_weights_integrate_gaussian():
    g = UniformGrid.box(8.0, 801, 2)
    w = trapezoid_weights(g)
    f = np.exp(-np.sum(g.points**2, axis=1) / 2).reshape(g.shape)
    assert float(np.sum(w * f)) == pytest.approx(2 * np.pi, rel=1e-10)


@given(st.integers(1, 3), st.sampled_from([1, 2]))
def test_csv_roundtrip(m, d):
    g = UniformGrid.box(1.5, 7, d)
    rng = np.random.default_rng(m * 10 + d)
    u = GridFunction(g, rng.normal(size=(m,) + g.shape))
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "u.csv"
        save_grid_function(u, path, {"t": 0.5})
        back = load_grid_function(path)
    np.testing.assert_array_equal(back.values, u.values)
    assert back.grid == g
