"""Initial data and forcings: random smooth fields, bumps, and scaled step profiles."""

from __future__ import annotations

import ast
import math

import numpy as np

from .errors import ConfigError
from .grid import GridFunction, UniformGrid

__all__ = [
    "RandomSmoothField",
    "random_smooth",
    "gaussian",
    "constant",
    "step_profile",
    "expression",
    "initial_from_spec",
]


class RandomSmoothField:
    """Fixed random trigonometric sum ``sum_j a_j cos(<w_j, x> + phi_j)`` per component.

    The amplitudes are scaled so that the sup over the reference grid equals
    ``amplitude``; an optional Gaussian envelope of width ``envelope``
    localises the field.
    """

    def __init__(self, d, m, rng, n_modes=4, bandwidth=1.5, amplitude=1.0, envelope=None, reference=None):
        self.d, self.m = d, m
        self.freq = rng.uniform(-bandwidth, bandwidth, size=(m, n_modes, d))
        self.phase = rng.uniform(0.0, 2 * np.pi, size=(m, n_modes))
        self.coef = rng.uniform(-1.0, 1.0, size=(m, n_modes))
        self.envelope = envelope
        self.scale = 1.0
        if reference is not None:
            peak = np.abs(self(reference.points)).max()
            self.scale = amplitude / peak if peak > 0 else 1.0

    def __call__(self, X):
        X = np.atleast_2d(X)
        arg = np.einsum("kjd,nd->kjn", self.freq, X) + self.phase[:, :, None]
        val = np.einsum("kj,kjn->kn", self.coef, np.cos(arg))
        if self.envelope is not None:
            val = val * np.exp(-np.sum(X**2, axis=1) / (2 * self.envelope**2))[None]
        return self.scale * val


def random_smooth(grid: UniformGrid, m, rng, n_modes=4, bandwidth=1.5, amplitude=1.0, envelope=None):
    """Random smooth GridFunction with sup norm ``amplitude``."""
    field = RandomSmoothField(grid.d, m, rng, n_modes, bandwidth, amplitude, envelope, reference=grid)
    return GridFunction.from_callable(grid, field)


def gaussian(center=0.0, width=1.0, weights=(1.0,)):
    """Callable Gaussian bump ``w_k exp(-|x - c|^2 / (2 width^2))``."""
    weights = np.asarray(weights, dtype=float)

    def f(X):
        X = np.atleast_2d(X)
        g = np.exp(-np.sum((X - center) ** 2, axis=1) / (2 * width**2))
        return weights[:, None] * g[None]

    return f


def constant(vector):
    vector = np.asarray(vector, dtype=float)

    def f(X):
        return vector[:, None] * np.ones(np.atleast_2d(X).shape[0])[None]

    return f


def _logcosh(z):
    a = np.abs(z)
    return a + np.log1p(np.exp(-2 * a)) - math.log(2.0)


def step_profile(order, width, weights=(1.0,), envelope=None, axis=0):
    """Profile ``width^order F_order(x_axis / width)`` with bounded ``C^order`` norm.

    ``F_0 = tanh`` and ``F_1 = log cosh``, so that the ``order``-th derivative
    is an O(1) smoothed step while the next derivative is of size ``1/width``.  An optional wide
    Gaussian envelope keeps the profile bounded on large boxes.
    """
    weights = np.asarray(weights, dtype=float)

    def f(X):
        X = np.atleast_2d(X)
        z = X[:, axis] / width
        if order == 0:
            v = np.tanh(z)
        elif order == 1:
            v = width * _logcosh(z)
        else:
            raise ConfigError("step profiles are available for orders 0 and 1")
        if envelope is not None:
            v = v * np.exp(-np.sum(X**2, axis=1) / (2 * envelope**2))
        return weights[:, None] * v[None]

    return f


_ALLOWED = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "tanh": np.tanh,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "log": np.log,
    "pi": math.pi,
}


def expression(text, m=1):
    """Callable from a whitelisted arithmetic expression in ``x`` (d=1) or ``x1, x2`` and ``r``."""
    tree = ast.parse(text, mode="eval")
    for node in ast.walk(tree):
        if isinstance(node, ast.Name) and node.id not in _ALLOWED and node.id not in ("x", "x1", "x2", "r"):
            raise ConfigError(f"name {node.id!r} not allowed in expressions")
        if isinstance(node, (ast.Attribute, ast.Subscript, ast.Lambda, ast.Call)) and not (
            isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
        ):
            raise ConfigError("only plain function calls are allowed in expressions")
    code = compile(tree, "<expression>", "eval")

    def f(X):
        X = np.atleast_2d(X)
        env = dict(_ALLOWED)
        env.update({"x": X[:, 0], "x1": X[:, 0], "r": np.sqrt(np.sum(X**2, axis=1))})
        if X.shape[1] > 1:
            env["x2"] = X[:, 1]
        v = np.broadcast_to(np.asarray(eval(code, {"__builtins__": {}}, env), dtype=float), (X.shape[0],))
        return np.tile(v, (m, 1))

    return f


def initial_from_spec(spec, grid: UniformGrid, m, seed=0):
    """Initial datum from the experiment-spec ``initial`` block."""
    spec = dict(spec or {"kind": "gaussian"})
    kind = spec.get("kind")
    if kind == "gaussian":
        fn = gaussian(spec.get("center", 0.0), spec.get("width", 1.0), spec.get("weights", [1.0] * m))
    elif kind == "constant":
        fn = constant(spec.get("value", [1.0] * m))
    elif kind == "random-smooth":
        rng = np.random.default_rng(spec.get("seed", seed))
        return random_smooth(grid, m, rng, spec.get("modes", 4), spec.get("bandwidth", 1.5),
                             spec.get("amplitude", 1.0), spec.get("envelope"))
    elif kind == "expression":
        fn = expression(spec["expr"], m)
    else:
        raise ConfigError(f"unknown initial kind {kind!r}")
    u = GridFunction.from_callable(grid, fn)
    if u.m != m:
        raise ConfigError(f"initial datum has {u.m} components, operator has {m}")
    return u
