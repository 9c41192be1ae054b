"""Closed-form and dense-algebra reference values, independent of the package's discretisation."""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg as sla

SQ3 = math.sqrt(3.0)

# Example 2 coupling matrix and the values printed for it in the source
EXAMPLE2_C = np.array([[-1.0, 0.0, -1.0], [0.0, -3.0, SQ3], [-1.0, SQ3, -2.0]])
EXAMPLE2_EIGS = np.sort([0.0, -3 + math.sqrt(2), -3 - math.sqrt(2)])
EXAMPLE2_ETA = np.array([-SQ3, 1.0, SQ3])
EXAMPLE2_XI = np.array([SQ3, 1.0, SQ3])


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def heat_gaussian(x, t, width=1.0, q=1.0):
    """Solution of ``u_t = q u_xx`` from ``exp(-x^2 / (2 width^2))``."""
    s2 = width**2 + 2 * q * t
    return width / np.sqrt(s2) * np.exp(-np.asarray(x) ** 2 / (2 * s2))


def ou_linear(x, t):
    """``u_t = u_xx - x u_x`` from ``f(x) = x``: ``u = x e^{-t}``."""
    return np.asarray(x) * math.exp(-t)


def ou_density(x):
    """Invariant density of ``u'' - x u'``: standard normal."""
    return np.exp(-np.asarray(x) ** 2 / 2) / math.sqrt(2 * math.pi)


def constant_coupling_flow(C0, f, t):
    """``e^{t C0} f`` for spatially constant data."""
    return sla.expm(t * np.asarray(C0)) @ np.asarray(f)


def constant_coupling_resolvent(C0, f, lam):
    """``(lam I - C0)^{-1} f``."""
    C0 = np.asarray(C0, dtype=float)
    return np.linalg.solve(lam * np.eye(len(C0)) - C0, np.asarray(f, dtype=float))


def green_heat_resolvent_1d(x, f_vals, h):
    """``(1 - d^2/dx^2)^{-1} f`` on the line by trapezoid convolution with ``e^{-|x-y|}/2``."""
    x = np.asarray(x)
    K = 0.5 * np.exp(-np.abs(x[:, None] - x[None, :]))
    w = np.full(x.size, h)
    w[[0, -1]] *= 0.5
    return K @ (w * f_vals)


def dense_semigroup(A, f, t):
    """``e^{t A} f`` for a small dense matrix."""
    return sla.expm(t * np.asarray(A)) @ np.asarray(f)
