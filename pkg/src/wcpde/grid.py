"""Uniform tensor grids on centred boxes, finite-difference stencils and discrete norms.

Conventions
-----------
* A grid function with ``m`` components stores ``values`` of shape
  ``(m, n, ..., n)`` (``d`` spatial axes, C order).  Flattening is
  component-major: index ``k * N + p``.
* ``ck_norm(u, k) = sum_{j<=k} max_c sup_x |D^j u_c(x)|`` where ``|D^j u_c|``
  is the Euclidean norm over all ordered multi-indices of order ``j``.
* Hölder quotients only scan pairs whose separation is at most ``r0`` grid
  cells (``r0=None`` scans every pair).
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import ConfigError, GridTooCoarse, NotNested

__all__ = [
    "BoxDomain",
    "UniformGrid",
    "GridFunction",
    "DiscreteNorms",
    "derivative",
    "neumann_close",
    "strip_ghost",
    "ck_norm",
    "holder_seminorm",
    "holder_norm",
    "sup_norm",
    "restrict",
    "discrete_norms",
    "trapezoid_weights",
    "save_grid_function",
    "load_grid_function",
]

DEFAULT_POINTS = {1: 401, 2: 101}
_SNAP = 1e-9


@dataclass(frozen=True)
class BoxDomain:
    """The box ``[-R, R]^d``; stands in for the ball ``B_R``."""

    radius: float
    dim: int = 1

    def __post_init__(self):
        if not self.radius > 0:
            raise ConfigError(f"box radius must be positive, got {self.radius}")
        if self.dim < 1:
            raise ConfigError("dimension must be >= 1")

    def label(self):
        return f"box radius {self.radius:g}"


@dataclass(frozen=True)
class UniformGrid:
    domain: BoxDomain
    n: int

    def __post_init__(self):
        if self.n < 5 or self.n % 2 == 0:
            raise ConfigError(f"points per axis must be odd and >= 5, got {self.n}")

    @classmethod
    def box(cls, radius, n=None, dim=1):
        return cls(BoxDomain(float(radius), dim), n or DEFAULT_POINTS.get(dim, 101))

    @classmethod
    def with_spacing(cls, radius, h, dim=1):
        cells = 2 * radius / h
        if abs(cells - round(cells)) > 1e-6 * max(1.0, cells):
            raise NotNested(f"radius {radius} is not a multiple of h/2 = {h / 2}")
        return cls(BoxDomain(float(radius), dim), int(round(cells)) + 1)

    @property
    def d(self):
        return self.domain.dim

    @property
    def radius(self):
        return self.domain.radius

    @property
    def h(self):
        return 2 * self.domain.radius / (self.n - 1)

    @property
    def shape(self):
        return (self.n,) * self.d

    @property
    def size(self):
        return self.n**self.d

    @cached_property
    def axis(self):
        return np.linspace(-self.radius, self.radius, self.n)

    @cached_property
    def mesh(self):
        return np.meshgrid(*([self.axis] * self.d), indexing="ij")

    @cached_property
    def points(self):
        """Grid points as an ``(N, d)`` array, in flattening order."""
        return np.stack([c.ravel() for c in self.mesh], axis=1)

    @cached_property
    def radial(self):
        return np.sqrt(np.sum(self.points**2, axis=1))

    def refine(self):
        """Grid with half the spacing on the same box."""
        return UniformGrid(self.domain, 2 * self.n - 1)

    def inner(self, fraction=0.5):
        """Largest grid-aligned box of radius ``<= fraction * R``."""
        cells = math.floor(fraction * self.radius / self.h + _SNAP)
        if cells < 2:
            raise GridTooCoarse("inner box would contain fewer than 5 points per axis")
        return BoxDomain(cells * self.h, self.d)

    def index_of(self, inner: BoxDomain):
        """Index offset and count of the sub-grid covering ``inner``."""
        if inner.dim != self.d:
            raise NotNested("dimension mismatch")
        cells = inner.radius / self.h
        if abs(cells - round(cells)) > _SNAP * max(1, cells) or inner.radius > self.radius * (1 + 1e-12):
            raise NotNested(f"{inner.label()} is not aligned with the grid of spacing {self.h:g}")
        c = int(round(cells))
        mid = (self.n - 1) // 2
        return mid - c, 2 * c + 1

    def subgrid(self, inner: BoxDomain):
        _, count = self.index_of(inner)
        return UniformGrid(inner, count)


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: UniformGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape == self.grid.shape or (v.ndim == 1 and v.size == self.grid.size):
            v = v.reshape((1,) + self.grid.shape)
        else:
            v = v.reshape((-1,) + self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, grid, func):
        """Sample ``func(points) -> (m, N)`` or ``(N,)`` on the grid."""
        vals = np.asarray(func(grid.points), dtype=float)
        return cls(grid, vals.reshape((-1,) + grid.shape))

    @classmethod
    def constant(cls, grid, vector):
        vec = np.atleast_1d(np.asarray(vector, dtype=float))
        return cls(grid, vec.reshape((-1,) + (1,) * grid.d) * np.ones((len(vec),) + grid.shape))

    @classmethod
    def from_flat(cls, grid, flat, m):
        return cls(grid, np.asarray(flat).reshape((m,) + grid.shape))

    @property
    def m(self):
        return self.values.shape[0]

    def flat(self):
        return self.values.reshape(-1).copy()

    def component(self, k):
        return self.values[k]

    def sup(self):
        """Per-component sup norm."""
        return np.abs(self.values).reshape(self.m, -1).max(axis=1)

    def _wrap(self, v):
        return GridFunction(self.grid, v)

    def __add__(self, other):
        return self._wrap(self.values + _vals(other))

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        return self._wrap(self.values - _vals(other))

    def __rsub__(self, other):
        return self._wrap(_vals(other) - self.values)

    def __mul__(self, a):
        return self._wrap(self.values * _vals(a))

    __rmul__ = __mul__

    def __truediv__(self, a):
        return self._wrap(self.values / _vals(a))

    def __neg__(self):
        return self._wrap(-self.values)

    def __abs__(self):
        return self._wrap(np.abs(self.values))


def _vals(x):
    return x.values if isinstance(x, GridFunction) else x


@dataclass(frozen=True)
class DiscreteNorms:
    sup: tuple
    sup_max: float
    ck: tuple
    holder: float
    theta: float


# --- stencils ---------------------------------------------------------------

_CENTRED = {
    1: (np.array([-1, 0, 1]), np.array([-0.5, 0.0, 0.5])),
    2: (np.array([-1, 0, 1]), np.array([1.0, -2.0, 1.0])),
    3: (np.array([-2, -1, 0, 1, 2]), np.array([-0.5, 1.0, 0.0, -1.0, 0.5])),
}


def _fd_weights(offsets, order):
    """Weights ``w`` with ``sum w_j f(x + o_j h) = h^order f^(order)(x)`` for polynomials of degree < len(offsets)."""
    offsets = np.asarray(offsets, dtype=float)
    k = len(offsets)
    vander = np.vander(offsets, k, increasing=True).T
    rhs = np.zeros(k)
    rhs[order] = math.factorial(order)
    return np.linalg.solve(vander, rhs)


def _derivative_1d(a, order, h, axis):
    """Derivative of ``order`` along ``axis``: centred inside, one-sided near the faces."""
    if order == 0:
        return a.copy()
    n = a.shape[axis]
    if n < 2 * order + 1:
        raise GridTooCoarse(f"order-{order} stencil needs {2 * order + 1} points per axis, grid has {n}")
    a = np.moveaxis(a, axis, 0)
    out = np.empty_like(a)
    offs, w = _CENTRED[order]
    half = int(offs.max())
    acc = np.zeros_like(a[half : n - half])
    for o, wj in zip(offs, w):
        if wj != 0.0:
            acc += wj * a[half + o : n - half + o]
    out[half : n - half] = acc
    width = order + 2  # second-order accurate one-sided stencil
    for i in range(half):
        lo = np.arange(width) - i
        wl = _fd_weights(lo, order)
        out[i] = np.tensordot(wl, a[i + lo], axes=(0, 0))
        j = n - 1 - i
        hi = -lo
        wh = _fd_weights(hi, order)
        out[j] = np.tensordot(wh, a[j + hi], axes=(0, 0))
    return np.moveaxis(out / h**order, 0, axis)


def derivative(u: GridFunction, multi_index):
    """Spatial derivative ``D_{i1 i2 ...} u`` of order ``len(multi_index) <= 3``.

    Mixed derivatives are compositions of one-dimensional stencils.
    """
    multi_index = tuple(multi_index)
    if len(multi_index) > 3:
        raise ValueError("derivative order must be <= 3")
    vals = u.values
    for ax in range(u.grid.d):
        p = multi_index.count(ax)
        if p:
            vals = _derivative_1d(vals, p, u.grid.h, axis=ax + 1)
    return GridFunction(u.grid, vals)


def _multi_indices(d, order):
    """Sorted multi-indices with the number of orderings each represents."""
    out = []
    for combo in itertools.combinations_with_replacement(range(d), order):
        count = math.factorial(order)
        for ax in range(d):
            count //= math.factorial(combo.count(ax))
        out.append((combo, count))
    return out


def _derivative_stack(u: GridFunction, order):
    """Array ``(m, K, *shape)`` of weighted order-``order`` derivatives.

    Weights are ``sqrt(multiplicity)`` so that the Euclidean norm over ``K``
    equals the norm over all ordered multi-indices.
    """
    parts = []
    for combo, count in _multi_indices(u.grid.d, order):
        parts.append(math.sqrt(count) * derivative(u, combo).values)
    return np.stack(parts, axis=1)


def neumann_close(u: GridFunction):
    """Pad every spatial axis with one ghost layer by even reflection.

    The ghost beyond a face copies the value one cell inside the face, so the
    centred normal difference at every face node is exactly zero.
    """
    pad = [(0, 0)] + [(1, 1)] * u.grid.d
    return np.pad(u.values, pad, mode="reflect")


def strip_ghost(extended, d):
    sl = (slice(None),) + (slice(1, -1),) * d
    return extended[sl]


def sup_norm(u: GridFunction):
    return float(np.max(np.abs(u.values))) if u.values.size else 0.0


def ck_norm(u: GridFunction, k):
    """``sum_{j=0..k} max_c sup |D^j u_c|`` (see module docstring)."""
    if not 0 <= k <= 3:
        raise ValueError("k must be in 0..3")
    total = sup_norm(u)
    for j in range(1, k + 1):
        stack = _derivative_stack(u, j)
        total += float(np.sqrt(np.sum(stack**2, axis=1)).max())
    return total


def _offsets(d, r0, n):
    """Lexicographically positive integer offsets with Euclidean length <= r0."""
    lim = n - 1 if r0 is None else min(int(math.floor(r0)), n - 1)
    rng = range(-lim, lim + 1)
    out = []
    for o in itertools.product(rng, repeat=d):
        if o <= (0,) * d:
            continue
        if r0 is not None and math.hypot(*o) > r0 + 1e-12:
            continue
        out.append(o)
    return out


def _holder_vec(field, theta, h, r0):
    """``max ||F(x) - F(y)||_2 / |x - y|^theta`` over scanned pairs; ``field`` is ``(K, *shape)``."""
    shape = field.shape[1:]
    d = len(shape)
    best = 0.0
    for o in _offsets(d, r0, shape[0]):
        src = []
        dst = []
        for oi, n in zip(o, shape):
            if oi >= 0:
                src.append(slice(0, n - oi))
                dst.append(slice(oi, n))
            else:
                src.append(slice(-oi, n))
                dst.append(slice(0, n + oi))
        diff = field[(slice(None),) + tuple(dst)] - field[(slice(None),) + tuple(src)]
        if diff.size == 0:
            continue
        dist = h * math.hypot(*o)
        q = float(np.sqrt(np.sum(diff**2, axis=0)).max()) / dist**theta
        best = max(best, q)
    return best


def holder_seminorm(u: GridFunction, theta, r0=8):
    """Discrete Hölder seminorm ``[u]_theta``, maximised over components."""
    if not 0 < theta <= 1:
        raise ValueError("theta must lie in (0, 1]")
    return max(_holder_vec(u.values[c][None], theta, u.grid.h, r0) for c in range(u.m))


def holder_norm(u: GridFunction, theta, r0=8):
    """``C^theta`` norm: ``ck_norm(u, floor(theta)) + [D^floor(theta) u]_frac``."""
    k = int(math.floor(theta + 1e-12))
    frac = theta - k
    base = ck_norm(u, k)
    if frac < 1e-12:
        return base
    if k == 0:
        return base + holder_seminorm(u, frac, r0)
    stack = _derivative_stack(u, k)
    return base + max(_holder_vec(stack[c], frac, u.grid.h, r0) for c in range(u.m))


def restrict(u: GridFunction, inner: BoxDomain):
    """Sample ``u`` on the coincident sub-grid covering ``inner``."""
    start, count = u.grid.index_of(inner)
    sl = (slice(None),) + (slice(start, start + count),) * u.grid.d
    return GridFunction(UniformGrid(inner, count), u.values[sl])


def discrete_norms(u: GridFunction, theta=0.5, r0=8):
    sups = tuple(float(s) for s in u.sup())
    ck = tuple(ck_norm(u, k) for k in range(4))
    return DiscreteNorms(sups, max(sups) if sups else 0.0, ck, holder_seminorm(u, theta, r0), theta)


def trapezoid_weights(grid: UniformGrid):
    """Tensor trapezoid weights on the grid, shape ``grid.shape``."""
    w1 = np.full(grid.n, grid.h)
    w1[[0, -1]] *= 0.5
    w = w1
    for _ in range(grid.d - 1):
        w = np.multiply.outer(w, w1)
    return w


# --- serialisation ----------------------------------------------------------


def save_grid_function(u: GridFunction, path, extra=None):
    """Write ``path`` (CSV: component, x_1..x_d, value) and ``path.json`` sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pts = u.grid.points
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["component"] + [f"x_{i + 1}" for i in range(u.grid.d)] + ["value"])
        for k in range(u.m):
            col = u.values[k].ravel()
            for p in range(u.grid.size):
                w.writerow([k] + [repr(float(c)) for c in pts[p]] + [repr(float(col[p]))])
    meta = {"R": u.grid.radius, "n_g": u.grid.n, "m": u.m, "d": u.grid.d}
    if extra:
        meta.update(extra)
    Path(str(path) + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_grid_function(path):
    path = Path(path)
    meta = json.loads(Path(str(path) + ".json").read_text())
    grid = UniformGrid.box(meta["R"], meta["n_g"], meta["d"])
    vals = np.zeros((meta["m"], grid.size))
    counts = np.zeros(meta["m"], dtype=int)
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        next(r)
        for row in r:
            k = int(row[0])
            vals[k, counts[k]] = float(row[-1])
            counts[k] += 1
    return GridFunction(grid, vals.reshape((meta["m"],) + grid.shape))
