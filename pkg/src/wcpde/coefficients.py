"""Radial-power coefficient fields ``s * f(t) * [x_a] * (1 + |x|^2)^p``.

Every coefficient of an operator family is one of these expressions.  The
spatial part is differentiated in closed form up to third order, the time
factor is one of three named forms (constant, sinusoidal, tabulated).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, OutOfClass

__all__ = ["TimeFactor", "CoefficientExpr", "ZERO"]


@dataclass(frozen=True)
class TimeFactor:
    """Scalar time profile multiplying a coefficient.

    ``kind`` is ``"const"`` (identically 1), ``"sin"``
    (``base + amp * sin(freq * t + phase)``) or ``"table"`` (piecewise-linear
    interpolation of ``(t, v)`` pairs, constant extrapolation).
    """

    kind: str = "const"
    amp: float = 0.0
    freq: float = 1.0
    phase: float = 0.0
    base: float = 1.0
    table: tuple = ()

    def __post_init__(self):
        if self.kind not in ("const", "sin", "table"):
            raise ConfigError(f"unknown time factor kind {self.kind!r}")
        if self.kind == "table":
            if len(self.table) < 1:
                raise ConfigError("tabulated time factor needs at least one node")
            ts = [p[0] for p in self.table]
            if any(b <= a for a, b in zip(ts, ts[1:])):
                raise ConfigError("tabulated time nodes must be strictly increasing")

    @classmethod
    def const(cls):
        return cls("const")

    @classmethod
    def sin(cls, amp, freq=1.0, phase=0.0, base=1.0):
        return cls("sin", amp=float(amp), freq=float(freq), phase=float(phase), base=float(base))

    @classmethod
    def tabulated(cls, pairs):
        return cls("table", table=tuple((float(t), float(v)) for t, v in pairs))

    @property
    def is_constant(self):
        if self.kind == "const":
            return True
        if self.kind == "sin":
            return self.amp == 0.0
        return len({v for _, v in self.table}) == 1

    def __call__(self, t):
        if self.kind == "const":
            return 1.0
        if self.kind == "sin":
            return self.base + self.amp * np.sin(self.freq * t + self.phase)
        ts, vs = zip(*self.table)
        return float(np.interp(t, ts, vs))

    def to_json(self):
        if self.kind == "const":
            return "const"
        if self.kind == "sin":
            d = {"amp": self.amp, "freq": self.freq, "phase": self.phase}
            if self.base != 1.0:
                d["base"] = self.base
            return {"sin": d}
        return {"table": [list(p) for p in self.table]}

    @classmethod
    def from_json(cls, obj):
        if obj is None or obj == "const":
            return cls.const()
        if isinstance(obj, dict) and "sin" in obj:
            p = obj["sin"]
            return cls.sin(p.get("amp", 0.0), p.get("freq", 1.0), p.get("phase", 0.0), p.get("base", 1.0))
        if isinstance(obj, dict) and "table" in obj:
            return cls.tabulated(obj["table"])
        raise ConfigError(f"cannot parse time factor {obj!r}")


@dataclass(frozen=True)
class CoefficientExpr:
    """``scale * time(t) * [x_axis] * (1 + |x|^2)^power``, optionally in absolute value.

    ``axis`` selects an optional linear factor ``x_axis``; drifts of the form
    ``-theta x_i (1+|x|^2)^beta`` use ``scale=-theta, axis=i, power=beta``.
    ``absolute`` evaluates ``|value|`` and is how the off-diagonal entries of
    the auxiliary coupling are represented; such expressions are not
    differentiable and refuse derivative requests.
    """

    scale: float = 0.0
    power: float = 0.0
    axis: int | None = None
    time: TimeFactor = field(default_factory=TimeFactor.const)
    absolute: bool = False

    def __post_init__(self):
        if self.power < 0:
            raise ConfigError(f"radial power must be >= 0, got {self.power}")

    @property
    def is_zero(self):
        return self.scale == 0.0

    @property
    def is_autonomous(self):
        return self.time.is_constant

    def time_value(self, t):
        return self.scale * self.time(t)

    def __call__(self, t, x):
        """Evaluate on points ``x`` of shape ``(N, d)``; returns shape ``(N,)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        c = self.time_value(t)
        if c == 0.0:
            return np.zeros(x.shape[0])
        r = 1.0 + np.einsum("ni,ni->n", x, x)
        val = c * r**self.power
        if self.axis is not None:
            val = val * x[:, self.axis]
        return np.abs(val) if self.absolute else val

    def with_abs(self):
        return replace(self, absolute=True)

    def derivative(self, t, x, order):
        """Closed-form spatial derivative tensor of the given order (0..3).

        Returns an array of shape ``(N,) + (d,) * order``.
        """
        if self.absolute:
            raise OutOfClass("absolute-value coefficients have no closed-form derivatives")
        if order == 0:
            return self(t, x)
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n, d = x.shape
        c = self.time_value(t)
        if c == 0.0:
            return np.zeros((n,) + (d,) * order)
        g = _radial_derivatives(x, self.power, order)
        if self.axis is None:
            return c * g[order]
        a = self.axis
        xa = x[:, a]
        e = np.zeros(d)
        e[a] = 1.0
        # Leibniz rule for x_a * g
        if order == 1:
            out = e[None, :] * g[0][:, None] + xa[:, None] * g[1]
        elif order == 2:
            out = (
                np.einsum("i,nj->nij", e, g[1])
                + np.einsum("j,ni->nij", e, g[1])
                + xa[:, None, None] * g[2]
            )
        elif order == 3:
            out = (
                np.einsum("i,njk->nijk", e, g[2])
                + np.einsum("j,nik->nijk", e, g[2])
                + np.einsum("k,nij->nijk", e, g[2])
                + xa[:, None, None, None] * g[3]
            )
        else:
            raise ValueError("derivative order must be in 0..3")
        return c * out

    def growth_exponent(self):
        """Exponent ``e`` with ``|value| ~ (1+|x|^2)^e`` as ``|x| -> inf``."""
        return self.power + (0.5 if self.axis is not None else 0.0)

    def to_json(self, scale_key="coef", power_key="gamma"):
        d = {scale_key: self.scale, power_key: self.power, "time_factor": self.time.to_json()}
        if self.axis is not None:
            d["axis"] = self.axis
        return d


ZERO = CoefficientExpr()


def _radial_derivatives(x, p, order):
    """Derivatives of ``g = (1+|x|^2)^p`` up to ``order``; list indexed by order."""
    n, d = x.shape
    r = 1.0 + np.einsum("ni,ni->n", x, x)
    eye = np.eye(d)
    out = [r**p]
    if order >= 1:
        out.append(2 * p * x * (r ** (p - 1))[:, None])
    if order >= 2:
        a = 2 * p * r ** (p - 1)
        b = 4 * p * (p - 1) * r ** (p - 2)
        out.append(a[:, None, None] * eye + b[:, None, None] * np.einsum("ni,nj->nij", x, x))
    if order >= 3:
        b = 4 * p * (p - 1) * r ** (p - 2)
        c3 = 8 * p * (p - 1) * (p - 2) * r ** (p - 3)
        sym = (
            np.einsum("ij,nk->nijk", eye, x)
            + np.einsum("ik,nj->nijk", eye, x)
            + np.einsum("jk,ni->nijk", eye, x)
        )
        out.append(b[:, None, None, None] * sym + c3[:, None, None, None] * np.einsum("ni,nj,nk->nijk", x, x, x))
    return out
