"""Weakly coupled operator families and their auxiliary variants.

``(A(t) u)_k = Tr(Q^k D^2 u_k) + <b^k, grad u_k> + (C u)_k``

An :class:`OperatorFamily` is built from radial-power
:class:`~wcpde.coefficients.CoefficientExpr` entries.  The auxiliary family
replaces off-diagonal coupling entries by their absolute values; the tilde
family further adds ``(1 + |M_k|) / m`` to every entry of row ``k``, where
``M_k`` is the row sum of the auxiliary coupling.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coefficients import ZERO, CoefficientExpr, TimeFactor
from .errors import ConfigError, EllipticityViolated, OutOfClass, UnboundedAbove
from .grid import GridFunction, UniformGrid, holder_seminorm

__all__ = [
    "OperatorFamily",
    "AuxiliaryFamily",
    "TildeFamily",
    "FrozenFamily",
    "RowSumBound",
    "Verdict",
    "HypothesisReport",
    "evaluate",
    "derive_auxiliary",
    "row_sum_bound",
    "derive_tilde",
    "check_hypotheses",
    "apply_operator",
    "coefficient_norms",
    "irreducible",
    "irreducible_bruteforce",
    "load_operator",
    "operator_from_config",
]


class _Family:
    """Evaluation interface shared by every operator variant.

    Subclasses provide ``d``, ``m``, ``is_autonomous`` and the three
    vectorised evaluators returning arrays over points ``x`` of shape
    ``(N, d)``: diffusion ``(m, d, d, N)``, drift ``(m, d, N)`` and coupling
    ``(m, m, N)``.
    """

    name = "family"

    def frozen(self, tbar):
        return FrozenFamily(self, float(tbar))

    def min_ellipticity(self, t, x):
        Q = self.diffusion(t, x)
        return float(min(np.linalg.eigvalsh(np.moveaxis(Q[k], -1, 0)).min() for k in range(self.m)))

    def require_elliptic(self, t, grid: UniformGrid):
        mu = self.min_ellipticity(t, grid.points)
        if not mu > 0:
            raise EllipticityViolated(f"minimum eigenvalue of Q^k is {mu:.3g} at t={t:g}")
        return mu

    def row_sums(self, t, x):
        return self.coupling(t, x).sum(axis=1)


@dataclass(frozen=True, eq=False)
class OperatorFamily(_Family):
    d: int
    m: int
    Q: tuple
    b: tuple
    C: tuple
    name: str = "custom"

    def __post_init__(self):
        Q = tuple(tuple(tuple(row) for row in Qk) for Qk in self.Q)
        b = tuple(tuple(bk) for bk in self.b)
        C = tuple(tuple(row) for row in self.C)
        if len(Q) != self.m or any(len(Qk) != self.d or any(len(r) != self.d for r in Qk) for Qk in Q):
            raise ConfigError("Q must be m matrices of size d x d")
        if len(b) != self.m or any(len(bk) != self.d for bk in b):
            raise ConfigError("b must be m vectors of length d")
        if len(C) != self.m or any(len(r) != self.m for r in C):
            raise ConfigError("C must be an m x m matrix")
        for Qk in Q:
            for i, j in itertools.combinations(range(self.d), 2):
                if Qk[i][j] != Qk[j][i]:
                    raise ConfigError("diffusion matrices must be symmetric")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "C", C)

    def _all(self):
        for Qk in self.Q:
            for row in Qk:
                yield from row
        for bk in self.b:
            yield from bk
        for row in self.C:
            yield from row

    @property
    def is_autonomous(self):
        return all(e.is_autonomous for e in self._all())

    def diffusion(self, t, x):
        x = np.atleast_2d(x)
        out = np.zeros((self.m, self.d, self.d, x.shape[0]))
        for k in range(self.m):
            for i in range(self.d):
                for j in range(i, self.d):
                    e = self.Q[k][i][j]
                    if not e.is_zero:
                        out[k, i, j] = e(t, x)
                        out[k, j, i] = out[k, i, j]
        return out

    def drift(self, t, x):
        x = np.atleast_2d(x)
        out = np.zeros((self.m, self.d, x.shape[0]))
        for k in range(self.m):
            for i in range(self.d):
                e = self.b[k][i]
                if not e.is_zero:
                    out[k, i] = e(t, x)
        return out

    def coupling(self, t, x):
        x = np.atleast_2d(x)
        out = np.zeros((self.m, self.m, x.shape[0]))
        for k in range(self.m):
            for h in range(self.m):
                e = self.C[k][h]
                if not e.is_zero:
                    out[k, h] = e(t, x)
        return out

    def with_coupling(self, C, name=None):
        return OperatorFamily(self.d, self.m, self.Q, self.b, C, name or self.name)

    def diagonal_part(self, k):
        """Scalar operator ``Tr(Q^k D^2) + <b^k, grad> + c_kk`` for one equation."""
        return OperatorFamily(self.d, 1, (self.Q[k],), (self.b[k],), ((self.C[k][k],),), f"{self.name}[{k}]")

    def scalar_part(self, k=0):
        """Scalar operator ``Tr(Q^k D^2) + <b^k, grad>`` without potential."""
        return OperatorFamily(self.d, 1, (self.Q[k],), (self.b[k],), ((ZERO,),), f"{self.name}[{k}]-scalar")

    def to_config(self):
        return {
            "d": self.d,
            "m": self.m,
            "Q": [[[e.to_json("zeta", "alpha") for e in row] for row in Qk] for Qk in self.Q],
            "b": [[_drift_json(e) for e in bk] for bk in self.b],
            "C": [[e.to_json("coef", "gamma") for e in row] for row in self.C],
        }


def _drift_json(e: CoefficientExpr):
    d = {"theta": -e.scale, "beta": e.power, "time_factor": e.time.to_json()}
    if e.axis is not None:
        d["axis"] = e.axis
    return d


@dataclass(frozen=True, eq=False)
class AuxiliaryFamily(OperatorFamily):
    """Same diffusion and drift, coupling ``c^P_kk = c_kk``, ``c^P_kh = |c_kh|``."""

    def M_field(self, t, x):
        """Row sums ``M_k(t, x)``, shape ``(m, N)``."""
        return self.row_sums(t, np.atleast_2d(x))


@dataclass(frozen=True, eq=False)
class TildeFamily(_Family):
    """Coupling ``c^P_kj + (1 + |M_k|) / m``; everything else from ``aux``."""

    aux: AuxiliaryFamily

    @property
    def d(self):
        return self.aux.d

    @property
    def m(self):
        return self.aux.m

    @property
    def name(self):
        return self.aux.name + "~"

    @property
    def is_autonomous(self):
        return self.aux.is_autonomous

    def diffusion(self, t, x):
        return self.aux.diffusion(t, x)

    def drift(self, t, x):
        return self.aux.drift(t, x)

    def coupling(self, t, x):
        cp = self.aux.coupling(t, x)
        Mk = cp.sum(axis=1)
        return cp + ((1.0 + np.abs(Mk)) / self.m)[:, None, :]

    def row_sum_defect(self, t, x):
        """Largest ``|sum_j c~_kj - (1 + 2 M_k^+)|`` over ``x``."""
        x = np.atleast_2d(x)
        Mk = self.aux.M_field(t, x)
        return float(np.max(np.abs(self.row_sums(t, x) - (1.0 + 2.0 * np.maximum(Mk, 0.0)))))


@dataclass(frozen=True, eq=False)
class FrozenFamily(_Family):
    """Coefficients of ``base`` frozen at time ``tbar``."""

    base: _Family
    tbar: float

    @property
    def d(self):
        return self.base.d

    @property
    def m(self):
        return self.base.m

    @property
    def name(self):
        return f"{self.base.name}@{self.tbar:g}"

    is_autonomous = True

    def diffusion(self, t, x):
        return self.base.diffusion(self.tbar, x)

    def drift(self, t, x):
        return self.base.drift(self.tbar, x)

    def coupling(self, t, x):
        return self.base.coupling(self.tbar, x)

    def frozen(self, tbar):
        return FrozenFamily(self.base, float(tbar))

    def scalar_part(self, k=0):
        return FrozenFamily(self.base.scalar_part(k), self.tbar)

    def diagonal_part(self, k):
        return FrozenFamily(self.base.diagonal_part(k), self.tbar)


def auxiliary_of(family):
    """Auxiliary variant of any family (frozen families stay frozen)."""
    if isinstance(family, FrozenFamily):
        return FrozenFamily(auxiliary_of(family.base), family.tbar)
    return derive_auxiliary(family)


# --- operations -------------------------------------------------------------


def evaluate(op, t, x):
    """Coefficients at a single point: ``(list of Q^k, list of b^k, C)``."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    Q = op.diffusion(t, x)[..., 0]
    b = op.drift(t, x)[..., 0]
    C = op.coupling(t, x)[..., 0]
    return [Q[k] for k in range(op.m)], [b[k] for k in range(op.m)], C


def derive_auxiliary(op: OperatorFamily) -> AuxiliaryFamily:
    C = tuple(
        tuple(e if (h == k or e.is_zero) else e.with_abs() for h, e in enumerate(row))
        for k, row in enumerate(op.C)
    )
    return AuxiliaryFamily(op.d, op.m, op.Q, op.b, C, op.name + "^P")


def _time_samples(interval, n_t, autonomous):
    s, T = interval
    if autonomous or s == T:
        return np.array([float(s)])
    return np.linspace(s, T, n_t)


def _probe_radii(R):
    return (R / 3.0, 2.0 * R / 3.0, R)


def _shell_sup(values, radial, radii):
    """Sup of ``values`` over the boxes/balls ``|x|_inf <= r`` for each probe radius."""
    return [float(values[radial <= r * (1 + 1e-12)].max()) for r in radii]


def _probe_growth(name, values, xinf, R):
    radii = _probe_radii(R)
    sups = _shell_sup(values, xinf, radii)
    grows = all(b > a + 1e-12 * max(1.0, abs(a)) for a, b in zip(sups, sups[1:]))
    if grows:
        raise UnboundedAbove(
            f"{name} grows monotonically toward the boundary: sups {sups} at radii {radii}", radii, sups
        )
    return radii, sups


@dataclass(frozen=True)
class RowSumBound:
    M_J: float
    M_per_row: tuple
    argmax: tuple
    probe_radii: tuple
    probe_values: tuple
    field: np.ndarray = field(repr=False, default=None)


def row_sum_bound(aux, interval, grid: UniformGrid, n_t=9) -> RowSumBound:
    """``M_J = max_k sup_{J x box} sum_j c^P_kj`` with a growth probe at three radii.

    Raises :class:`UnboundedAbove` when the sup over nested boxes of radius
    R/3, 2R/3, R increases strictly, i.e. the row sums keep growing toward the
    boundary of the truncated domain.
    """
    if not isinstance(aux, (AuxiliaryFamily, TildeFamily, FrozenFamily)):
        aux = derive_auxiliary(aux)
    ts = _time_samples(interval, n_t, aux.is_autonomous)
    X = grid.points
    Mk = np.stack([aux.row_sums(t, X) for t in ts])  # (n_t, m, N)
    worst = Mk.max(axis=(0, 1))
    xinf = np.abs(X).max(axis=1)
    radii, sups = _probe_growth("row sum of C^P", worst, xinf, grid.radius)
    per_row = Mk.max(axis=(0, 2))
    ti, ki, pi = np.unravel_index(np.argmax(Mk), Mk.shape)
    return RowSumBound(
        float(per_row.max()),
        tuple(float(v) for v in per_row),
        (float(ts[ti]), tuple(float(c) for c in X[pi]), int(ki)),
        radii,
        tuple(sups),
        Mk,
    )


def derive_tilde(aux, interval=None) -> TildeFamily:
    if not isinstance(aux, AuxiliaryFamily):
        aux = derive_auxiliary(aux)
    return TildeFamily(aux)


# --- irreducibility ---------------------------------------------------------


def _support_pattern(family, ts, X):
    pat = np.zeros((family.m, family.m), dtype=bool)
    for t in ts:
        pat |= np.any(np.abs(family.coupling(t, X)) > 0, axis=2)
    return pat


def irreducible(pattern):
    """Strong connectivity of the digraph ``k -> h`` (``h != k``) given by ``pattern``."""
    pattern = np.asarray(pattern, dtype=bool)
    m = pattern.shape[0]
    adj = pattern & ~np.eye(m, dtype=bool)
    for start, mat in ((0, adj), (0, adj.T)):
        seen = {start}
        stack = [start]
        while stack:
            v = stack.pop()
            for w in np.flatnonzero(mat[v]):
                if w not in seen:
                    seen.add(int(w))
                    stack.append(int(w))
        if len(seen) != m:
            return False
    return True


def irreducible_bruteforce(pattern):
    """No nontrivial ``K`` with ``c_ij = 0`` for all ``i in K``, ``j not in K``."""
    pattern = np.asarray(pattern, dtype=bool)
    m = pattern.shape[0]
    for r in range(1, m):
        for K in itertools.combinations(range(m), r):
            rest = [j for j in range(m) if j not in K]
            if not pattern[np.ix_(list(K), rest)].any():
                return False
    return True


# --- hypotheses -------------------------------------------------------------


@dataclass
class Verdict:
    status: str  # "holds" | "violated" | "not-checkable-symbolically"
    detail: str = ""
    witness: dict | None = None

    def __post_init__(self):
        if self.status == "violated" and self.witness is None:
            self.witness = {}

    def to_json(self):
        out = {"status": self.status, "detail": self.detail}
        if self.witness is not None:
            out["witness"] = self.witness
        return out


@dataclass
class HypothesisReport:
    which: str
    verdicts: dict
    constants: dict

    @property
    def all_hold(self):
        return all(v.status == "holds" for v in self.verdicts.values())

    def violated(self):
        return [k for k, v in self.verdicts.items() if v.status == "violated"]

    def to_json(self):
        return {
            "which": self.which,
            "all_hold": self.all_hold,
            "verdicts": {k: v.to_json() for k, v in self.verdicts.items()},
            "constants": self.constants,
        }

    def dumps(self):
        return json.dumps(self.to_json(), indent=2, sort_keys=True, default=_json_default)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _witness(t, x, **extra):
    w = {"t": float(t), "x": [float(c) for c in np.atleast_1d(x)]}
    w.update(extra)
    return w


def _in_radial_class(op):
    if not isinstance(op, OperatorFamily):
        return False
    for e in op._all():
        if e.time.kind == "table" and not e.is_zero:
            return False
    return True


def _tf_range(e: CoefficientExpr, ts):
    v = np.array([e.time_value(t) for t in ts])
    return v.min(), v.max()


def _radial_conditions(op: OperatorFamily, ts, smooth):
    """Exponent and sign conditions of the radial-power family (decided exactly)."""
    out = {}
    d, m = op.d, op.m
    bad = []
    for k in range(m):
        for i in range(d):
            e = op.b[k][i]
            if e.is_zero:
                bad.append(f"b^{k}_{i} vanishes")
                continue
            if e.axis != i:
                bad.append(f"b^{k}_{i} is not of the form -eta x_{i} (1+|x|^2)^beta")
                continue
            eta_min = -_tf_range(e, ts)[1]
            if not eta_min > 0:
                bad.append(f"eta^{k}_{i}(t) not positive on the interval (min {eta_min:.3g})")
        for i in range(d):
            for j in range(d):
                if op.Q[k][i][j].axis is not None:
                    bad.append(f"q^{k}_{i}{j} carries a linear factor")
    out["(a) positivity/class"] = Verdict("violated" if bad else "holds", "; ".join(bad) or "radial-power form")

    bad = []
    for k in range(m):
        ckk = op.C[k][k]
        if ckk.is_zero or not _tf_range(ckk, ts)[1] < 0:
            bad.append(f"theta_{k}{k}(t) not negative")
        for h in range(m):
            if h != k and not op.C[k][h].is_zero and not op.C[k][h].power < ckk.power:
                bad.append(f"gamma_{k}{h}={op.C[k][h].power:g} >= gamma_{k}{k}={ckk.power:g}")
    pattern = np.array([[not op.C[k][h].is_zero for h in range(m)] for k in range(m)])
    if not irreducible(pattern):
        bad.append("theta pattern is reducible")
    out["(b) coupling signs/exponents"] = Verdict("violated" if bad else "holds", "; ".join(bad))

    bad = []
    for k in range(m):
        diag = [op.Q[k][i][i].power for i in range(d)]
        off = [op.Q[k][i][j].power for i in range(d) for j in range(d) if i != j and not op.Q[k][i][j].is_zero]
        if off and min(diag) < max(off):
            bad.append(f"alpha_min^{k} < max off-diagonal alpha")
        for t in ts:
            zeta = np.array([[op.Q[k][i][j].time_value(t) for j in range(d)] for i in range(d)])
            offn = [math.sqrt(sum(zeta[i, j] ** 2 for j in range(d) if j != i)) for i in range(d)]
            if not min(np.diag(zeta)) - max(offn) > 0:
                bad.append(f"diagonal dominance of zeta^{k} fails at t={t:g}")
                break
    out["(c) ellipticity of zeta"] = Verdict("violated" if bad else "holds", "; ".join(bad))

    bad = []
    for k in range(m):
        amax = max(op.Q[k][i][i].power for i in range(d))
        cap = 1 + max([op.C[k][k].power] + [op.b[k][i].power for i in range(d)])
        if amax > cap:
            bad.append(f"max alpha_ii^{k}={amax:g} > {cap:g}")
    out["(d) growth balance"] = Verdict("violated" if bad else "holds", "; ".join(bad))

    if smooth:
        bad = []
        for k in range(m):
            ref = op.b[k][0]
            for i in range(1, d):
                e = op.b[k][i]
                if (e.scale, e.power, e.time) != (ref.scale, ref.power, ref.time):
                    bad.append(f"eta^{k}_i or beta^{k}_i depend on i")
        out["(a') isotropic drift"] = Verdict("violated" if bad else "holds", "; ".join(bad))
        bad = []
        for k in range(m):
            amin = min(op.Q[k][i][i].power for i in range(d))
            for i in range(d):
                for j in range(d):
                    e = op.Q[k][i][j]
                    if not e.is_zero and e.power > amin + 0.5:
                        bad.append(f"alpha^{k}_{i}{j}={e.power:g} > alpha_min+1/2")
        out["(b') exponent spread"] = Verdict("violated" if bad else "holds", "; ".join(bad))
    return out


def _lyapunov_ratio(family, t, X):
    """``(A^P phi)_k / phi_k`` for ``phi = (1+|x|^2) 1``, shape ``(m, N)``."""
    r = 1.0 + np.sum(X**2, axis=1)
    Q = family.diffusion(t, X)
    B = family.drift(t, X)
    C = family.coupling(t, X)
    trace = np.einsum("kiin->kn", Q)
    bx = np.einsum("kin,ni->kn", B, X)
    return (2 * trace + 2 * bx) / r + C.sum(axis=1)


def check_hypotheses(op, which="base", interval=(0.0, 1.0), grid: UniformGrid | None = None, n_t=9, symbolic=None):
    """Decide the standing hypotheses for ``op`` on ``interval`` x ``grid``.

    ``which`` is ``"base"``, ``"smooth"`` or ``"special-case"``.  Exponent
    conditions of the radial-power family are decided exactly from the
    exponents; everything else is sampled on the grid and a set of times.
    ``symbolic=True`` forces the exact checks and raises :class:`OutOfClass`
    for tabulated coefficients; ``None`` runs them when possible.
    """
    if which not in ("base", "smooth", "special-case"):
        raise ConfigError(f"unknown hypothesis set {which!r}")
    grid = grid or UniformGrid.box(6.0, 121, op.d)
    ts = _time_samples(interval, n_t, op.is_autonomous)
    X = grid.points
    xinf = np.abs(X).max(axis=1)
    verdicts = {}
    consts = {}
    in_class = _in_radial_class(op)
    if symbolic and not in_class:
        raise OutOfClass("symbolic checks need radial-power coefficients with analytic time factors")
    dense_ts = np.linspace(interval[0], interval[1], 201)

    if which in ("base", "smooth"):
        aux = derive_auxiliary(op) if isinstance(op, OperatorFamily) else op
        mu0, wit = np.inf, None
        for t in ts:
            Q = op.diffusion(t, X)
            for k in range(op.m):
                ev = np.linalg.eigvalsh(np.moveaxis(Q[k], -1, 0)).min(axis=1)
                i = int(np.argmin(ev))
                if ev[i] < mu0:
                    mu0, wit = float(ev[i]), _witness(t, X[i], component=k)
        consts["mu_0"] = mu0
        verdicts["ellipticity"] = Verdict("holds" if mu0 > 0 else "violated", f"mu_0={mu0:.6g}", None if mu0 > 0 else wit)

        lam = np.stack([_lyapunov_ratio(aux, t, X) for t in ts])
        worst = lam.max(axis=(0, 1))
        try:
            _probe_growth("Lyapunov ratio", worst, xinf, grid.radius)
            lam_J = float(lam.max())
            consts["lambda_J"] = lam_J
            verdicts["lyapunov"] = Verdict("holds", f"A^P phi <= {lam_J:.6g} phi with phi=(1+|x|^2)1")
        except UnboundedAbove as exc:
            ti, ki, pi = np.unravel_index(np.argmax(lam), lam.shape)
            verdicts["lyapunov"] = Verdict("violated", str(exc), _witness(ts[ti], X[pi], component=int(ki)))

        pattern = _support_pattern(aux, ts, X)
        irr = irreducible(pattern)
        verdicts["irreducibility"] = Verdict(
            "holds" if irr else "violated",
            f"coupling pattern {pattern.astype(int).tolist()}",
            None if irr else {"pattern": pattern.astype(int).tolist()},
        )
        try:
            rsb = row_sum_bound(aux, interval, grid, n_t)
            consts["M_J"] = rsb.M_J
            verdicts["row sums bounded above"] = Verdict("holds", f"M_J={rsb.M_J:.6g}")
        except UnboundedAbove as exc:
            verdicts["row sums bounded above"] = Verdict("violated", str(exc), {"radii": exc.radii, "sups": exc.values})

        if in_class:
            verdicts.update(_radial_conditions(op, dense_ts, smooth=(which == "smooth")))
        else:
            verdicts["radial-power conditions"] = Verdict("not-checkable-symbolically", "tabulated coefficients")

        if which == "smooth":
            if in_class:
                consts.update(_smooth_constants(op, ts, grid))
            else:
                verdicts["derivative bounds"] = Verdict("not-checkable-symbolically", "tabulated coefficients")

    else:
        verdicts.update(_special_case(op, grid, consts))
    return HypothesisReport(which, verdicts, consts)


def _smooth_constants(op, ts, grid):
    """Sampled constants ``L_k``, ``scrM_k`` (B_{k,2}=B_{k,3}=1), ``C_bar`` and the growth constant."""
    X = grid.points
    r = 1.0 + np.sum(X**2, axis=1)
    out = {"L_k": [], "scrM_k": [], "C_bar": 0.0, "growth_C": 0.0}
    aux = derive_auxiliary(op)
    for k in range(op.m):
        L, scrM = 0.0, -np.inf
        for t in ts:
            Q = op.diffusion(t, X)[k]
            mu = np.linalg.eigvalsh(np.moveaxis(Q, -1, 0)).min(axis=1)
            for i in range(op.d):
                for j in range(op.d):
                    e = op.Q[k][i][j]
                    for order in (1, 2, 3):
                        der = e.derivative(t, X, order).reshape(len(X), -1)
                        L = max(L, float((np.linalg.norm(der, axis=1) / mu).max()))
            J = np.stack([op.b[k][i].derivative(t, X, 1) for i in range(op.d)], axis=1)  # (N, d, d)
            rk = np.linalg.eigvalsh(0.5 * (J + np.swapaxes(J, 1, 2))).max(axis=1)
            b2 = sum(np.linalg.norm(op.b[k][i].derivative(t, X, 2).reshape(len(X), -1), axis=1) for i in range(op.d))
            b3 = sum(np.linalg.norm(op.b[k][i].derivative(t, X, 3).reshape(len(X), -1), axis=1) for i in range(op.d))
            scrM = max(scrM, float(((rk + b2 + b3) / mu).max()))
            Qx = np.einsum("ijn,nj->ni", Q, X)
            tr = np.einsum("iin->n", Q)
            bx = np.einsum("in,ni->n", op.drift(t, X)[k], X)
            lhs = np.maximum(np.abs(Qx).max(axis=1), np.maximum(np.abs(tr), bx))
            out["growth_C"] = max(out["growth_C"], float((lhs / (r * mu)).max()))
            Mk = aux.row_sums(t, X)[k]
            for h in range(op.m):
                for order in (1, 2, 3):
                    der = op.C[k][h].derivative(t, X, order).reshape(len(X), -1)
                    out["C_bar"] = max(out["C_bar"], float((np.linalg.norm(der, axis=1) / (1 + np.abs(Mk))).max()))
        out["L_k"].append(L)
        out["scrM_k"].append(scrM)
    return out


def _special_case(op, grid, consts):
    X = grid.points
    xinf = np.abs(X).max(axis=1)
    verdicts = {}
    t0 = 0.0
    if not op.is_autonomous:
        verdicts["autonomous"] = Verdict("violated", "time-dependent coefficients", _witness(t0, X[0]))
    Q = op.diffusion(t0, X)
    B = op.drift(t0, X)
    same = all(np.allclose(Q[k], Q[0]) and np.allclose(B[k], B[0]) for k in range(op.m))
    verdicts["shared diffusion and drift"] = Verdict("holds" if same else "violated", "", None if same else {})
    mu0 = float(np.linalg.eigvalsh(np.moveaxis(Q[0], -1, 0)).min())
    consts["mu_0"] = mu0
    verdicts["ellipticity"] = Verdict("holds" if mu0 > 0 else "violated", f"mu_0={mu0:.6g}", None if mu0 > 0 else {})

    aux = derive_auxiliary(op)
    C = op.coupling(t0, X)
    CP = aux.coupling(t0, X)
    evP = np.linalg.eigvalsh(np.moveaxis(0.5 * (CP + np.swapaxes(CP, 0, 1)), -1, 0))
    top = evP.max(axis=1)
    i = int(np.argmax(top))
    consts["max_eig_sym_CP"] = float(top[i])
    nsd = top[i] <= 1e-10
    verdicts["C^P negative semidefinite"] = Verdict(
        "holds" if nsd else "violated", f"max eigenvalue {top[i]:.3g}", None if nsd else _witness(t0, X[i])
    )

    r = 1.0 + np.sum(X**2, axis=1)
    Aphi = 2 * np.einsum("iin->n", Q[0]) + 2 * np.einsum("in,ni->n", B[0], X)
    outer = xinf >= 0.5 * grid.radius
    c = -float((Aphi[outer] / r[outer]).max())
    if c > 0:
        a = float((Aphi + c * r).max())
        consts["lyapunov_a"], consts["lyapunov_c"] = a, c
        verdicts["scalar Lyapunov"] = Verdict("holds", f"A phi <= {a:.4g} - {c:.4g} phi with phi=1+|x|^2")
    else:
        j = int(np.argmax(np.where(outer, Aphi / r, -np.inf)))
        verdicts["scalar Lyapunov"] = Verdict("violated", "A phi / phi not eventually negative", _witness(t0, X[j]))

    stack = np.moveaxis(C, -1, 0).reshape(-1, op.m)
    _, sv, vt = np.linalg.svd(stack, full_matrices=False)
    scale = max(1.0, float(sv[0]))
    eta = vt[-1]
    if eta[np.argmax(np.abs(eta))] < 0:
        eta = -eta
    common = sv[-1] <= 1e-10 * scale * math.sqrt(len(X))
    consts["eta"] = eta.tolist()
    verdicts["common kernel"] = Verdict(
        "holds" if common else "violated", f"smallest singular value {sv[-1]:.3g}", None if common else {}
    )
    pattern = _support_pattern(op, [t0], X)
    irr = irreducible(pattern)
    verdicts["irreducibility"] = Verdict("holds" if irr else "violated", "", None if irr else {"pattern": pattern.astype(int).tolist()})
    return verdicts


# --- discrete action and Hölder norms ---------------------------------------


def apply_operator(op, t, u: GridFunction) -> GridFunction:
    """Discrete ``A(t) u`` with the solver's stencils and Neumann closure."""
    from .discrete import assemble

    if u.m != op.m:
        raise ConfigError(f"grid function has {u.m} components, operator has {op.m}")
    A = assemble(op, u.grid, t)
    return GridFunction.from_flat(u.grid, A @ u.flat(), op.m)


def _coefficient_fields(op, t, X):
    Q = op.diffusion(t, X)
    B = op.drift(t, X)
    C = op.coupling(t, X)
    iu = np.triu_indices(op.d)
    return np.concatenate([Q[:, iu[0], iu[1]].reshape(-1, len(X)), B.reshape(-1, len(X)), C.reshape(-1, len(X))])


def coefficient_norms(op, t, s, alpha, grid: UniformGrid, r0=8):
    """Discrete ``(||A(t)||_{alpha}, ||A(t) - A(s)||_{alpha})`` on the grid box.

    Each coefficient's ``C^alpha`` norm is its sup plus the largest Hölder
    quotient over point pairs at most ``r0`` cells apart.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    X = grid.points
    ft = _coefficient_fields(op, t, X)
    fs = _coefficient_fields(op, s, X)

    def norm(fields):
        best = 0.0
        for f in fields:
            g = GridFunction(grid, f.reshape(grid.shape))
            best = max(best, float(np.abs(f).max()) + holder_seminorm(g, alpha, r0))
        return best

    return norm(ft), norm(ft - fs)


# --- JSON configuration ------------------------------------------------------


def _expr(obj, scale_key, power_key, axis=None, sign=1.0):
    if obj is None or obj == 0:
        return ZERO
    if isinstance(obj, (int, float)):
        return CoefficientExpr(sign * float(obj), 0.0, axis)
    try:
        scale = sign * float(obj.get(scale_key, 0.0))
        power = float(obj.get(power_key, 0.0))
    except AttributeError as exc:
        raise ConfigError(f"cannot parse coefficient {obj!r}") from exc
    ax = obj.get("axis", axis)
    return CoefficientExpr(scale, power, ax, TimeFactor.from_json(obj.get("time_factor")))


def operator_from_config(cfg, name="custom") -> OperatorFamily:
    """Build an operator from the JSON config schema.

    ``{d, m, Q, b, C}`` where ``Q`` is a list of ``m`` (or one shared) ``d x d``
    arrays of ``{zeta, alpha, time_factor}``, ``b`` a list of ``m`` entries
    ``{theta, beta, time_factor}`` (isotropic, giving ``b_i = -theta x_i
    (1+|x|^2)^beta``) or lists of ``d`` such entries, and ``C`` an ``m x m``
    array of ``{coef, gamma, time_factor}``.
    """
    try:
        d, m = int(cfg["d"]), int(cfg["m"])
        Qraw, braw, Craw = cfg["Q"], cfg["b"], cfg["C"]
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"operator config needs d, m, Q, b, C: {exc}") from exc
    if len(Qraw) == d and all(isinstance(e, dict) or e == 0 for e in Qraw[0]):
        Qraw = [Qraw] * m
    Q = tuple(tuple(tuple(_expr(Qk[i][j], "zeta", "alpha") for j in range(d)) for i in range(d)) for Qk in Qraw)
    b = []
    for bk in braw:
        if isinstance(bk, dict) or bk == 0:
            b.append(tuple(_expr(bk, "theta", "beta", axis=i, sign=-1.0) for i in range(d)))
        else:
            b.append(tuple(_expr(bk[i], "theta", "beta", axis=i, sign=-1.0) for i in range(d)))
    C = tuple(tuple(_expr(e, "coef", "gamma") for e in row) for row in Craw)
    return OperatorFamily(d, m, Q, tuple(b), C, cfg.get("name", name))


def load_operator(path) -> OperatorFamily:
    cfg = json.loads(Path(path).read_text())
    return operator_from_config(cfg, Path(path).stem)
