"""Theta-scheme time stepping of the coupled Neumann problem on a box.

One step solves

    (I - theta dt A(t+dt)) u' = (I + (1-theta) dt A(t)) u + dt (theta g(t+dt) + (1-theta) g(t))

with the whole ``m N`` block (diffusion, drift and coupling) implicit.
Linear systems are factorised with a sparse LU; for autonomous operators
the factorisation is reused across steps of equal size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discrete import assemble
from .errors import ConfigError, LinearSolveFailed, NotNested
from .grid import BoxDomain, GridFunction, UniformGrid, ck_norm, restrict
from .reports import VerificationReport

__all__ = [
    "SolverConfig",
    "EvolutionResult",
    "Stepper",
    "step",
    "solve_cauchy",
    "solve_frozen",
    "ConvergenceTable",
    "expanding_domain_study",
    "duhamel_check",
    "diagonal_coupling",
]


@dataclass(frozen=True)
class SolverConfig:
    """Time-stepping parameters.

    ``dt=None`` means ``min(h, 0.01 (T - s))``.  With ``theta < 1`` the first
    ``startup_steps`` steps of every solve are implicit Euler.
    """

    theta: float = 1.0
    dt: float | None = None
    linear_tol: float = 1e-9
    max_linear_iters: int = 200
    startup_steps: int = 2
    method: str = "direct"

    def __post_init__(self):
        if not 0.5 <= self.theta <= 1.0:
            raise ConfigError(f"theta must lie in [1/2, 1], got {self.theta}")
        if self.dt is not None and not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.method not in ("direct", "iterative"):
            raise ConfigError(f"unknown linear solver {self.method!r}")

    def resolve_dt(self, grid: UniformGrid, span):
        return self.dt if self.dt is not None else min(grid.h, 0.01 * span)

    def with_(self, **kw):
        return replace(self, **kw)

    def to_json(self):
        return {
            "theta": self.theta,
            "dt": self.dt,
            "linear_tol": self.linear_tol,
            "max_linear_iters": self.max_linear_iters,
            "startup_steps": self.startup_steps,
            "method": self.method,
        }

    @classmethod
    def from_json(cls, obj):
        obj = dict(obj or {})
        unknown = set(obj) - {"theta", "dt", "linear_tol", "max_linear_iters", "startup_steps", "method"}
        if unknown:
            raise ConfigError(f"unknown solver config keys {sorted(unknown)}")
        return cls(**obj)


@dataclass
class EvolutionResult:
    times: np.ndarray
    snapshots: list
    grid: UniformGrid
    config: SolverConfig
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("snapshot times must be strictly increasing")

    @property
    def final(self) -> GridFunction:
        return self.snapshots[-1]

    def at(self, t) -> GridFunction:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"no snapshot at t={t}")
        return self.snapshots[i]


class diagonal_coupling:
    """View of a family keeping only the diagonal (``off=False``) or off-diagonal part of C."""

    def __init__(self, family, off=False):
        self.base = family
        self.off = off
        self.d, self.m = family.d, family.m
        self.is_autonomous = family.is_autonomous
        self.name = family.name + ("[offdiag]" if off else "[diag]")

    def diffusion(self, t, x):
        return self.base.diffusion(t, x)

    def drift(self, t, x):
        return self.base.drift(t, x)

    def coupling(self, t, x):
        C = self.base.coupling(t, x)
        eye = np.eye(self.m, dtype=bool)[:, :, None]
        return np.where(eye, 0.0, C) if self.off else np.where(eye, C, 0.0)

    def require_elliptic(self, t, grid):
        return self.base.require_elliptic(t, grid)


def _as_flat_source(g, grid, m):
    """Normalise a forcing to a callable ``t -> flat array`` (or ``None``)."""
    if g is None:
        return None
    if isinstance(g, GridFunction):
        flat = g.flat()
        return lambda t: flat
    if callable(g):

        def src(t):
            v = g(t)
            if isinstance(v, GridFunction):
                return v.flat()
            return np.asarray(v, dtype=float).reshape(-1)

        return src
    flat = np.asarray(g, dtype=float).reshape(-1)
    if flat.size != m * grid.size:
        raise ConfigError("forcing has the wrong size")
    return lambda t: flat


class Stepper:
    """Reusable theta-scheme stepper for one family on one grid."""

    def __init__(self, family, grid: UniformGrid, cfg: SolverConfig | None = None):
        self.family = family
        self.grid = grid
        self.cfg = cfg or SolverConfig()
        self.size = family.m * grid.size
        self.eye = sp.identity(self.size, format="csr")
        self.autonomous = bool(getattr(family, "is_autonomous", False))
        self._A = {}
        self._lu = {}
        self.n_solves = 0
        self.max_residual = 0.0

    def matrix(self, t):
        key = 0.0 if self.autonomous else float(t)
        A = self._A.get(key)
        if A is None:
            A = assemble(self.family, self.grid, t)
            if not self.autonomous and len(self._A) >= 2:
                self._A.pop(next(iter(self._A)))
            self._A[key] = A
        return A

    def _solver(self, t1, dt, theta):
        key = (round(dt, 15), theta)
        if self.autonomous and key in self._lu:
            return self._lu[key]
        M = (self.eye - (theta * dt) * self.matrix(t1)).tocsc()
        if self.cfg.method == "direct":
            lu = spla.splu(M)
            solve = lu.solve
        else:
            ilu = spla.spilu(M, drop_tol=1e-5, fill_factor=10)
            pre = spla.LinearOperator(M.shape, ilu.solve)

            def solve(b, M=M, pre=pre):
                x, info = spla.gmres(M, b, M=pre, rtol=self.cfg.linear_tol * 1e-2, atol=0.0,
                                     maxiter=self.cfg.max_linear_iters)
                if info != 0:
                    raise LinearSolveFailed(f"gmres did not converge (info={info})")
                return x

        entry = (M, solve)
        if self.autonomous:
            self._lu[key] = entry
        return entry

    def advance(self, u, t, dt, theta=None, src=None):
        """One step from ``t`` to ``t + dt`` on the flat vector ``u``."""
        theta = self.cfg.theta if theta is None else theta
        rhs = u.copy()
        if theta < 1.0:
            rhs += ((1.0 - theta) * dt) * (self.matrix(t) @ u)
        if src is not None:
            rhs += dt * (theta * src(t + dt) + (1.0 - theta) * src(t))
        M, solve = self._solver(t + dt, dt, theta)
        x = solve(rhs)
        if not np.all(np.isfinite(x)):
            raise LinearSolveFailed(f"non-finite values after step at t={t + dt:g}")
        res = float(np.max(np.abs(M @ x - rhs))) / max(1.0, float(np.max(np.abs(rhs))))
        self.n_solves += 1
        self.max_residual = max(self.max_residual, res)
        if res > self.cfg.linear_tol:
            raise LinearSolveFailed(f"relative residual {res:.3g} exceeds linear_tol {self.cfg.linear_tol:g}")
        return x


def step(op, t, dt, u: GridFunction, g=None, cfg: SolverConfig | None = None) -> GridFunction:
    """Single theta-scheme step of the fully coupled system."""
    cfg = cfg or SolverConfig()
    if not dt > 0:
        raise ConfigError("dt must be positive")
    op.require_elliptic(t, u.grid)
    st = Stepper(op, u.grid, cfg)
    x = st.advance(u.flat(), float(t), float(dt), cfg.theta, _as_flat_source(g, u.grid, op.m))
    return GridFunction.from_flat(u.grid, x, op.m)


def _snapshot_times(s, T, snapshots):
    if snapshots is None:
        ts = [T]
    else:
        ts = sorted(float(t) for t in snapshots)
        if ts and (ts[0] <= s or ts[-1] > T + 1e-12):
            raise ConfigError("snapshot times must lie in (s, T]")
        if not ts or ts[-1] < T - 1e-12:
            ts.append(T)
        ts[-1] = T
    return [float(s)] + ts


def solve_cauchy(op, s, T, f: GridFunction, g=None, grid: UniformGrid | None = None,
                 cfg: SolverConfig | None = None, snapshots=None, stepper: Stepper | None = None,
                 record_steps=False) -> EvolutionResult:
    """Solve ``D_t u = A(t) u + g`` on ``(s, T]`` with ``u(s) = f`` and Neumann faces.

    Between consecutive snapshot times the step is shortened to fit the
    interval exactly.  ``record_steps`` stores every step as a snapshot.
    """
    cfg = cfg or SolverConfig()
    grid = grid or f.grid
    if f.grid != grid:
        raise ConfigError("initial datum lives on a different grid")
    if f.m != op.m:
        raise ConfigError(f"initial datum has {f.m} components, operator has {op.m}")
    s, T = float(s), float(T)
    if not s < T:
        raise ConfigError("need s < T")
    op.require_elliptic(s, grid)
    st = stepper or Stepper(op, grid, cfg)
    src = _as_flat_source(g, grid, op.m)
    marks = _snapshot_times(s, T, snapshots)
    dt0 = cfg.resolve_dt(grid, T - s)
    u = f.flat()
    times, snaps = [s], [f]
    t = s
    n_steps = 0
    for a, b in zip(marks, marks[1:]):
        n = max(1, math.ceil((b - a) / dt0 - 1e-9))
        dt = (b - a) / n
        for i in range(n):
            theta = 1.0 if n_steps < cfg.startup_steps else cfg.theta
            t_next = b if i == n - 1 else a + (i + 1) * dt
            u = st.advance(u, t, t_next - t, theta, src)
            t = t_next
            n_steps += 1
            if record_steps and i < n - 1:
                times.append(t)
                snaps.append(GridFunction.from_flat(grid, u, op.m))
        times.append(b)
        snaps.append(GridFunction.from_flat(grid, u, op.m))
    diag = {"steps": n_steps, "dt": dt0, "max_residual": st.max_residual}
    return EvolutionResult(np.array(times), snaps, grid, cfg, diag)


def solve_frozen(op, tbar, tau_max, f: GridFunction, grid: UniformGrid | None = None,
                 cfg: SolverConfig | None = None, snapshots=None, stepper=None) -> EvolutionResult:
    """Frozen semigroup ``T_tbar(tau) f`` for ``tau`` in ``(0, tau_max]``."""
    return solve_cauchy(op.frozen(tbar), 0.0, tau_max, f, None, grid, cfg, snapshots, stepper)


# --- expanding domains -------------------------------------------------------


@dataclass
class ConvergenceTable:
    """Differences between solutions on consecutive radii, restricted to ``inner``."""

    radii: tuple
    inner: BoxDomain
    times: tuple
    sup_diff: np.ndarray  # (len(radii) - 1, len(times))
    c2_diff: np.ndarray
    floor: float = 1e-12

    @property
    def passed(self):
        d = self.sup_diff
        for i in range(d.shape[0] - 1):
            for j in range(d.shape[1]):
                if d[i + 1, j] > self.floor and not d[i + 1, j] < d[i, j]:
                    return False
        return True

    def rows(self):
        out = []
        for i in range(len(self.radii) - 1):
            for j, t in enumerate(self.times):
                out.append({
                    "R_i": self.radii[i],
                    "R_next": self.radii[i + 1],
                    "t": t,
                    "sup_diff": float(self.sup_diff[i, j]),
                    "c2_diff": float(self.c2_diff[i, j]),
                })
        return out


def expanding_domain_study(op, s, T, f, radii, inner: BoxDomain, cfg: SolverConfig | None = None,
                           h=None, snapshots=None) -> ConvergenceTable:
    """Solve on boxes of increasing radius with a common spacing and compare on ``inner``.

    ``f`` is a callable on points (or a GridFunction on the largest box).
    Differences below ``1e-12`` count as converged.
    """
    radii = tuple(float(r) for r in radii)
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ConfigError("radii must be increasing")
    if radii and inner.radius >= radii[0]:
        raise NotNested("inner box must lie strictly inside the smallest box")
    marks = _snapshot_times(float(s), float(T), snapshots)[1:]
    if len(radii) < 2:
        return ConvergenceTable(radii, inner, tuple(marks), np.zeros((0, len(marks))), np.zeros((0, len(marks))))
    if h is None:
        h = UniformGrid.box(radii[0], None, op.d).h
    cfg = cfg or SolverConfig()
    if cfg.dt is None:
        cfg = cfg.with_(dt=min(h, 0.01 * (T - s)))
    restricted = []
    for R in radii:
        grid = UniformGrid.with_spacing(R, h, op.d)
        if isinstance(f, GridFunction):
            big = f.grid
            f0 = restrict(f, grid.domain) if big.radius > R else f
            if f0.grid != grid:
                raise NotNested("initial datum grid does not match the study spacing")
        else:
            f0 = GridFunction.from_callable(grid, f)
        res = solve_cauchy(op, s, T, f0, cfg=cfg, snapshots=marks)
        restricted.append([restrict(res.at(t), inner) for t in marks])
    n = len(radii) - 1
    sup_d = np.zeros((n, len(marks)))
    c2_d = np.zeros((n, len(marks)))
    for i in range(n):
        for j in range(len(marks)):
            diff = restricted[i + 1][j] - restricted[i][j]
            sup_d[i, j] = float(np.max(np.abs(diff.values)))
            c2_d[i, j] = ck_norm(diff, 2)
    return ConvergenceTable(radii, inner, tuple(marks), sup_d, c2_d)


# --- variation of constants --------------------------------------------------


def duhamel_check(op, s, T, f: GridFunction, g=None, grid=None, cfg: SolverConfig | None = None,
                  tol=5e-3, preset="custom") -> VerificationReport:
    """Rebuild ``u`` from the decoupled evolutions and the off-diagonal coupling.

    ``u_k(T) = G_k(T,s) f_k + int_s^T G_k(T,r) (sum_{j!=k} c_kj u_j + g_k)(r) dr``
    with the trapezoid rule on the solver's step times, where ``G_k`` keeps
    only the diagonal potential ``c_kk``.  The sum over ``r`` is accumulated by
    one scalar march ``S_j = G_k(r_j, r_{j-1}) S_{j-1} + w_j F_j``.
    """
    cfg = cfg or SolverConfig()
    grid = grid or f.grid
    full = solve_cauchy(op, s, T, f, g, grid, cfg, record_steps=True)
    diag = Stepper(diagonal_coupling(op), grid, cfg)
    off = diagonal_coupling(op, off=True)
    src = _as_flat_source(g, grid, op.m)
    X = grid.points
    N = grid.size

    def F(j):
        u = full.snapshots[j].values.reshape(op.m, N)
        Coff = off.coupling(full.times[j], X)
        val = np.einsum("khn,hn->kn", Coff, u).reshape(-1)
        return val + src(full.times[j]) if src is not None else val

    times = full.times
    n = len(times) - 1
    S = f.flat() + 0.5 * (times[1] - times[0]) * F(0)
    for j in range(1, n + 1):
        theta = 1.0 if j - 1 < cfg.startup_steps else cfg.theta
        S = diag.advance(S, times[j - 1], times[j] - times[j - 1], theta)
        w = 0.5 * (times[j] - times[j - 1]) + (0.5 * (times[j + 1] - times[j]) if j < n else 0.0)
        S = S + w * F(j)
    diff = float(np.max(np.abs(S - full.final.flat())))
    scale = max(1.0, float(np.max(np.abs(full.final.values))))
    return VerificationReport(
        "duhamel",
        preset,
        diff,
        tol * scale,
        diff - tol * scale,
        0.0,
        None,
        {"steps": n, "sup_difference": diff},
        "trapezoid in r on the solver's step times",
    )
