"""Resolvent of the frozen operator by Laplace quadrature and by direct solve, plus Schauder experiments.

``R_t(lam) f = int_0^inf e^{-lam tau} T_t(tau) f dtau`` is approximated by a
product trapezoid rule (the exponential weight is integrated exactly against
the piecewise-linear interpolant of the orbit) on a node set that is geometric near ``tau = 0`` and uniform
afterwards, truncated where the analytic tail bound
``e^{(M - lam) T} / (lam - M) ||f||`` drops below ``1e-8 ||f||``.  The direct
route solves ``(lam I - A_t) u = f`` with the same sparse discretisation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discrete import assemble
from .errors import ConfigError, LambdaTooSmall, LinearSolveFailed
from .evolution import SolverConfig, Stepper, solve_cauchy
from .grid import GridFunction, UniformGrid, ck_norm, holder_norm, restrict
from .operators import auxiliary_of, row_sum_bound
from .reports import VerificationReport

__all__ = [
    "ResolventResult",
    "frozen_row_sum",
    "quadrature_nodes",
    "resolvent_quadrature",
    "elliptic_direct",
    "resolvent",
    "check_resolvent_identity",
    "check_resolvent_bound",
    "apply_exact",
    "ManufacturedGaussian",
    "manufactured_elliptic",
    "manufactured_parabolic",
    "schauder_experiment",
    "parabolic_schauder_experiment",
    "check_interpolation_inequality",
]


def _name(op):
    return getattr(op, "name", "custom")


@dataclass
class ResolventResult:
    lam: float
    tbar: float
    solution: GridFunction
    method: str
    residual: float
    T_trunc: float | None = None
    step: float | None = None
    tail_bound: float | None = None
    extra: dict = field(default_factory=dict)

    def to_json(self):
        return {
            "lambda": self.lam,
            "tbar": self.tbar,
            "method": self.method,
            "residual": self.residual,
            "T_trunc": self.T_trunc,
            "step": self.step,
            "tail_bound": self.tail_bound,
            **self.extra,
        }


def frozen_row_sum(op, tbar, grid: UniformGrid):
    """``M`` at the frozen time: sup of the auxiliary row sums."""
    return row_sum_bound(auxiliary_of(op.frozen(tbar)), (tbar, tbar), grid).M_J


def _residual(op, tbar, lam, u: GridFunction, f: GridFunction, inner_fraction=0.5):
    A = assemble(op.frozen(tbar), u.grid, tbar)
    r = GridFunction.from_flat(u.grid, lam * u.flat() - A @ u.flat() - f.flat(), op.m)
    return float(np.max(np.abs(restrict(r, u.grid.inner(inner_fraction)).values)))


def quadrature_nodes(T_trunc, step, rho=0.8, tiny=1e-6):
    """Uniform nodes of spacing ``<= step`` on ``[0, T_trunc]`` with geometric nodes ``step rho^j`` below ``step``."""
    n = max(1, math.ceil(T_trunc / step - 1e-9))
    uni = np.linspace(0.0, T_trunc, n + 1)
    geo = []
    g = uni[1] * rho
    while g > tiny * uni[1]:
        geo.append(g)
        g *= rho
    return np.concatenate([[0.0], np.sort(geo), uni[1:]])


def _product_weights(nodes, lam):
    """Left/right weights of ``int e^{-lam tau} u`` with ``u`` linear on each interval (exact for constants)."""
    a, h = nodes[:-1], np.diff(nodes)
    z = lam * h
    i0 = -np.expm1(-z) / lam
    # (1 - e^{-z}(1+z)) / (lam z), with a series where the difference cancels
    num = np.where(z > 1e-3, -np.expm1(-z) - z * np.exp(-z), z**2 / 2 - z**3 / 3 + z**4 / 8)
    i1 = num / (lam * z)
    e = np.exp(-lam * a)
    return e * (i0 - i1), e * i1


def resolvent_quadrature(op, tbar, lam, f: GridFunction, cfg: SolverConfig | None = None, margin=0.5,
                         step=None, rho=0.8, tail_tol=1e-8, M=None) -> ResolventResult:
    """Trapezoid Laplace transform of the frozen semigroup, accumulated on the fly."""
    grid = f.grid
    if M is None:
        M = frozen_row_sum(op, tbar, grid)
    if not lam > M + margin:
        raise LambdaTooSmall(f"lambda={lam:g} must exceed M + margin = {M + margin:g}")
    gap = lam - M
    T_trunc = max(math.log(1.0 / (tail_tol * gap)) / gap, 1.0 / gap)
    step = step if step is not None else 0.05 / max(lam, 1.0)
    nodes = quadrature_nodes(T_trunc, step, rho)
    cfg = cfg or SolverConfig(theta=0.5)
    fam = op.frozen(tbar)
    fam.require_elliptic(tbar, grid)
    st = Stepper(fam, grid, cfg)
    dt_max = cfg.dt if cfg.dt is not None else step
    u = f.flat()
    wl, wr = _product_weights(nodes, lam)
    acc = wl[0] * u
    n_steps = 0
    for j in range(1, len(nodes)):
        a, b = nodes[j - 1], nodes[j]
        n = max(1, math.ceil((b - a) / dt_max - 1e-9))
        h = (b - a) / n
        for i in range(n):
            theta = 1.0 if n_steps < cfg.startup_steps else cfg.theta
            u = st.advance(u, a + i * h, h, theta)
            n_steps += 1
        acc += (wr[j - 1] + (wl[j] if j < len(wl) else 0.0)) * u
    sol = GridFunction.from_flat(grid, acc, op.m)
    tail = math.exp(-gap * T_trunc) / gap * float(np.max(np.abs(f.values)))
    return ResolventResult(lam, tbar, sol, "quadrature", _residual(op, tbar, lam, sol, f), T_trunc, step, tail,
                           {"nodes": len(nodes), "steps": n_steps, "M": M})


def elliptic_direct(op, tbar, lam, f: GridFunction, cfg: SolverConfig | None = None, M=None,
                    check_lambda=True) -> ResolventResult:
    """Sparse solve of ``(lam I - A_tbar) u = f`` with Neumann faces."""
    grid = f.grid
    cfg = cfg or SolverConfig()
    if check_lambda:
        if M is None:
            M = frozen_row_sum(op, tbar, grid)
        if not lam > M:
            raise LambdaTooSmall(f"lambda={lam:g} must exceed M={M:g}")
    fam = op.frozen(tbar)
    fam.require_elliptic(tbar, grid)
    A = assemble(fam, grid, tbar)
    K = (lam * sp.identity(A.shape[0], format="csr") - A).tocsc()
    b = f.flat()
    x = spla.splu(K).solve(b)
    res = float(np.max(np.abs(K @ x - b))) / max(1.0, float(np.max(np.abs(b))))
    if not np.all(np.isfinite(x)) or res > cfg.linear_tol:
        raise LinearSolveFailed(f"direct resolvent solve residual {res:.3g}")
    sol = GridFunction.from_flat(grid, x, op.m)
    return ResolventResult(lam, tbar, sol, "direct", _residual(op, tbar, lam, sol, f), extra={"M": M})


def resolvent(op, tbar, lam, f, method="direct", cfg=None, **kw) -> ResolventResult:
    if method == "direct":
        return elliptic_direct(op, tbar, lam, f, cfg, **kw)
    if method == "quadrature":
        return resolvent_quadrature(op, tbar, lam, f, cfg, **kw)
    raise ConfigError(f"unknown resolvent method {method!r}")


def check_resolvent_identity(op, tbar, lam, mu, f: GridFunction, method="direct", cfg=None, tol_rel=1e-4,
                             preset=None, **kw) -> VerificationReport:
    """``||R(lam)f - R(mu)f - (mu - lam) R(lam) R(mu) f||_inf <= tol_rel ||f||_inf``."""
    Rl = resolvent(op, tbar, lam, f, method, cfg, **kw).solution
    if lam == mu:
        diff = 0.0
    else:
        Rm = resolvent(op, tbar, mu, f, method, cfg, **kw).solution
        RlRm = resolvent(op, tbar, lam, Rm, method, cfg, **kw).solution
        diff = float(np.max(np.abs((Rl - Rm - (mu - lam) * RlRm).values)))
    fsup = float(np.max(np.abs(f.values)))
    rel = diff / fsup if fsup > 0 else 0.0
    return VerificationReport("resolvent_identity", preset or _name(op), diff, tol_rel * fsup, rel, tol_rel, None,
                              {"lambda": lam, "mu": mu, "method": method, "residual": diff})


def check_resolvent_bound(op, tbar, lam, fs, method="direct", cfg=None, tol_rel=1e-3, M=None,
                          preset=None) -> VerificationReport:
    """``||R(lam) f||_inf <= (lam - M)^{-1} ||f||_inf (1 + tol_rel)`` for every ``f`` in ``fs``."""
    grid = fs[0].grid
    if M is None:
        M = frozen_row_sum(op, tbar, grid)
    worst, wit = -np.inf, None
    for j, f in enumerate(fs):
        u = resolvent(op, tbar, lam, f, method, cfg, M=M).solution
        fsup = float(np.max(np.abs(f.values)))
        ratio = float(np.max(np.abs(u.values))) * (lam - M) / fsup - 1.0 if fsup > 0 else -1.0
        if ratio > worst:
            worst, wit = ratio, {"trial": j}
    return VerificationReport("resolvent_bound", preset or _name(op), worst + 1.0, 1.0, worst, tol_rel, wit,
                              {"lambda": lam, "M": M, "trials": len(fs)})


# --- manufactured solutions ---------------------------------------------------------


class ManufacturedGaussian:
    """``u_k(t, x) = a_k(t) exp(-|x - c_k|^2 / (2 s^2))`` with ``a_k(t) = w_k (1 + eps sin t)``."""

    def __init__(self, d, weights, centers=None, width=0.8, eps=0.0):
        self.d = d
        self.w = np.asarray(weights, dtype=float)
        self.m = len(self.w)
        self.c = np.zeros((self.m, d)) if centers is None else np.asarray(centers, dtype=float).reshape(self.m, d)
        self.s = width
        self.eps = eps

    def amp(self, t):
        return self.w * (1.0 + self.eps * math.sin(t))

    def damp(self, t):
        return self.w * self.eps * math.cos(t)

    def parts(self, t, X):
        """Value ``(m, N)``, gradient ``(m, d, N)`` and Hessian ``(m, d, d, N)``."""
        X = np.atleast_2d(X)
        Y = X[None] - self.c[:, None, :]  # (m, N, d)
        g = np.exp(-np.sum(Y**2, axis=2) / (2 * self.s**2))
        a = self.amp(t)[:, None]
        val = a * g
        grad = -np.moveaxis(Y, 2, 1) / self.s**2 * val[:, None, :]
        eye = np.eye(self.d)[None, :, :, None]
        outer = np.einsum("kni,knj->kijn", Y, Y) / self.s**4
        hess = (outer - eye / self.s**2) * val[:, None, None, :]
        return val, grad, hess

    def __call__(self, X, t=0.0):
        return self.parts(t, X)[0]

    def time_derivative(self, t, X):
        X = np.atleast_2d(X)
        Y = X[None] - self.c[:, None, :]
        g = np.exp(-np.sum(Y**2, axis=2) / (2 * self.s**2))
        return self.damp(t)[:, None] * g


def apply_exact(op, t, manufactured, X):
    """``A(t) u`` from closed-form derivatives, shape ``(m, N)``."""
    val, grad, hess = manufactured.parts(t, X)
    Q = op.diffusion(t, X)
    B = op.drift(t, X)
    C = op.coupling(t, X)
    return np.einsum("kijn,kijn->kn", Q, hess) + np.einsum("kin,kin->kn", B, grad) + np.einsum("khn,hn->kn", C, val)


def manufactured_elliptic(op, tbar, lam, manufactured, grid: UniformGrid, cfg=None, inner_fraction=0.5):
    """Solve with ``f = lam u0 - A u0`` and return ``(C^2 error on the inner box, result)``."""
    X = grid.points
    u0 = manufactured.parts(tbar, X)[0]
    f = GridFunction(grid, (lam * u0 - apply_exact(op.frozen(tbar), tbar, manufactured, X)).reshape((op.m,) + grid.shape))
    res = elliptic_direct(op, tbar, lam, f, cfg, check_lambda=False)
    err = res.solution - GridFunction(grid, u0.reshape((op.m,) + grid.shape))
    return ck_norm(restrict(err, grid.inner(inner_fraction)), 2), res


def manufactured_parabolic(op, s, T, manufactured, grid: UniformGrid, cfg=None, snapshots=None,
                           inner_fraction=0.5):
    """Solve with ``g = D_t u0 - A(t) u0`` and ``f = u0(s)``; return the worst inner ``C^2`` error."""
    X = grid.points
    shape = (op.m,) + grid.shape

    def g(t):
        return (manufactured.time_derivative(t, X) - apply_exact(op, t, manufactured, X)).reshape(-1)

    f = GridFunction(grid, manufactured.parts(s, X)[0].reshape(shape))
    res = solve_cauchy(op, s, T, f, g, grid, cfg, snapshots)
    inner = grid.inner(inner_fraction)
    worst = 0.0
    for t, u in zip(res.times, res.snapshots):
        exact = GridFunction(grid, manufactured.parts(t, X)[0].reshape(shape))
        worst = max(worst, ck_norm(restrict(u - exact, inner), 2))
    return worst, res


# --- Schauder-type ratios ---------------------------------------------------------------


def _cells(r0_phys, grid):
    return None if r0_phys is None else max(1, int(round(r0_phys / grid.h)))


def _schauder_ratio(op, fgen, lam, theta, times, grid, cfg, r0_phys, inner_fraction):
    inner = grid.inner(inner_fraction)
    r0 = _cells(r0_phys, grid)
    num = den = 0.0
    for t in times:
        f = GridFunction.from_callable(grid, lambda X, t=t: fgen(t, X))
        u = elliptic_direct(op, t, lam, f, cfg, check_lambda=False).solution
        num = max(num, holder_norm(restrict(u, inner), 2 + theta, r0))
        den = max(den, holder_norm(restrict(f, inner), theta, r0))
    return num / den, num, den


def schauder_experiment(op, fgen, lam, theta, interval, grid: UniformGrid, cfg=None, n_times=5, r0_phys=None,
                        inner_fraction=0.5, stability=0.2, preset=None) -> VerificationReport:
    """``sup_t ||u(t)||_{C^{2+theta}} / sup_t ||f(t)||_{C^theta}`` on ``grid`` and ``grid.refine()``.

    ``fgen(t, X)`` returns ``(m, N)`` values.  Hölder quotients scan pairs up
    to ``r0_phys`` apart in physical units (default 8 cells of ``grid``), so
    the scan covers the same pairs on both grids.  PASS iff the two ratios
    agree within ``stability``.
    """
    if not 0 < theta < 1:
        raise ConfigError("theta must lie in (0, 1)")
    s, T = interval
    M = row_sum_bound(auxiliary_of(op), (s, T), grid).M_J
    if not lam > M:
        raise LambdaTooSmall(f"lambda={lam:g} must exceed M={M:g}")
    r0_phys = 8 * grid.h if r0_phys is None else r0_phys
    times = np.linspace(s, T, n_times)
    coarse = _schauder_ratio(op, fgen, lam, theta, times, grid, cfg, r0_phys, inner_fraction)
    fine = _schauder_ratio(op, fgen, lam, theta, times, grid.refine(), cfg, r0_phys, inner_fraction)
    change = abs(fine[0] / coarse[0] - 1.0)
    return VerificationReport(
        "schauder_elliptic", preset or _name(op), fine[0], coarse[0], change, stability, None,
        {"ratio_coarse": coarse[0], "ratio_fine": fine[0], "lambda": lam, "theta": theta, "r0_physical": r0_phys,
         "M": M},
        "refinement stability of the Schauder ratio; the constant itself is not asserted",
    )


def _time_holder(snaps, times, theta, inner):
    """Largest ``||u(t) - u(tau)||_{C^2} / |t - tau|^{theta/2}`` per lattice separation level."""
    n = len(times) - 1
    levels = {}
    step = 1
    while step <= n // 2:
        q = 0.0
        for i in range(0, n - step + 1):
            diff = restrict(snaps[i + step] - snaps[i], inner)
            q = max(q, ck_norm(diff, 2) / abs(times[i + step] - times[i]) ** (theta / 2))
        levels[step] = q
        step *= 2
    return levels


def parabolic_schauder_experiment(op, f, g, interval, grid: UniformGrid, theta, cfg=None, n_snap=17,
                                  r0_phys=None, inner_fraction=0.5, stability=0.2, growth=1.5,
                                  preset=None) -> VerificationReport:
    """Refinement-stable ratio ``sup_t ||u||_{C^{2+theta}} / (||f||_{C^{2+theta}} + sup_t ||g||_{C^theta})``.

    Also measures the Hölder-in-time modulus of ``t -> u(t)`` in ``C^2`` on
    the inner box at lattice separations ``dt_snap * 2^j``; it counts as
    bounded when the quotient at the smallest separation is at most
    ``growth`` times the quotient at the largest.
    """
    s, T = interval
    r0_phys = 8 * grid.h if r0_phys is None else r0_phys
    times = np.linspace(s, T, n_snap)
    out = []
    for gr in (grid, grid.refine()):
        X = gr.points
        shape = (op.m,) + gr.shape
        f0 = GridFunction(gr, np.asarray(f(X)).reshape(shape))
        src = None if g is None else (lambda t, X=X: np.asarray(g(t, X)).reshape(-1))
        res = solve_cauchy(op, s, T, f0, src, gr, cfg, snapshots=times[1:])
        inner = gr.inner(inner_fraction)
        r0 = _cells(r0_phys, gr)
        num = max(holder_norm(restrict(u, inner), 2 + theta, r0) for u in res.snapshots)
        gn = 0.0 if g is None else max(
            holder_norm(restrict(GridFunction(gr, np.asarray(g(t, X)).reshape(shape)), inner), theta, r0)
            for t in times)
        den = holder_norm(restrict(f0, inner), 2 + theta, r0) + gn
        levels = _time_holder(res.snapshots, res.times, theta, inner)
        out.append((num / den if den > 0 else 0.0, num, den, levels))
    (rc, _, _, _), (rf, _, _, lev) = out
    change = abs(rf / rc - 1.0) if rc > 0 else (0.0 if rf == 0 else math.inf)
    keys = sorted(lev)
    small, large = lev[keys[0]], lev[keys[-1]]
    bounded = small <= growth * large + 1e-14
    violation = change if bounded else max(change, stability) + 1.0
    return VerificationReport(
        "schauder_parabolic", preset or _name(op), rf, rc, violation, stability, None,
        {"ratio_coarse": rc, "ratio_fine": rf, "time_holder_levels": {str(k): float(v) for k, v in lev.items()},
         "time_holder_bounded": bool(bounded), "theta": theta, "r0_physical": r0_phys},
    )


def check_interpolation_inequality(op, tbar, theta, gs_fn, grid: UniformGrid, lam=None, cfg=None, stability=0.2,
                                   preset=None) -> VerificationReport:
    """``||f||_{C^theta} / (||f||^{1-theta/2} (||f|| + ||A f||)^{theta/2})`` for ``f = R(lam) g``.

    ``gs_fn(grid)`` returns the list of right-hand sides ``g`` on a grid; the
    maximal ratio over the batch must agree within ``stability`` between
    ``grid`` and ``grid.refine()``.
    """
    ratios = []
    for gr in (grid, grid.refine()):
        M = frozen_row_sum(op, tbar, gr)
        lam_ = lam if lam is not None else M + 1.0
        A = assemble(op.frozen(tbar), gr, tbar)
        best = 0.0
        for gfun in gs_fn(gr):
            f = elliptic_direct(op, tbar, lam_, gfun, cfg, M=M).solution
            sup = float(np.max(np.abs(f.values)))
            Af = float(np.max(np.abs(A @ f.flat())))
            denom = sup ** (1 - theta / 2) * (sup + Af) ** (theta / 2)
            best = max(best, holder_norm(f, theta, None if gr.d == 1 else 8) / denom)
        ratios.append(best)
    change = abs(ratios[1] / ratios[0] - 1.0)
    return VerificationReport("interpolation_inequality", preset or _name(op), ratios[1], ratios[0], change, stability,
                              None, {"ratio_coarse": ratios[0], "ratio_fine": ratios[1], "theta": theta})
