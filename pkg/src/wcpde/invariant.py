"""Kernels of the coupling matrix, stationary densities and systems of invariant measures.

For an autonomous operator whose equations share diffusion and drift, the
system of invariant measures is ``mu_k = eta_k mu``, where ``mu`` is the
invariant density of the scalar part and ``eta`` spans the common kernel of
``C(x)``.  Everything here is computed on the truncated box with the same
discretisation as the evolution solver, so discrete invariance holds up to
the linear-solver tolerance.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.integrate as integrate
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discrete import assemble
from .errors import ConfigError, DegenerateNullspace, NonIntegrable
from .evolution import SolverConfig, Stepper, solve_cauchy
from .grid import GridFunction, UniformGrid, derivative, restrict, trapezoid_weights
from .operators import auxiliary_of, irreducible
from .reports import VerificationReport, to_jsonable

__all__ = [
    "CouplingAnalysis",
    "MeasureVector",
    "analyze_coupling",
    "normalize_kernels",
    "scalar_invariant_density_1d",
    "scalar_invariant_density_stationary",
    "build_system_measures",
    "functional",
    "check_invariance",
    "check_asymptotics",
    "check_lp_bound",
    "check_domination",
    "check_fixed_points",
    "check_gradient_decay",
    "gradient_energy",
    "l1_distance",
]

ZERO_TOL = 1e-10
IMAG_TOL = 1e-8


def _name(op):
    return getattr(op, "name", "custom")


# --- coupling analysis -----------------------------------------------------------


def _kernel(M):
    """Unit right singular vector of the smallest singular value, and that value."""
    _, sv, vt = np.linalg.svd(M)
    return vt[-1], sv[-1], sv


def normalize_kernels(eta, xi):
    """Unit vectors with ``xi``'s first nonzero entry positive and ``eta . xi >= 0``."""
    xi = xi / np.linalg.norm(xi)
    nz = np.flatnonzero(np.abs(xi) > 1e-12)
    if nz.size and xi[nz[0]] < 0:
        xi = -xi
    eta = eta / np.linalg.norm(eta)
    dot = float(eta @ xi)
    if dot < -1e-12 or (abs(dot) <= 1e-12 and eta[np.flatnonzero(np.abs(eta) > 1e-12)[0]] < 0):
        eta = -eta
    return eta, xi


@dataclass
class CouplingAnalysis:
    points: np.ndarray
    eigenvalues: np.ndarray  # (n, m) complex, sorted by decreasing real part
    eigenvalues_P: np.ndarray
    eta_field: np.ndarray  # (n, m)
    xi_field: np.ndarray
    margin: float
    margin_P: float
    real_parts_ok: bool
    zero_simple: bool
    no_imaginary: bool
    eta_constant: bool
    irreducible: bool
    kernel_residual: float

    @property
    def eta(self):
        return self.eta_field[0]

    @property
    def xi(self):
        return self.xi_field[0]

    @property
    def passed(self):
        return self.real_parts_ok and self.zero_simple and self.no_imaginary

    def to_json(self):
        return to_jsonable({
            "n_points": len(self.points),
            "eigenvalues_C": [[{"re": z.real, "im": z.imag} for z in row] for row in self.eigenvalues[:1]],
            "eigenvalues_CP": [[{"re": z.real, "im": z.imag} for z in row] for row in self.eigenvalues_P[:1]],
            "eta": self.eta,
            "xi": self.xi,
            "spectral_margin": self.margin,
            "spectral_margin_P": self.margin_P,
            "real_parts_ok": self.real_parts_ok,
            "zero_simple": self.zero_simple,
            "no_imaginary": self.no_imaginary,
            "eta_constant": self.eta_constant,
            "irreducible": self.irreducible,
            "kernel_residual": self.kernel_residual,
            "passed": self.passed,
        })


def _spectral_flags(ev, scale):
    zero = np.abs(ev) <= ZERO_TOL * scale
    real_ok = bool(np.all(ev.real <= ZERO_TOL * scale))
    simple = int(zero.sum()) == 1
    imag = bool(np.any((np.abs(ev.real) <= ZERO_TOL * scale) & (np.abs(ev.imag) > IMAG_TOL)))
    nonzero = ev[~zero]
    margin = -float(nonzero.real.max()) if nonzero.size else math.inf
    return real_ok, simple, not imag, margin


def analyze_coupling(op, points, t=0.0) -> CouplingAnalysis:
    """Spectra and kernels of ``C(x)`` and ``C^P(x)`` at each sample point."""
    X = np.atleast_2d(np.asarray(points, dtype=float))
    C = np.moveaxis(op.coupling(t, X), -1, 0)
    CP = np.moveaxis(auxiliary_of(op).coupling(t, X), -1, 0)
    n, m = C.shape[0], C.shape[1]
    evs, evsP, etas, xis = [], [], [], []
    real_ok = simple = no_imag = True
    margin = marginP = math.inf
    resid = 0.0
    for i in range(n):
        scale = max(1.0, float(np.abs(C[i]).max()))
        ev = np.linalg.eigvals(C[i])
        evP = np.linalg.eigvals(CP[i])
        evs.append(ev[np.argsort(-ev.real, kind="stable")])
        evsP.append(evP[np.argsort(-evP.real, kind="stable")])
        for e, is_p in ((ev, False), (evP, True)):
            r, s, q, mg = _spectral_flags(e, scale)
            real_ok &= r
            simple &= s
            no_imag &= q
            if is_p:
                marginP = min(marginP, mg)
            else:
                margin = min(margin, mg)
        eta, _, _ = _kernel(C[i])
        xi, _, _ = _kernel(CP[i])
        eta, xi = normalize_kernels(eta, xi)
        resid = max(resid, float(np.abs(C[i] @ eta).max()), float(np.abs(CP[i] @ xi).max()))
        etas.append(eta)
        xis.append(xi)
    etas, xis = np.array(etas), np.array(xis)
    pattern = np.any(np.abs(C) > 0, axis=0)
    return CouplingAnalysis(
        X, np.array(evs), np.array(evsP), etas, xis, margin, marginP, bool(real_ok), bool(simple),
        bool(no_imag), bool(np.all(np.abs(etas - etas[0]) <= 1e-8)), irreducible(pattern), resid,
    )


# --- scalar densities --------------------------------------------------------------


def _as_callable(c):
    if hasattr(c, "time_value"):
        return lambda x: float(c(0.0, np.array([[x]]))[0])
    return c


def _tail_mass(grid, density):
    w = trapezoid_weights(grid).reshape(-1)
    outer = np.abs(grid.points).max(axis=1) >= 0.9 * grid.radius - 1e-12
    return float(np.sum((w * np.abs(density.reshape(-1)))[outer]))


def scalar_invariant_density_1d(q, b, grid: UniformGrid, check_tails=True, tail_tol=1e-6) -> GridFunction:
    """``mu ∝ q^{-1} exp(int_0^x b/q)`` normalised by the trapezoid rule on the grid.

    This is the zero-flux stationary solution of ``(q mu)'' - (b mu)' = 0``.
    ``q`` and ``b`` are coefficient expressions or scalar callables.
    """
    if grid.d != 1:
        raise ConfigError("closed-form density is one-dimensional")
    qf, bf = _as_callable(q), _as_callable(b)
    x = grid.axis
    mid = (grid.n - 1) // 2
    ratio = lambda s: bf(s) / qf(s)  # noqa: E731
    phi = np.zeros(grid.n)
    for i in range(mid + 1, grid.n):
        phi[i] = phi[i - 1] + integrate.quad(ratio, x[i - 1], x[i], epsabs=1e-14, epsrel=1e-13)[0]
    for i in range(mid - 1, -1, -1):
        phi[i] = phi[i + 1] - integrate.quad(ratio, x[i], x[i + 1], epsabs=1e-14, epsrel=1e-13)[0]
    qv = np.array([qf(s) for s in x])
    dens = np.exp(phi - phi.max()) / qv
    dens /= float(np.sum(trapezoid_weights(grid) * dens))
    if check_tails:
        tail = _tail_mass(grid, dens)
        if tail > tail_tol:
            raise NonIntegrable(f"mass {tail:.3g} in the outer 10% of the box exceeds {tail_tol:g}")
    return GridFunction(grid, dens)


def scalar_invariant_density_stationary(op_scalar, grid: UniformGrid, cfg: SolverConfig | None = None,
                                        check_tails=True, tail_tol=1e-6, iterations=4) -> GridFunction:
    """Left null vector of the discrete generator, divided by the trapezoid cell weights.

    The generator ``A`` has nonnegative off-diagonal entries and zero row
    sums, so ``A^T pi = 0`` is the conservative zero-flux adjoint; ``pi`` is
    found by inverse iteration on ``A^T + eps I``.  Raises
    :class:`DegenerateNullspace` when the second smallest eigenvalue magnitude
    is below ``1e3`` times the smallest.
    """
    if op_scalar.m != 1:
        raise ConfigError("stationary density needs a scalar operator")
    A = assemble(op_scalar, grid, 0.0)
    AT = A.T.tocsc()
    norm = float(abs(A).sum(axis=1).max())
    shift = 1e-10 * norm
    lu = spla.splu((AT + shift * sp.identity(AT.shape[0], format="csc")).tocsc())
    v = np.ones(AT.shape[0]) / AT.shape[0]
    for _ in range(iterations):
        v = lu.solve(v)
        v /= np.abs(v).sum()
    lam1 = float(np.abs(AT @ v).sum() / np.abs(v).sum())
    try:
        vals = spla.eigs(AT, k=2, sigma=-1e-6 * norm, which="LM", return_eigenvectors=False,
                         v0=np.ones(AT.shape[0]), tol=1e-10)
        mags = np.sort(np.abs(vals))
        lam2 = float(mags[-1]) if abs(mags[0] - lam1) <= abs(mags[-1] - lam1) else float(mags[0])
    except (spla.ArpackNoConvergence, RuntimeError) as exc:  # pragma: no cover - reported as degeneracy
        raise DegenerateNullspace(f"eigenvalue probe failed: {exc}") from exc
    floor = 1e-12 * norm
    if lam2 < 1e3 * max(lam1, floor):
        raise DegenerateNullspace(f"second eigenvalue {lam2:.3g} is within 1e3 of the first {lam1:.3g}")
    if v.sum() < 0:
        v = -v
    dens = v.reshape(grid.shape) / trapezoid_weights(grid)
    dens /= float(np.sum(trapezoid_weights(grid) * dens))
    if check_tails:
        tail = _tail_mass(grid, dens)
        if tail > tail_tol:
            raise NonIntegrable(f"mass {tail:.3g} in the outer 10% of the box exceeds {tail_tol:g}")
    return GridFunction(grid, dens)


def l1_distance(a: GridFunction, b: GridFunction):
    w = trapezoid_weights(a.grid)
    return float(np.sum(w * np.abs(a.values[0] - b.values[0])))


# --- measure systems -----------------------------------------------------------------


@dataclass
class MeasureVector:
    density: GridFunction
    eta: np.ndarray
    xi: np.ndarray
    abs_matches_xi: bool

    @property
    def grid(self):
        return self.density.grid

    @property
    def m(self):
        return len(self.eta)

    def signed(self):
        """Densities ``mu_k = eta_k mu``, shape ``(m, *grid.shape)``."""
        return self.eta.reshape((-1,) + (1,) * self.grid.d) * self.density.values[0][None]

    def absolute(self):
        """Densities ``|mu_k| = xi_k mu``."""
        return self.xi.reshape((-1,) + (1,) * self.grid.d) * self.density.values[0][None]

    def integrate(self, f: GridFunction, absolute=False, power=None):
        """``sum_k int f_k dmu_k`` (or against ``|mu_k|``; ``power`` integrates ``|f_k|^p``)."""
        w = trapezoid_weights(self.grid)
        vals = f.values if power is None else np.abs(f.values) ** power
        dens = self.absolute() if absolute else self.signed()
        return float(np.sum(vals * dens * w[None]))

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        pts = self.grid.points
        mu = self.density.values[0].reshape(-1)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x_{i + 1}" for i in range(self.grid.d)] + ["mu"] + [f"mu_{k + 1}" for k in range(self.m)])
            for p in range(self.grid.size):
                w.writerow([repr(float(c)) for c in pts[p]] + [repr(float(mu[p]))]
                           + [repr(float(self.eta[k] * mu[p])) for k in range(self.m)])
        weights = {"eta": self.eta.tolist(), "xi": self.xi.tolist(), "abs_matches_xi": self.abs_matches_xi,
                   "R": self.grid.radius, "n_g": self.grid.n, "d": self.grid.d}
        Path(str(path) + ".json").write_text(json.dumps(weights, indent=2, sort_keys=True) + "\n")


def build_system_measures(analysis: CouplingAnalysis, density: GridFunction) -> MeasureVector:
    """``mu_k = eta_k mu`` with ``sum_k eta_k^2 = 1``."""
    if not analysis.irreducible or not analysis.zero_simple:
        raise DegenerateNullspace("coupling is reducible or its kernel is not one-dimensional")
    if not analysis.eta_constant:
        raise ConfigError("kernel vector eta varies across the sample points")
    eta, xi = analysis.eta.copy(), analysis.xi.copy()
    return MeasureVector(density, eta, xi, bool(np.allclose(np.abs(eta), xi, atol=1e-10, rtol=0)))


def functional(mv: MeasureVector, f: GridFunction):
    """``M_f = sum_k int f_k dmu_k``."""
    return mv.integrate(f)


def _constant_field(grid, vec):
    return GridFunction.constant(grid, vec)


# --- checks -------------------------------------------------------------------------------


def check_invariance(op, mv: MeasureVector, fs, t_list, cfg: SolverConfig | None = None, tol_inv=5e-3,
                     preset=None) -> VerificationReport:
    """``|sum_k int (T(t)f)_k dmu_k - sum_k int f_k dmu_k| <= tol_inv ||f||_inf``."""
    grid = mv.grid
    cfg = cfg or SolverConfig()
    st = Stepper(op, grid, cfg)
    ts = sorted(t for t in t_list if t > 0)
    worst, wit, rows = -np.inf, None, []
    for j, f in enumerate(fs):
        base = mv.integrate(f)
        fsup = max(float(np.max(np.abs(f.values))), 1e-300)
        vals = {0.0: base}
        if ts:
            res = solve_cauchy(op, 0.0, ts[-1], f, grid=grid, cfg=cfg, snapshots=ts, stepper=st)
            for t in ts:
                vals[t] = mv.integrate(res.at(t))
        for t in t_list:
            gap = abs(vals[float(t)] - base) / fsup
            rows.append({"trial": j, "t": float(t), "relative_gap": gap})
            if gap > worst:
                worst, wit = gap, {"trial": j, "t": float(t)}
    return VerificationReport("invariance", preset or _name(op), worst, tol_inv, worst, tol_inv, wit, {"rows": rows})


def check_asymptotics(op, f: GridFunction, mv: MeasureVector, horizon, cfg: SolverConfig | None = None,
                      n_times=8, factor=0.05, preset=None) -> VerificationReport:
    """``e(t) = ||T(t)f - M_f eta||_inf`` on the inner quarter-box decreases to ``<= factor e(0)``."""
    grid = mv.grid
    cfg = cfg or SolverConfig()
    Mf = functional(mv, f)
    target = _constant_field(grid, Mf * mv.eta)
    inner = grid.inner(0.25)
    ts = np.geomspace(horizon / 2 ** (n_times - 1), horizon, n_times)
    res = solve_cauchy(op, 0.0, horizon, f, grid=grid, cfg=cfg, snapshots=ts)
    errs = [float(np.max(np.abs(restrict(u - target, inner).values))) for u in res.snapshots]
    floor = 1e-12 * max(1.0, float(np.max(np.abs(f.values))))
    breach = 0.0
    for a, b in zip(errs, errs[1:]):
        if b > floor and b > a:
            breach = max(breach, b - a)
    violation = errs[-1] - factor * errs[0]
    if breach > 0:
        violation = max(violation, breach)
    return VerificationReport(
        "asymptotics", preset or _name(op), errs[-1], factor * errs[0], violation, floor,
        {"errors": errs}, {"M_f": Mf, "times": res.times, "errors": errs, "monotone_breach": breach},
        "e(t) measured on the inner quarter-box",
    )


def check_lp_bound(op, mv: MeasureVector, p, t, fs, cfg: SolverConfig | None = None, tol_rel=1e-3,
                   preset=None) -> VerificationReport:
    """``||T(t)f||_{L^p} <= 2^{(p-1)/p} ||f||_{L^p}`` with ``L^p`` taken against ``|mu_k| = xi_k mu``."""
    grid = mv.grid
    cfg = cfg or SolverConfig()
    st = Stepper(op, grid, cfg)
    const = 2.0 ** ((p - 1) / p)
    worst, wit, lhs_w, rhs_w = -np.inf, None, 0.0, 0.0
    for j, f in enumerate(fs):
        u = solve_cauchy(op, 0.0, t, f, grid=grid, cfg=cfg, stepper=st).final
        lhs = mv.integrate(u, absolute=True, power=p) ** (1 / p)
        rhs = const * mv.integrate(f, absolute=True, power=p) ** (1 / p)
        ratio = lhs / rhs - 1.0 if rhs > 0 else (0.0 if lhs == 0 else np.inf)
        if ratio > worst:
            worst, wit, lhs_w, rhs_w = ratio, {"trial": j}, lhs, rhs
    return VerificationReport("lp_bound", preset or _name(op), lhs_w, rhs_w, worst, tol_rel, wit,
                              {"p": p, "t": t, "constant": const})


def _scalar_part(op):
    from .operators import FrozenFamily, OperatorFamily

    if isinstance(op, OperatorFamily):
        return op.scalar_part(0)
    if isinstance(op, FrozenFamily):
        return op.scalar_part(0)
    raise ConfigError("domination check needs an OperatorFamily")


def check_domination(op, f: GridFunction, t_list, cfg: SolverConfig | None = None, c_cmp=10.0,
                     preset=None) -> VerificationReport:
    """``max(|T(t)f|^2, |T^P(t)f|^2) <= T(t)|f|^2`` pointwise on the inner half-box."""
    grid = f.grid
    cfg = cfg or SolverConfig()
    T = max(t_list)
    ts = sorted(t_list)
    u = solve_cauchy(op, 0.0, T, f, grid=grid, cfg=cfg, snapshots=ts)
    uP = solve_cauchy(auxiliary_of(op), 0.0, T, f, grid=grid, cfg=cfg, snapshots=ts)
    sq = GridFunction(grid, np.sum(f.values**2, axis=0))
    v = solve_cauchy(_scalar_part(op), 0.0, T, sq, grid=grid, cfg=cfg, snapshots=ts)
    inner = grid.inner(0.5)
    worst, wit = -np.inf, None
    for t in ts:
        rhs = restrict(v.at(t), inner).values[0]
        for label, sol in (("T", u), ("T^P", uP)):
            lhs = np.sum(restrict(sol.at(t), inner).values ** 2, axis=0)
            gap = (lhs - rhs).reshape(-1)
            i = int(np.argmax(gap))
            if gap[i] > worst:
                worst = float(gap[i])
                wit = {"t": float(t), "operator": label, "x": restrict(sol.at(t), inner).grid.points[i].tolist()}
    dt = cfg.resolve_dt(grid, T)
    scale = max(1.0, float(np.max(sq.values)))
    tol = c_cmp * (grid.h**2 + dt) * scale
    return VerificationReport("domination", preset or _name(op), worst, 0.0, worst, tol, wit, {"dt": dt, "h": grid.h})


def check_fixed_points(op, analysis: CouplingAnalysis, t_list, grid: UniformGrid, cfg: SolverConfig | None = None,
                       tol=1e-4, preset=None) -> VerificationReport:
    """``T(t) eta = eta``, ``T^P(t) xi = xi`` and ``C eta = C^P xi = 0`` on the grid."""
    cfg = cfg or SolverConfig()
    X = grid.points
    C = op.coupling(0.0, X)
    CP = auxiliary_of(op).coupling(0.0, X)
    kern = max(float(np.abs(np.einsum("khn,h->kn", C, analysis.eta)).max()),
               float(np.abs(np.einsum("khn,h->kn", CP, analysis.xi)).max()))
    ts = sorted(t for t in t_list if t > 0)
    worst = 0.0
    if ts:
        for fam, vec in ((op, analysis.eta), (auxiliary_of(op), analysis.xi)):
            f = _constant_field(grid, vec)
            res = solve_cauchy(fam, 0.0, ts[-1], f, grid=grid, cfg=cfg, snapshots=ts)
            worst = max(worst, max(float(np.max(np.abs((u - f).values))) for u in res.snapshots))
    violation = max(worst - tol, kern - 1e-10)
    return VerificationReport("fixed_points", preset or _name(op), worst, tol, violation, 0.0, None,
                              {"semigroup_residual": worst, "kernel_residual": kern})


def gradient_energy(u: GridFunction, density: GridFunction):
    """``int sum_k |grad u_k|^2 dmu`` with the trapezoid rule."""
    w = trapezoid_weights(u.grid) * density.values[0]
    total = 0.0
    for a in range(u.grid.d):
        total += float(np.sum(derivative(u, (a,)).values ** 2 * w[None]))
    return total


def check_gradient_decay(op, f: GridFunction, density: GridFunction, horizon, cfg: SolverConfig | None = None,
                         n_times=8, factor=0.05, preset=None) -> VerificationReport:
    """``I(t) = int |J_x T(t) f|^2 dmu`` decreases to ``<= factor I(0)``; reports the fitted rate."""
    grid = f.grid
    cfg = cfg or SolverConfig()
    ts = np.geomspace(horizon / 2 ** (n_times - 1), horizon, n_times)
    res = solve_cauchy(op, 0.0, horizon, f, grid=grid, cfg=cfg, snapshots=ts)
    energy = [gradient_energy(u, density) for u in res.snapshots]
    floor = 1e-24
    breach = 0.0
    for a, b in zip(energy, energy[1:]):
        if b > floor and b > a:
            breach = max(breach, b - a)
    late = [(t, e) for t, e in zip(res.times, energy) if t >= horizon / 4 and e > floor]
    rate = float(np.polyfit([t for t, _ in late], np.log([e for _, e in late]), 1)[0]) if len(late) >= 2 else -math.inf
    violation = energy[-1] - factor * energy[0]
    if breach > 0:
        violation = max(violation, breach)
    return VerificationReport(
        "gradient_decay", preset or _name(op), energy[-1], factor * energy[0], violation, floor,
        {"energies": energy}, {"times": res.times, "energies": energy, "log_rate": rate},
    )
