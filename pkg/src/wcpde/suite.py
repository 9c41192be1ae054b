"""Manifest-driven verification runs with deterministic CSV/JSON output.

A manifest is a JSON document::

    {"seed": 20251019,
     "checks": [{"check": "comparison", "preset": "ou-scalar", "params": {"T": 0.5}}, ...]}

Every item gets its own random stream derived from ``(seed, position)``, so
results do not depend on the worker count or on scheduling.  Output layout
under ``out``:

``suite.csv``
    columns ``check, preset, worst_violation, tolerance, verdict`` (one row per report).
``index.json``
    counts and, per item, verdict, margin ``tolerance - worst_violation`` and the report file.
``reports/NNN_<check>_<preset>[_j].json``
    one VerificationReport per file.

Verdicts are ``PASS``, ``FAIL`` or ``ERROR`` (exception captured; the message
is stored in the report notes).  Worker count comes from ``WCPDE_WORKERS``.
"""

from __future__ import annotations

import csv
import json
import math
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import estimates as est
from . import invariant as inv
from . import resolvent as res
from .data import RandomSmoothField, gaussian, random_smooth, step_profile
from .errors import ConfigError, WCPDEError
from .evolution import SolverConfig, duhamel_check, expanding_domain_study
from .grid import GridFunction, UniformGrid, restrict
from .operators import auxiliary_of, check_hypotheses, row_sum_bound
from .presets import PRESET_NAMES, load_preset
from .reports import VerificationReport, to_jsonable

__all__ = [
    "CHECKS",
    "MANIFEST_SCHEMA",
    "SuiteSummary",
    "validate_manifest",
    "load_manifest",
    "default_manifest",
    "run_item",
    "run_suite",
    "write_reports",
    "worker_count",
]

WORKERS_ENV = "WCPDE_WORKERS"
CSV_COLUMNS = ("check", "preset", "worst_violation", "tolerance", "verdict")


# --- helpers ----------------------------------------------------------------------------


def _grid(preset, p, key_R="R", key_n="n"):
    g = preset.grid
    if key_R in p or key_n in p:
        return UniformGrid.box(float(p.get(key_R, g.radius)), int(p.get(key_n, g.n)), g.d)
    return g


def _cfg(preset, p):
    cfg = preset.config
    if "config" in p:
        cfg = SolverConfig.from_json({**cfg.to_json(), **p["config"]})
    return cfg


def _random(grid, m, rng, p, count):
    return [random_smooth(grid, m, rng, p.get("modes", 4), p.get("bandwidth", 1.5), 1.0, p.get("envelope", 2.0))
            for _ in range(count)]


def _combine(check, preset, reports, notes=""):
    """Worst of several reports, measured by ``worst_violation - tolerance``."""
    worst = max(reports, key=lambda r: r.worst_violation - r.tolerance)
    out = VerificationReport(check, preset, worst.lhs, worst.rhs, worst.worst_violation, worst.tolerance,
                             worst.witness, {"parts": [r.to_json() for r in reports]}, notes or worst.notes)
    return out


# --- checks -----------------------------------------------------------------------------
# Each check takes (preset, params, rng) and returns a list of VerificationReports.


def _hypotheses(pre, p, rng):
    rep = check_hypotheses(pre.operator, p.get("which", pre.hypotheses), tuple(p.get("interval", pre.interval)),
                           _grid(pre, p), n_t=p.get("n_t", 9))
    bad = rep.violated()
    if not pre.name.startswith("example1"):
        bad = [k for k in bad if not k.startswith("(")]
    return [VerificationReport.from_flag("hypotheses", pre.name, not bad, rep.to_json(),
                                         {"violated": bad} if bad else None)]


def _coupling(pre, p, rng):
    exp = pre.expected
    an = inv.analyze_coupling(pre.operator, _grid(pre, p).points[:: max(1, pre.grid.size // 50)])
    if "eigenvalues" not in exp:
        return [VerificationReport.from_flag("coupling_analysis", pre.name, an.passed, an.to_json())]
    errs = {}
    want = np.sort(exp["eigenvalues"]["value"])
    errs["eigenvalues_C"] = float(np.max(np.abs(np.sort(an.eigenvalues[0].real) - want)))
    errs["eigenvalues_CP"] = float(np.max(np.abs(np.sort(an.eigenvalues_P[0].real) - want)))
    for key, got in (("eta", an.eta), ("xi", an.xi)):
        w = np.asarray(exp[key]["value"], dtype=float)
        errs[key] = float(np.max(np.abs(got - w / np.linalg.norm(w))))
    worst = max(errs.values())
    tol = float(p.get("tol", 1e-10))
    return [VerificationReport("coupling_analysis", pre.name, worst, 0.0, worst, tol, None,
                               {**errs, "eta": an.eta, "xi": an.xi, "eigenvalues": np.sort(an.eigenvalues[0].real)})]


def _comparison(pre, p, rng):
    """Comparison at the preset grid and after one grid and step refinement."""
    op = pre.operator
    grid = _grid(pre, p)
    cfg = _cfg(pre, p)
    s, T = p.get("s", 0.0), p.get("T", 1.0)
    dt = p.get("dt", cfg.resolve_dt(grid, T - s))
    snaps = np.linspace(s, T, p.get("n_snapshots", 5))[1:]
    out = []
    for _ in range(p.get("n_data", 1)):
        fn = _field(op, rng, grid, {"envelope": 2.0, **p})
        a = est.check_comparison(op, s, T, fn, grid, cfg.with_(dt=dt), snaps, p.get("c_cmp", 10.0), pre.name)
        b = est.check_comparison(op, s, T, fn, grid.refine(), cfg.with_(dt=dt / 2), snaps, p.get("c_cmp", 10.0),
                                 pre.name)
        va, vb = a.measured["max_violation"], b.measured["max_violation"]
        shrink = max(0.0, vb - va) if va > 0 else max(0.0, vb)
        viol = max(a.worst_violation - a.tolerance, b.worst_violation - b.tolerance)
        if shrink > 0:
            viol = max(viol, shrink)
        out.append(VerificationReport(
            "comparison", pre.name, a.lhs, a.rhs, viol + a.tolerance, a.tolerance, a.witness,
            {"coarse": a.to_json(), "fine": b.to_json(), "shrink_breach": shrink},
            "max(|u_j| - u^P_j) at two resolutions; must respect 10(h^2+dt) and shrink under refinement",
        ))
    return [_combine("comparison", pre.name, out)] if len(out) > 1 else out


def _sup_bound(pre, p, rng):
    op = pre.operator
    grid = _grid(pre, p)
    s, T = p.get("s", 0.0), p.get("T", 1.0)
    M = row_sum_bound(auxiliary_of(op), (s, T), grid).M_J
    snaps = np.linspace(s, T, p.get("n_snapshots", 5))[1:]
    reps = [est.check_sup_bound(op, s, T, f, grid, _cfg(pre, p), snaps, p.get("tol_rel", 1e-3), M, pre.name)
            for f in _random(grid, op.m, rng, p, p.get("n_data", 5))]
    return [_combine("sup_bound", pre.name, reps)]


def _decay(pre, p, rng):
    op = pre.operator
    grid = UniformGrid.box(p.get("R", 2.0), p.get("n", 2001), op.d)
    w = p.get("width_cells", 5) * grid.h
    T = p.get("T", 0.04)
    out = []
    for h, k in p.get("pairs", [[0, 1], [0, 2], [1, 2], [0, 3]]):
        f = step_profile(h, w, [1.0] * op.m, p.get("envelope", 0.5))
        fit = est.measure_derivative_decay(op, 0.0, T, f, h, k, grid, window=(4 * w * w, 1.0),
                                           n_lags=p.get("n_lags", 10), slope_tol=p.get("slope_tol", 0.15))
        rep = fit.report(f"derivative_decay_{h}{k}", pre.name)
        if "slope_range" in p and (h, k) == (0, 1):
            lo, hi = p["slope_range"]
            inside = lo <= fit.slope <= hi
            rep.measured["slope_range"] = [lo, hi]
            if not inside:
                rep.worst_violation = max(rep.worst_violation, rep.tolerance + 1.0)
        out.append(rep)
    return out


def _interp_estimates(pre, p, rng):
    op = pre.operator
    grid = UniformGrid.box(p.get("R", 2.0), p.get("n", 2001), op.d)
    w = p.get("width_cells", 5) * grid.h
    out = []
    for beta, theta in p.get("pairs", [[0, 0.5], [0, 1.5], [1, 2.5]]):
        f = step_profile(int(beta), w, [1.0] * op.m, p.get("envelope", 0.5))
        out.append(est.check_interpolation_estimates(op, p.get("tbar", 0.3), theta, beta, f, grid,
                                                     window=(4 * w * w, 1.0), preset=pre.name))
    return out


def _frozen_intercepts(pre, p, rng):
    op = pre.operator
    grid = UniformGrid.box(p.get("R", 2.0), p.get("n", 2001), op.d)
    w = p.get("width_cells", 5) * grid.h
    beta, theta = p.get("pair", [0, 0.5])
    f = step_profile(int(beta), w, [1.0] * op.m, p.get("envelope", 0.5))
    return [est.frozen_time_intercepts(op, p.get("tbars", [0.0, 0.5, 1.0]), theta, beta, f, grid,
                                       window=(4 * w * w, 1.0), preset=pre.name)]


def _evolution_law(pre, p, rng):
    op = pre.operator
    grid = _grid(pre, p)
    f = _random(grid, op.m, rng, p, 1)[0]
    return [est.check_evolution_law_refinement(op, p.get("s", 0.0), p.get("r", 0.3337), p.get("t", 1.0), f, grid,
                                               _cfg(pre, p).with_(dt=p.get("dt", 0.01)), preset=pre.name)]


def _duhamel(pre, p, rng):
    op = pre.operator
    grid = _grid(pre, p)
    f, g0 = _random(grid, op.m, rng, p, 2)
    src = (lambda t: np.cos(t) * g0.flat())
    return [duhamel_check(op, p.get("s", 0.0), p.get("T", 0.5), f, src, grid, _cfg(pre, p), p.get("tol", 5e-3),
                          pre.name)]


def _continuity(pre, p, rng):
    op = pre.operator
    grid = _grid(pre, p)
    f, pert = _random(grid, op.m, rng, p, 2)
    seq = [f + pert * (0.5**j) * 1e-2 for j in range(p.get("n_seq", 5))]
    return [est.check_continuity_in_data(op, p.get("s", 0.0), p.get("T", 0.5), f, seq, grid, _cfg(pre, p),
                                         p.get("tol", 1e-3), preset=pre.name)]


def _joint_continuity(pre, p, rng):
    op = pre.operator
    grid = _grid(pre, p)
    f = _random(grid, op.m, rng, p, 1)[0]
    return [est.check_joint_continuity(op, f, tuple(p.get("t_window", [0.0, 1.0])), p.get("tau", 0.1), grid,
                                       _cfg(pre, p), p.get("levels", 3), preset=pre.name)]


def _expanding(pre, p, rng):
    op = pre.operator
    radii = p.get("radii", [2.0, 4.0, 8.0])
    h = p.get("h", 0.04)
    inner = UniformGrid.with_spacing(radii[0], h, op.d).inner(0.5)
    table = expanding_domain_study(op, 0.0, p.get("T", 0.5), gaussian(0.0, 0.5, [1.0] * op.m), radii, inner,
                                   _cfg(pre, p), h)
    return [VerificationReport.from_flag("expanding_domain", pre.name, table.passed, {"rows": table.rows()})]


def _resolvent_agreement(pre, p, rng):
    op = pre.operator
    grid = _grid(pre, p)
    tbar = p.get("tbar", 0.3)
    cfg = _cfg(pre, p)
    M = res.frozen_row_sum(op, tbar, grid)
    f = _random(grid, op.m, rng, p, 1)[0]
    tol = max(5e-3, 10 * cfg.linear_tol)
    out = []
    for off in p.get("offsets", [1.0, 5.0]):
        lam = M + off
        q = res.resolvent_quadrature(op, tbar, lam, f, SolverConfig(theta=0.5), M=M)
        d = res.elliptic_direct(op, tbar, lam, f, cfg, M=M)
        diff = float(np.max(np.abs(restrict(q.solution - d.solution, grid.inner(0.5)).values)))
        out.append(VerificationReport("resolvent_agreement", pre.name, diff, tol, diff, tol, {"lambda": lam},
                                      {"lambda": lam, "quadrature": q.to_json(), "direct": d.to_json()}))
    return out


def _resolvent_identity(pre, p, rng):
    op = pre.operator
    grid = _grid(pre, p)
    tbar = p.get("tbar", 0.3)
    M = res.frozen_row_sum(op, tbar, grid)
    f = _random(grid, op.m, rng, p, 1)[0]
    lam, mu = p.get("lambda", 2 * M + 1), p.get("mu", 2 * M + 3)
    return [res.check_resolvent_identity(op, tbar, lam, mu, f, p.get("method", "direct"), _cfg(pre, p),
                                         p.get("tol_rel", 1e-4), pre.name)]


def _resolvent_bound(pre, p, rng):
    op = pre.operator
    grid = _grid(pre, p)
    tbar = p.get("tbar", 0.3)
    M = res.frozen_row_sum(op, tbar, grid)
    fs = _random(grid, op.m, rng, p, p.get("n_data", 10))
    return [res.check_resolvent_bound(op, tbar, M + p.get("offset", 1.0), fs, "direct", _cfg(pre, p),
                                      p.get("tol_rel", 1e-3), M, pre.name)]


def _manufactured(pre, p):
    op = pre.operator
    return res.ManufacturedGaussian(op.d, [1.0 / (k + 1) for k in range(op.m)], width=p.get("width", 0.8),
                                    eps=p.get("eps", 0.3))


def _manufactured_elliptic(pre, p, rng):
    op = pre.operator
    grid = UniformGrid.box(p.get("R", 4.0), p.get("n", 1601 if op.d == 1 else 161), op.d)
    tbar = p.get("tbar", 0.3)
    lam = res.frozen_row_sum(op, tbar, grid) + p.get("offset", 1.0)
    err, r = res.manufactured_elliptic(op, tbar, lam, _manufactured(pre, p), grid, _cfg(pre, p))
    tol = p.get("tol", 1e-3)
    return [VerificationReport("manufactured_elliptic", pre.name, err, tol, err, tol, None,
                               {"c2_error": err, "lambda": lam, "h": grid.h, "residual": r.residual})]


def _manufactured_parabolic(pre, p, rng):
    op = pre.operator
    grid = UniformGrid.box(p.get("R", 4.0), p.get("n", 801), op.d)
    cfg = SolverConfig(theta=0.5, dt=p.get("dt", 1e-3))
    err, _ = res.manufactured_parabolic(op, 0.0, p.get("T", 0.5), _manufactured(pre, p), grid, cfg,
                                        np.linspace(0, p.get("T", 0.5), 6)[1:])
    tol = p.get("tol", 1e-3)
    return [VerificationReport("manufactured_parabolic", pre.name, err, tol, err, tol, None,
                               {"c2_error": err, "h": grid.h, "dt": cfg.dt})]


def _field(op, rng, grid, p):
    return RandomSmoothField(op.d, op.m, rng, p.get("modes", 4), p.get("bandwidth", 1.5), 1.0,
                             p.get("envelope", 1.5), grid)


def _schauder(pre, p, rng):
    op = pre.operator
    grid = UniformGrid.box(p.get("R", 4.0), p.get("n", 401 if op.d == 1 else 61), op.d)
    fld = _field(op, rng, grid, p)
    s, T = p.get("interval", [0.0, 1.0])
    M = row_sum_bound(auxiliary_of(op), (s, T), grid).M_J
    return [res.schauder_experiment(op, lambda t, X: fld(X) * (1 + 0.3 * np.sin(t)), M + p.get("offset", 1.0),
                                    p.get("theta", 0.5), (s, T), grid, _cfg(pre, p), p.get("n_times", 5),
                                    p.get("r0_phys", 0.3), preset=pre.name)]


def _schauder_parabolic(pre, p, rng):
    op = pre.operator
    grid = UniformGrid.box(p.get("R", 4.0), p.get("n", 401 if op.d == 1 else 61), op.d)
    fld, gfld = _field(op, rng, grid, p), _field(op, rng, grid, p)
    cfg = SolverConfig(theta=0.5, dt=p.get("dt", 2e-3))
    return [res.parabolic_schauder_experiment(op, fld, lambda t, X: gfld(X) * np.cos(t), tuple(p.get("interval", [0.0, 0.5])),
                                              grid, p.get("theta", 0.5), cfg, r0_phys=p.get("r0_phys", 0.3),
                                              preset=pre.name)]


def _interp_inequality(pre, p, rng):
    op = pre.operator
    grid = UniformGrid.box(p.get("R", 4.0), p.get("n", 401 if op.d == 1 else 61), op.d)
    seeds = rng.integers(0, 2**31, size=p.get("n_data", 5))

    def gs(gr):
        return [random_smooth(gr, op.m, np.random.default_rng(int(sd)), envelope=p.get("envelope", 1.5))
                for sd in seeds]

    return [res.check_interpolation_inequality(op, p.get("tbar", 0.3), p.get("theta", 0.5), gs, grid,
                                               cfg=_cfg(pre, p), preset=pre.name)]


def _density(pre, p, rng):
    """Stationary nullspace density against the closed-form scalar density in one dimension."""
    op = pre.operator
    grid = UniformGrid.box(p.get("R", 6.0), p.get("n", 601), op.d)
    sc = op.scalar_part(0) if op.m > 1 else op
    st = inv.scalar_invariant_density_stationary(sc, grid)
    cf = inv.scalar_invariant_density_1d(sc.Q[0][0][0], sc.b[0][0], grid)
    d = inv.l1_distance(st, cf)
    tol = p.get("tol", 1e-4)
    return [VerificationReport("stationary_density", pre.name, d, tol, d, tol, None, {"l1": d, "h": grid.h})]


def _measures(pre, p):
    op = pre.operator
    grid = _grid(pre, p)
    an = inv.analyze_coupling(op, grid.points[:: max(1, grid.size // 50)])
    mu = inv.scalar_invariant_density_stationary(op.scalar_part(0), grid)
    return grid, an, inv.build_system_measures(an, mu)


def _invariance(pre, p, rng):
    grid, an, mv = _measures(pre, p)
    fs = _random(grid, pre.m, rng, p, p.get("n_data", 3))
    return [inv.check_invariance(pre.operator, mv, fs, p.get("t_list", [0.1, 0.5, 1.0, 2.0]), _cfg(pre, p),
                                 p.get("tol", 5e-3), pre.name)]


def _asymptotics(pre, p, rng):
    grid, an, mv = _measures(pre, p)
    f = _random(grid, pre.m, rng, p, 1)[0]
    return [inv.check_asymptotics(pre.operator, f, mv, p.get("horizon", 6.0), _cfg(pre, p), preset=pre.name)]


def _lp(pre, p, rng):
    grid, an, mv = _measures(pre, p)
    fs = _random(grid, pre.m, rng, p, p.get("n_data", 10))
    return [inv.check_lp_bound(pre.operator, mv, q, p.get("t", 1.0), fs, _cfg(pre, p), preset=pre.name)
            for q in p.get("p", [1, 2, 4])]


def _domination(pre, p, rng):
    grid = _grid(pre, p)
    f = _random(grid, pre.m, rng, p, 1)[0]
    return [inv.check_domination(pre.operator, f, p.get("t_list", [0.1, 0.5, 1.0]), _cfg(pre, p),
                                 preset=pre.name)]


def _fixed_points(pre, p, rng):
    grid = _grid(pre, p)
    an = inv.analyze_coupling(pre.operator, grid.points[:: max(1, grid.size // 50)])
    return [inv.check_fixed_points(pre.operator, an, p.get("t_list", [0.5, 1.0, 2.0]), grid, _cfg(pre, p),
                                   p.get("tol", 1e-4), pre.name)]


def _gradient(pre, p, rng):
    op = pre.operator
    grid = _grid(pre, p)
    sc = op.scalar_part(0) if op.m > 1 else op
    mu = inv.scalar_invariant_density_stationary(sc, grid)
    f = GridFunction.from_callable(grid, lambda X: np.tile(np.sin(X[:, 0]), (op.m, 1)))
    return [inv.check_gradient_decay(op, f, mu, p.get("horizon", 4.0), _cfg(pre, p), preset=pre.name)]


CHECKS = {
    "hypotheses": _hypotheses,
    "coupling_analysis": _coupling,
    "comparison": _comparison,
    "sup_bound": _sup_bound,
    "derivative_decay": _decay,
    "interpolation_estimates": _interp_estimates,
    "frozen_time_intercepts": _frozen_intercepts,
    "evolution_law": _evolution_law,
    "duhamel": _duhamel,
    "continuity_in_data": _continuity,
    "joint_continuity": _joint_continuity,
    "expanding_domain": _expanding,
    "resolvent_agreement": _resolvent_agreement,
    "resolvent_identity": _resolvent_identity,
    "resolvent_bound": _resolvent_bound,
    "manufactured_elliptic": _manufactured_elliptic,
    "manufactured_parabolic": _manufactured_parabolic,
    "schauder_elliptic": _schauder,
    "schauder_parabolic": _schauder_parabolic,
    "interpolation_inequality": _interp_inequality,
    "stationary_density": _density,
    "invariance": _invariance,
    "asymptotics": _asymptotics,
    "lp_bound": _lp,
    "domination": _domination,
    "fixed_points": _fixed_points,
    "gradient_decay": _gradient,
}

MANIFEST_SCHEMA = {
    "type": "object",
    "required": ["checks"],
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "description": {"type": "string"},
        "out": {"type": "string"},
        "checks": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["check", "preset"],
                "additionalProperties": False,
                "properties": {
                    "check": {"enum": sorted(CHECKS)},
                    "preset": {"enum": list(PRESET_NAMES)},
                    "params": {"type": "object"},
                    "overrides": {"type": "object"},
                },
            },
        },
    },
}


# --- running ------------------------------------------------------------------------------


def validate_manifest(manifest):
    try:
        jsonschema.validate(manifest, MANIFEST_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"manifest: {exc.message}") from exc
    return manifest


def load_manifest(path):
    try:
        obj = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc}") from exc
    return validate_manifest(obj)


def default_manifest():
    """The shipped manifest used by the acceptance suite."""
    text = resources.files("wcpde").joinpath("manifests/default.json").read_text()
    return validate_manifest(json.loads(text))


def worker_count():
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from exc
    return max(1, n)


def run_item(item, seed, index):
    """Run one manifest entry; exceptions become an ERROR report."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))
    name, check = item["preset"], item["check"]
    try:
        pre = load_preset(name, item.get("overrides"))
        return CHECKS[check](pre, dict(item.get("params", {})), rng)
    except (WCPDEError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        rep = VerificationReport(check, name, math.nan, math.nan, math.inf, 0.0, None,
                                 {"error": type(exc).__name__}, f"{type(exc).__name__}: {exc}")
        rep.measured["traceback"] = traceback.format_exc(limit=3)
        return [rep]


def _verdict(rep):
    if "error" in rep.measured:
        return "ERROR"
    return rep.verdict


class SuiteSummary:
    def __init__(self, items):
        self.items = items  # list of (item, [reports])

    @property
    def reports(self):
        return [r for _, reps in self.items for r in reps]

    @property
    def counts(self):
        c = {"PASS": 0, "FAIL": 0, "ERROR": 0}
        for r in self.reports:
            c[_verdict(r)] += 1
        return c

    @property
    def all_passed(self):
        c = self.counts
        return c["FAIL"] == 0 and c["ERROR"] == 0

    @property
    def exit_code(self):
        return 0 if self.all_passed else 1

    def rows(self):
        return [(r.check, r.preset, r.worst_violation, r.tolerance, _verdict(r)) for r in self.reports]


def _fmt(x):
    return repr(float(x))


def write_reports(summary: SuiteSummary, out):
    """Serialised writing of the per-report JSON, the suite CSV and the index."""
    out = Path(out)
    (out / "reports").mkdir(parents=True, exist_ok=True)
    index = []
    for i, (item, reps) in enumerate(summary.items):
        for j, r in enumerate(reps):
            suffix = f"_{j}" if len(reps) > 1 else ""
            rel = f"reports/{i:03d}_{item['check']}_{item['preset']}{suffix}.json"
            (out / rel).write_text(json.dumps(to_jsonable(r.to_json()), indent=2, sort_keys=True) + "\n")
            index.append({"check": r.check, "preset": r.preset, "verdict": _verdict(r),
                          "worst_violation": r.worst_violation, "tolerance": r.tolerance,
                          "margin": r.tolerance - r.worst_violation, "file": rel})
    with open(out / "suite.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for check, preset, wv, tol, verdict in summary.rows():
            w.writerow([check, preset, _fmt(wv), _fmt(tol), verdict])
    (out / "index.json").write_text(json.dumps(to_jsonable({"counts": summary.counts, "items": index}),
                                               indent=2, sort_keys=True) + "\n")
    return out


def run_suite(manifest, out=None, workers=None) -> SuiteSummary:
    """Validate and execute ``manifest``; write outputs to ``out`` when given."""
    validate_manifest(manifest)
    seed = manifest.get("seed", 0)
    items = manifest["checks"]
    workers = worker_count() if workers is None else max(1, int(workers))
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_item, items, [seed] * len(items), range(len(items))))
    else:
        results = [run_item(it, seed, i) for i, it in enumerate(items)]
    summary = SuiteSummary(list(zip(items, results)))
    if out is not None:
        write_reports(summary, out)
    return summary
