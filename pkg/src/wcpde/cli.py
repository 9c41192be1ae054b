"""Command-line entry point ``wcpde``.

Subcommands: ``validate``, ``evolve``, ``verify``, ``resolvent``,
``invariant``, ``decay``.  Every subcommand accepts ``--out DIR``.  Exit
codes: 0 all checks pass, 1 any check fails, 2 configuration error.

Tabular outputs are CSV:

* grid functions: ``component, x_1..x_d, value`` with a ``.json`` sidecar (R, n_g, m, d);
* suite and per-command summaries: ``check, preset, worst_violation, tolerance, verdict``;
* decay fits: ``label, lag, norm, normalized``;
* invariant densities: ``x_1..x_d, mu, mu_1..mu_m``.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .data import initial_from_spec, step_profile
from .errors import ConfigError, UnknownPreset, WCPDEError
from .evolution import SolverConfig, solve_cauchy
from .grid import UniformGrid, holder_norm, restrict, save_grid_function
from .operators import operator_from_config
from .presets import load_preset
from .reports import VerificationReport, to_jsonable

__all__ = ["main", "build_parser", "run_experiment"]

CONFIG_ERRORS = (ConfigError, UnknownPreset, json.JSONDecodeError, KeyError, TypeError)


def _dump(obj, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _summary_csv(reports, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["check", "preset", "worst_violation", "tolerance", "verdict"])
        for r in reports:
            w.writerow([r.check, r.preset, repr(float(r.worst_violation)), repr(float(r.tolerance)), r.verdict])


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def _preset_grid(pre, R=None, n=None):
    if R is None and n is None:
        return pre.grid
    return UniformGrid.box(R if R is not None else pre.grid.radius, n if n is not None else pre.grid.n, pre.d)


# --- evolve ---------------------------------------------------------------------------------


def run_experiment(spec, out=None):
    """Run an experiment spec; returns the EvolutionResult.

    ``{operator: <preset name> | <inline config>, s, T, snapshots, domain: {R, n_g},
    config: {theta, dt, ...}, initial: {kind, ...}, seed}``
    """
    if not isinstance(spec, dict) or "operator" not in spec:
        raise ConfigError("experiment spec needs an 'operator' entry")
    src = spec["operator"]
    if isinstance(src, str):
        pre = load_preset(src)
        op, grid, cfg = pre.operator, pre.grid, pre.config
    elif isinstance(src, dict):
        op = operator_from_config(src, src.get("name", "inline"))
        grid, cfg = UniformGrid.box(6.0, None, op.d), SolverConfig()
    else:
        raise ConfigError("operator must be a preset name or an inline config object")
    dom = spec.get("domain", {})
    if dom:
        grid = UniformGrid.box(float(dom.get("R", grid.radius)), int(dom.get("n_g", grid.n)), op.d)
    if "config" in spec:
        cfg = SolverConfig.from_json({**cfg.to_json(), **spec["config"]})
    s, T = float(spec.get("s", 0.0)), float(spec.get("T", 1.0))
    f = initial_from_spec(spec.get("initial"), grid, op.m, spec.get("seed", 0))
    res = solve_cauchy(op, s, T, f, grid=grid, cfg=cfg, snapshots=spec.get("snapshots"))
    if out is not None:
        out = Path(out)
        files = []
        for i, (t, u) in enumerate(zip(res.times, res.snapshots)):
            name = f"u_{i:03d}.csv"
            save_grid_function(u, out / name, {"t": t})
            files.append({"t": t, "file": name})
        _dump({"operator": getattr(op, "name", "inline"), "s": s, "T": T, "config": cfg.to_json(),
               "snapshots": files, "diagnostics": res.diagnostics}, out / "result.json")
    return res


def _cmd_evolve(args):
    res = run_experiment(_read_json(args.spec), args.out)
    sups = [float(np.max(np.abs(u.values))) for u in res.snapshots]
    print(json.dumps(to_jsonable({"times": res.times, "sup_norms": sups}), indent=2))
    return 0


# --- validate -------------------------------------------------------------------------------


def _cmd_validate(args):
    overrides = json.loads(args.overrides) if args.overrides else None
    from .errors import SelfValidationFailed

    try:
        pre = load_preset(args.preset, overrides)
    except SelfValidationFailed as exc:
        print(f"FAIL {args.preset}: {exc}")
        return 1
    doc = pre.to_json()
    if args.out:
        _dump(doc, Path(args.out) / f"{pre.name}.json")
    print(json.dumps(to_jsonable({"name": pre.name, "expected": pre.expected, "measured": pre.measured}), indent=2))
    print(f"PASS {pre.name}")
    return 0


# --- verify -----------------------------------------------------------------------------------


def _cmd_verify(args):
    from .suite import default_manifest, load_manifest, run_suite

    manifest = default_manifest() if args.manifest == "default" else load_manifest(args.manifest)
    out = args.out or manifest.get("out")
    summary = run_suite(manifest, out)
    for check, preset, wv, tol, verdict in summary.rows():
        print(f"{verdict:5s} {check:26s} {preset:28s} worst={wv:.3g} tol={tol:.3g}")
    c = summary.counts
    print(f"{c['PASS']} passed, {c['FAIL']} failed, {c['ERROR']} errors")
    return summary.exit_code


# --- resolvent ------------------------------------------------------------------------------


def _cmd_resolvent(args):
    from .data import random_smooth
    from .resolvent import frozen_row_sum, resolvent

    pre = load_preset(args.preset)
    op, grid = pre.operator, _preset_grid(pre, args.R, args.n)
    f = random_smooth(grid, op.m, np.random.default_rng(args.seed), envelope=2.0)
    M = frozen_row_sum(op, args.tbar, grid)
    lams = args.lam if args.lam else [M + 1.0, M + 5.0]
    methods = ["direct", "quadrature"] if args.method == "both" else [args.method]
    out = Path(args.out) if args.out else None
    reports, results = [], []
    inner = grid.inner(0.5)
    for lam in lams:
        sols = {}
        for meth in methods:
            r = resolvent(op, args.tbar, lam, f, meth, M=M)
            sols[meth] = r
            doc = r.to_json()
            doc["M"] = M
            if args.theta is not None:
                num = holder_norm(restrict(r.solution, inner), 2 + args.theta)
                den = holder_norm(restrict(f, inner), args.theta)
                doc["holder_ratio"] = num / den
            results.append(doc)
            if out is not None:
                tag = f"lambda_{lam:.6g}_{meth}"
                save_grid_function(r.solution, out / f"{tag}.csv", {"lambda": lam, "method": meth})
                _dump(doc, out / f"{tag}.json")
        if len(sols) == 2:
            diff = float(np.max(np.abs(restrict(sols["direct"].solution - sols["quadrature"].solution,
                                                inner).values)))
            reports.append(VerificationReport("resolvent_agreement", pre.name, diff, 5e-3, diff, 5e-3, None,
                                              {"lambda": lam}))
    print(json.dumps(to_jsonable(results), indent=2))
    if out is not None:
        _summary_csv(reports, out / "summary.csv")
    for r in reports:
        print(f"{r.verdict} resolvent_agreement lambda={r.measured['lambda']:.6g} diff={r.lhs:.3g}")
    return 0 if all(r.passed for r in reports) else 1


# --- invariant ------------------------------------------------------------------------------


def _cmd_invariant(args):
    from .data import random_smooth
    from .invariant import (analyze_coupling, build_system_measures, check_asymptotics, check_fixed_points,
                            check_invariance, scalar_invariant_density_stationary)

    pre = load_preset(args.preset)
    op, grid = pre.operator, _preset_grid(pre, args.R, args.n)
    an = analyze_coupling(op, grid.points[:: max(1, grid.size // 50)])
    out = Path(args.out) if args.out else None
    if out is not None:
        _dump(an.to_json(), out / "coupling_analysis.json")
    sc = op.scalar_part(0) if op.m > 1 else op
    mu = scalar_invariant_density_stationary(sc, grid)
    mv = build_system_measures(an, mu)
    if out is not None:
        mv.save(out / "density.csv")
    rng = np.random.default_rng(args.seed)
    fs = [random_smooth(grid, op.m, rng, envelope=2.0) for _ in range(3)]
    reports = [
        check_invariance(op, mv, fs, [0.1, 0.5, 1.0, 2.0], preset=pre.name),
        check_asymptotics(op, fs[0], mv, args.horizon, preset=pre.name),
        check_fixed_points(op, an, [0.5, 1.0], grid, preset=pre.name),
    ]
    for r in reports:
        print(f"{r.verdict} {r.check} worst={r.worst_violation:.3g} tol={r.tolerance:.3g}")
        if out is not None:
            r.write(out / f"{r.check}.json")
    if out is not None:
        _summary_csv(reports, out / "summary.csv")
    return 0 if all(r.passed for r in reports) else 1


# --- decay ----------------------------------------------------------------------------------


def _parse_pairs(text):
    try:
        pairs = [tuple(int(v) for v in item.split(",")) for item in text.split()]
    except ValueError as exc:
        raise ConfigError(f"bad --pairs {text!r}; use e.g. '0,1 0,2'") from exc
    if any(len(p) != 2 for p in pairs):
        raise ConfigError("each pair needs two integers h,k")
    return pairs


def _cmd_decay(args):
    from .estimates import measure_derivative_decay

    pre = load_preset(args.preset)
    op = pre.operator
    grid = UniformGrid.box(args.R if args.R is not None else 2.0, args.n if args.n is not None else 2001, op.d)
    w = 5 * grid.h
    reports, rows = [], []
    for h, k in _parse_pairs(args.pairs):
        f = step_profile(h, w, [1.0] * op.m, 0.5)
        fit = measure_derivative_decay(op, 0.0, args.T, f, h, k, grid, window=(4 * w * w, 1.0))
        rep = fit.report(f"derivative_decay_{h}{k}", pre.name)
        reports.append(rep)
        rows += [(fit.label, lag, n, z) for lag, n, z in zip(fit.lags, fit.norms, fit.normalized)]
        print(f"{rep.verdict} {fit.label} slope={fit.slope:.4f} target={fit.target:.2f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "decay.csv", "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["label", "lag", "norm", "normalized"])
            for lab, lag, n, z in rows:
                wr.writerow([lab, repr(float(lag)), repr(float(n)), repr(float(z))])
        for r in reports:
            r.write(out / f"{r.check}.json")
        _summary_csv(reports, out / "summary.csv")
    return 0 if all(r.passed for r in reports) else 1


# --- parser ---------------------------------------------------------------------------------


def build_parser():
    ap = argparse.ArgumentParser(prog="wcpde", description="Numerical laboratory for weakly coupled parabolic systems.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="output directory")
        return p

    p = common(sub.add_parser("validate", help="load and self-validate a preset"))
    p.add_argument("preset")
    p.add_argument("--overrides", help="JSON object of exponent overrides")
    p.set_defaults(func=_cmd_validate)

    p = common(sub.add_parser("evolve", help="run an experiment spec"))
    p.add_argument("spec", help="experiment spec JSON")
    p.set_defaults(func=_cmd_evolve)

    p = common(sub.add_parser("verify", help="run a suite manifest ('default' for the shipped one)"))
    p.add_argument("manifest")
    p.set_defaults(func=_cmd_verify)

    def preset_args(p):
        p.add_argument("--preset", required=True)
        p.add_argument("--R", type=float)
        p.add_argument("--n", type=int)
        p.add_argument("--seed", type=int, default=0)

    p = common(sub.add_parser("resolvent", help="resolvent by quadrature and/or direct solve"))
    preset_args(p)
    p.add_argument("--method", choices=["direct", "quadrature", "both"], default="both")
    p.add_argument("--lambda", dest="lam", type=float, nargs="+")
    p.add_argument("--theta", type=float, help="also report the C^{2+theta}/C^theta ratio")
    p.add_argument("--tbar", type=float, default=0.0)
    p.set_defaults(func=_cmd_resolvent)

    p = common(sub.add_parser("invariant", help="coupling analysis, invariant density and checks"))
    preset_args(p)
    p.add_argument("--horizon", type=float, default=6.0)
    p.set_defaults(func=_cmd_invariant)

    p = common(sub.add_parser("decay", help="derivative-decay slope fits"))
    preset_args(p)
    p.add_argument("--pairs", default="0,1 0,2 1,2 0,3")
    p.add_argument("--T", type=float, default=0.04)
    p.set_defaults(func=_cmd_decay)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CONFIG_ERRORS as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except WCPDEError as exc:
        print(f"FAIL: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
