"""Command line front end: ``orbinv {analyze,derive-force,verify,orbit}``.

Exit codes: 0 verdict or result produced, 2 Indeterminate verdict,
3 verification failed its threshold, 1 error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time

import numpy as np

from . import __version__, bozis, config, dynamics, exprlang

log = logging.getLogger("orbinv")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INDETERMINATE = 2
EXIT_VERIFY_FAILED = 3

FIELD_COLUMNS = ["x", "y", "b", "frame", "gamma", "Gamma", "lambda", "mu", "L", "M", "L_b", "M_b", "LM_b",
                 "ratio_b", "integrability", "P", "Q", "status"]


def _num(v):
    return f"{float(v):.16e}"


def _clean(obj):
    """JSON-safe copy: numpy scalars to float, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _write_json(path, data):
    with open(path, "w") as fh:
        json.dump(_clean(data), fh, indent=2, sort_keys=False)
        fh.write("\n")


def _write_fields(path, fields):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FIELD_COLUMNS)
        for fl in fields:
            vals = [fl.x, fl.y, fl.b, fl.frame, fl.gamma, fl.Gamma, fl.lam, fl.mu, fl.L, fl.M, fl.L_b, fl.M_b,
                    fl.LM_b, fl.ratio_b, fl.integrability_residual, fl.P, fl.Q]
            w.writerow([_num(v) for v in vals] + [fl.status])


def _outdir(cfg):
    out = cfg.get("out") or "."
    os.makedirs(out, exist_ok=True)
    return out


# commands -------------------------------------------------------------------------


def _classify(cfg):
    config.validate(cfg)
    spec = config.family_from(cfg)
    grid = config.grid_from(cfg, spec)
    tols = config.tolerances_from(cfg)
    verdict = bozis.classify(spec, grid, cfg["b_samples"], tols, order=int(cfg["order"]))
    return spec, grid, verdict


def cmd_analyze(cfg) -> int:
    t0 = time.perf_counter()
    spec, grid, verdict = _classify(cfg)
    out = _outdir(cfg)
    report = {
        "tool": "orbinv",
        "version": __version__,
        "verdict": verdict.branch,
        **verdict.as_dict(),
        "grid_points": len(grid),
        "config": {k: v for k, v in cfg.items() if k != "out"},
    }
    report.pop("branch")
    _write_json(os.path.join(out, "report.json"), report)
    _write_fields(os.path.join(out, "fields.csv"), verdict.fields)
    log.info("verdict %s (%.2fs): %s", verdict.branch, time.perf_counter() - t0, verdict.summary)
    print(verdict.branch)
    return EXIT_INDETERMINATE if verdict.branch == bozis.INDETERMINATE else EXIT_OK


def _expr_fn(text):
    ast = exprlang.parse(text)
    return lambda x, y: exprlang.eval_float(ast, {"x": x, "y": y})


def _derive(cfg):
    """Build the derived force; returns ``(force, sample_grid, extra_report)``."""
    d = cfg["derive"]
    anchor = tuple(float(v) for v in d["anchor"])
    X0 = float(d["X0"])
    if cfg.get("pq"):
        # manufactured fixture: the gradient of log X is given directly
        pq = cfg["pq"]
        g = cfg["grid"]
        grid = bozis.polar_grid(g["r_min"], g["r_max"], g["n_r"], g["theta_min"], g["theta_max"], g["n_theta"],
                                min_abs_x=g.get("min_abs_x", 0.05))
        P, Q, rho = _expr_fn(pq["P"]), _expr_fn(pq["Q"]), _expr_fn(pq["rho"])
        force = bozis.log_gradient_force(P, Q, rho, anchor, X0, path=d.get("path", "xy"), label="manufactured")
        return force, grid[:: int(d.get("stride", 1))], {"source": "pq", "pq": pq}
    spec, grid, verdict = _classify(cfg)
    if verdict.branch != bozis.SOLVABLE:
        raise bozis.NotSolvable(verdict)
    force = bozis.solve_force(spec, verdict, anchor, X0, grid=grid[:: int(d.get("stride", 1))],
                              path=d.get("path", "xy"))
    return force, grid[:: int(d.get("stride", 1))], {"source": "family", "verdict": verdict.as_dict()}


def _inverse_r_profile(grid, V):
    """Least-squares fit ``V = A / r + C``; returns ``A``, ``C`` and the max relative misfit."""
    r = np.array([math.hypot(x, y) for x, y in grid])
    v = np.array(V)
    good = np.isfinite(v)
    if good.sum() < 3:
        return None
    A = np.column_stack([1.0 / r[good], np.ones(good.sum())])
    (a, c), *_ = np.linalg.lstsq(A, v[good], rcond=None)
    misfit = float(np.max(np.abs(A @ np.array([a, c]) - v[good])) / (np.max(np.abs(v[good] - c)) + 1e-300))
    return {"inverse_r_coefficient": float(a), "offset": float(c), "max_relative_misfit": misfit}


def cmd_derive_force(cfg) -> int:
    force, grid, extra = _derive(cfg)
    out = _outdir(cfg)
    anchor = force.anchor
    try:
        V, pot = bozis.reconstruct_potential(force, anchor, grid)
    except bozis.NotConservative as err:
        V, pot = None, {"error": str(err), "point": err.point, "magnitude": err.magnitude}
    rows = []
    for x, y in grid:
        X, Y = force(x, y)
        rows.append((x, y, X, Y, V(x, y) if V is not None else math.nan))
    with open(os.path.join(out, "force.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "X", "Y", "V"])
        for row in rows:
            w.writerow([_num(v) for v in row])
    residuals = bozis.field_residuals(force, grid)
    report = {
        "tool": "orbinv",
        "version": __version__,
        "label": force.label,
        "gauge": force.gauge,
        "anchor": list(anchor),
        "path": cfg["derive"].get("path", "xy"),
        "residuals": residuals,
        "integrability_residual": force.diagnostics.get("pq_integrability"),
        "pq_spread": force.diagnostics.get("pq_spread"),
        "potential": pot,
        "potential_profile": _inverse_r_profile(grid, [r[4] for r in rows]) if V is not None else None,
        "config": {k: v for k, v in cfg.items() if k != "out"},
        **extra,
    }
    _write_json(os.path.join(out, "force.json"), report)
    print(f"derived force: {len(rows)} samples, centrality {residuals['centrality_relative']:.3e}")
    return EXIT_OK


def _force_from(cfg):
    f = cfg.get("force")
    if not f:
        raise config.ConfigError("config has no force")
    kind = f.get("kind")
    if kind == "newton":
        return bozis.newton_force(float(f.get("F0", 1.0)))
    if kind == "harmonic":
        return bozis.harmonic_force(float(f.get("k", 1.0)))
    if kind == "manev":
        return dynamics.manev_field(dynamics.ManevParams(float(f.get("F0", 1.0)), float(f.get("p", 1.0)),
                                                         float(f["b"]), f.get("beta_mode", "binet")))
    if kind == "expression":
        return bozis.expression_force(f["X"], f["Y"], f.get("constants"))
    if kind == "derived-file":
        with open(f["path"]) as fh:
            saved = json.load(fh)
        sub = config.load()
        sub = config._merge(sub, saved["config"])
        return _derive(sub)[0]
    if kind == "derived":
        return _derive(cfg)[0]
    raise config.ConfigError(f"unknown force kind {kind!r}")


def cmd_verify(cfg) -> int:
    config.validate(cfg, need_classification=False)
    spec = config.family_from(cfg)
    grid = config.grid_from(cfg, spec)
    force = _force_from(cfg)
    rep = bozis.check_force_against_family(spec, force, grid, cfg["b_samples"])
    threshold = float(cfg["tolerances"]["verify_threshold"])
    passed = bool(math.isfinite(rep.max_normalized) and rep.max_normalized < threshold)
    out = _outdir(cfg)
    _write_json(os.path.join(out, "verify.json"), {
        "tool": "orbinv",
        "version": __version__,
        "force": force.label,
        **rep.as_dict(),
        "threshold": threshold,
        "passed": passed,
        "config": {k: v for k, v in cfg.items() if k != "out"},
    })
    print(f"{'pass' if passed else 'fail'}: max normalized residual {rep.max_normalized:.3e}")
    return EXIT_OK if passed else EXIT_VERIFY_FAILED


def cmd_orbit(cfg) -> int:
    o = cfg.get("orbit")
    if not o:
        raise config.ConfigError("config has no orbit section")
    params = dynamics.ManevParams(float(o.get("F0", 1.0)), float(o.get("p", 1.0)), float(o["b"]),
                                  o.get("beta_mode", "binet"))
    e, th0 = float(o["e"]), float(o.get("theta0", 0.0))
    t = cfg["tolerances"]
    opts = dynamics.IntegratorOptions(rtol=float(t["rtol"]), atol=float(t["atol"]))
    t0 = time.perf_counter()
    traj = dynamics.orbit_member(params, e, th0, float(o.get("revolutions", 3.0)), opts)
    predicted = dynamics.predicted_advance(params.b)
    rep = dynamics.measure_precession(traj, predicted)
    out = _outdir(cfg)
    traj.to_csv(os.path.join(out, "trajectory.csv"))
    E = traj.E
    samples = np.linspace(0.0, 2.0 * math.pi, 100)
    _write_json(os.path.join(out, "precession.json"), {
        "tool": "orbinv",
        "version": __version__,
        **rep.as_dict(),
        "tracking_error": dynamics.tracking_error(traj, params, e, th0),
        "binet_residual": dynamics.binet_residual(params, e, th0, params.h, samples),
        "alpha": params.alpha,
        "beta": params.beta,
        "energy_drift": float(np.max(np.abs(E - E[0])) / abs(E[0])),
        "angular_momentum_drift": float(np.max(np.abs(traj.h - traj.h[0]))),
        "integrator": traj.stats,
        "runtime_s": time.perf_counter() - t0,
        "config": {k: v for k, v in cfg.items() if k != "out"},
    })
    print(f"delta varpi {rep.mean_advance:.12e} (predicted {predicted:.12e})")
    return EXIT_OK


COMMANDS = {
    "analyze": cmd_analyze,
    "derive-force": cmd_derive_force,
    "verify": cmd_verify,
    "orbit": cmd_orbit,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="orbinv", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"orbinv {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run config (or a previous report.json)")
        p.add_argument("--preset", choices=sorted(config.PRESETS))
        p.add_argument("--out", help="output directory (default: current directory)")
        p.add_argument("--order", type=int, help="jet order for the field pipeline")
        p.add_argument("--tol-zero", type=float)
        p.add_argument("--tol-nonzero", type=float)
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config.load(args.config, args.preset)
        if args.out is not None:
            cfg["out"] = args.out
        if args.order is not None:
            cfg["order"] = args.order
        if args.tol_zero is not None:
            cfg["tolerances"]["tol_zero"] = args.tol_zero
        if args.tol_nonzero is not None:
            cfg["tolerances"]["tol_nonzero"] = args.tol_nonzero
        return COMMANDS[args.command](cfg)
    except bozis.NotSolvable as err:
        print(f"error: {err}", file=sys.stderr)
        out = cfg.get("out") or "."
        os.makedirs(out, exist_ok=True)
        _write_json(os.path.join(out, "force.json"), {"error": "NotSolvable", "verdict": err.verdict.as_dict()})
        return EXIT_ERROR
    except (config.ConfigError, ValueError, ArithmeticError, OSError, KeyError, RuntimeError) as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
