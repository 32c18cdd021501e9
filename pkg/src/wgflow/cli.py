"""Command-line entry point: ``wgflow {simulate,sweep,probe,bounds,validate}``.

Exit status: 0 on success, 1 when a validation check fails, 2 on
configuration, domain or solver errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, bounds, diagnostics, rng
from .config import RunConfig, ensemble_digest, load_config
from .convergence import (
    ORACLE_KINDS,
    SweepPlan,
    format_rational,
    oracle_curvature,
    parse_rational,
    run_sweep,
    worker_count,
)
from .energy import convexity_probe, default_probe_step, estimate_lambda, estimate_lipschitz
from .ensemble import format_float, write_ensemble_csv
from .errors import InnerSolverError, WGFlowError
from .record import TrajectoryRecord
from .steppers import run_trajectory

log = logging.getLogger("wgflow")

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


def _manifest(cfg: RunConfig, x0, extra: dict) -> dict:
    inner = cfg.scheme.inner
    doc = {
        "tool": "wgflow",
        "version": __version__,
        "config": cfg.to_dict(),
        "spec_digest": cfg.energy.digest(),
        "initial_ensemble_digest": ensemble_digest(x0),
        "inner_solver": {
            "kind": inner.kind,
            "tol": inner.tol,
            "max_iters": inner.max_iters,
            "descent_rate": inner.descent_rate,
        },
    }
    doc.update(extra)
    return doc


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _out_dir(args, cfg: RunConfig) -> Path:
    out = args.out or cfg.out_dir
    if out is None:
        raise WGFlowError("no output directory: pass --out or set output.out_dir")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args, cfg)
    x0 = cfg.initial_ensemble()
    start = time.perf_counter()
    status = EXIT_OK
    try:
        record, snapshots = run_trajectory(x0, cfg.energy, cfg.scheme, cfg.save_every, L=cfg.L)
    except InnerSolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        record, snapshots, status = exc.record, exc.snapshots, EXIT_ERROR
    elapsed = time.perf_counter() - start
    if record is None:
        return EXIT_ERROR

    record.to_csv(out / "trajectory.csv")
    for step, ens in sorted(snapshots.items()):
        write_ensemble_csv(ens, out / f"snapshot_{step:08d}.csv")
    manifest = _manifest(
        cfg,
        x0,
        {
            "steps": len(record),
            "final_time": record.times[-1] if len(record) else 0.0,
            "complete": record.complete,
            "wall_time_seconds": elapsed,
        },
    )
    manifest["inner_solver"]["resolved_descent_rate"] = record.descent_rate
    _write_json(out / "manifest.json", manifest)
    if not args.no_plots and len(record):
        from . import plotting

        last = max(snapshots)
        plotting.plot_particles(snapshots[0], snapshots[last], out / "particles.png", record.times[-1])
        plotting.plot_energy(record, out / "energy.png")
    log.info("simulate: %d steps in %.2fs -> %s", len(record), elapsed, out)
    return status


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args, cfg)
    x0 = cfg.initial_ensemble()
    taus = [parse_rational(t) for t in args.taus.split(",") if t.strip()]
    oracle = None
    if args.analytic:
        kind, _, rest = args.analytic.partition(":")
        if kind not in ORACLE_KINDS:
            raise WGFlowError(f"--analytic must be one of {ORACLE_KINDS}")
        params = {"a": float(rest)} if rest else {}
        oracle = (kind, params)
    lam = args.lam if args.lam is not None else cfg.lam
    L = args.L if args.L is not None else cfg.L
    t_final = parse_rational(args.t_final)
    curvature = args.curvature
    if curvature is None and oracle is not None:
        curvature = oracle_curvature(oracle[0], oracle[1], x0, float(t_final))
    plan = SweepPlan(
        spec=cfg.energy,
        x0=x0,
        taus=taus,
        t_final=t_final,
        scheme=cfg.scheme.kind,
        inner=cfg.scheme.inner,
        tau_ref=None if args.tau_ref is None else parse_rational(args.tau_ref),
        oracle=oracle,
        lam=lam,
        L=L,
        curvature=curvature,
    )
    start = time.perf_counter()
    report = run_sweep(plan)
    elapsed = time.perf_counter() - start
    report.to_csv(out / "convergence.csv")
    manifest = _manifest(
        cfg,
        x0,
        {
            "sweep": {
                "taus": [format_rational(t) for t in plan.taus],
                "tau_ref": None if plan.tau_ref is None else format_rational(plan.tau_ref),
                "t_final": format_rational(plan.t_final),
                "reference": report.reference,
                "fitted_order": report.order,
                "fit_residual": report.residual,
                "curvature": curvature,
            },
            "workers": worker_count(),
            "wall_time_seconds": elapsed,
            "member_wall_time_seconds": {format_rational(r.tau): r.wall_time for r in report.rows},
            "reference_wall_time_seconds": report.reference_wall_time,
        },
    )
    _write_json(out / "manifest.json", manifest)
    if not args.no_plots:
        from . import plotting

        plotting.plot_convergence(report, out / "convergence.png")
    sys.stdout.write(report.to_csv_text())
    return EXIT_OK


def cmd_probe(args) -> int:
    cfg = load_config(args.config)
    x0 = cfg.initial_ensemble()
    h = args.h if args.h is not None else default_probe_step(x0)
    lines = ["direction,first,second,direction_norm_sq"]
    for k in range(args.directions):
        v = rng.normals(args.seed, rng.DIRECTION, k, x0.count * x0.dimension).reshape(x0.positions.shape)
        first, second = convexity_probe(x0, v, cfg.energy, h)
        lines.append(f"{k},{format_float(first)},{format_float(second)},{format_float(np.mean(np.sum(v * v, axis=1)))}")
    radius = 0.1 * (1.0 + x0.rms_radius())
    lam = estimate_lambda(cfg.energy, x0, samples=max(args.directions, 1), radius=radius, seed=args.seed)
    lip = estimate_lipschitz(cfg.energy, x0, samples=max(args.directions, 1), radius=radius, seed=args.seed)
    lines.append(f"# h={format_float(h)} lambda_estimate={format_float(lam)} lipschitz_estimate={format_float(lip)}")
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK


def bound_lines(lam, L, tau, T, init_error=0.0, init_grad=0.0, curvature=0.0, alpha=1.0) -> list[tuple[str, float]]:
    """Every constant computable from the given inputs; ones whose hypotheses fail are skipped."""
    out = [("lambda_tau", bounds.lambda_tau(lam, tau)), ("gradient_decay_factor", bounds.gradient_decay_factor(lam, tau))]

    def attempt(name, fn):
        try:
            out.append((name, fn()))
        except WGFlowError as exc:
            log.debug("skipping %s: %s", name, exc)

    t = 0.0 if T is None else T
    inputs = dict(lam=lam, tau=tau, t=t, init_error=init_error, init_grad_norm=init_grad, curvature_L2=curvature, alpha=alpha)
    if T is not None:
        attempt("stability_factor", lambda: bounds.stability_factor(lam, tau, T))
        attempt("k_constant", lambda: bounds.k_constant(min(bounds.lambda_tau(lam, tau), 0.0), T, tau))
    attempt("evi_error_bound", lambda: bounds.evi_error_bound(bounds.BoundInputs(L=L or 0.0, **inputs)))
    if L is not None:
        attempt("lambda_tau_L", lambda: bounds.lambda_tau_L(lam, tau, L))
        attempt("refined_error_bound", lambda: bounds.refined_error_bound(bounds.BoundInputs(L=L, **inputs)))
        attempt("smooth_error_bound", lambda: bounds.smooth_error_bound(bounds.BoundInputs(L=L, **inputs)))
    return out


def cmd_bounds(args) -> int:
    rows = bound_lines(args.lam, args.L, args.tau, args.T, args.init_error, args.init_grad, args.curvature, args.alpha)
    sys.stdout.write("".join(f"{name},{format_float(value)}\n" for name, value in rows))
    return EXIT_OK


def cmd_validate(args) -> int:
    record = TrajectoryRecord.from_csv(args.record)
    lam = args.lam if args.lam is not None else record.lam
    L = args.L if args.L is not None else record.L
    reports = diagnostics.run_all(record, lam, L, args.T)
    if not reports:
        raise WGFlowError("no applicable checks: pass --lambda (and --L/--T) for non-trapezoid records")
    text = ["check,step,lhs,rhs,slack"]
    for rep in reports:
        text.append(rep.to_csv_text(header=False).rstrip("\n").replace("# verdict:", f"# {rep.name} verdict:"))
    ok = all(rep.passed for rep in reports)
    text.append(f"# verdict: {'pass' if ok else 'fail'}")
    body = "\n".join(text) + "\n"
    if args.out:
        Path(args.out).write_text(body)
    else:
        sys.stdout.write(body)
    for rep in reports:
        log.info("%s: %s (min slack %s)", rep.name, rep.verdict, format_float(rep.min_slack))
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wgflow", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"wgflow {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one trajectory")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="time-step convergence sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--taus", required=True, help="comma-separated rationals, e.g. 1/64,1/128")
    p.add_argument("--tau-ref", help="reference step (rational)")
    p.add_argument("--t-final", required=True, help="common final time (rational)")
    p.add_argument("--out")
    p.add_argument("--analytic", help="exact reference instead of a fine run: KIND[:a]")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--L", type=float)
    p.add_argument("--curvature", type=float)
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("probe", help="directional derivatives and convexity estimates")
    p.add_argument("--config", required=True)
    p.add_argument("--directions", type=int, default=8)
    p.add_argument("--h", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("bounds", help="evaluate theoretical constants and error bounds")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--L", type=float)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--T", type=float)
    p.add_argument("--init-error", type=float, default=0.0)
    p.add_argument("--init-grad", type=float, default=0.0)
    p.add_argument("--curvature", type=float, default=0.0)
    p.add_argument("--alpha", type=float, default=1.0)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("validate", help="check stability inequalities on a trajectory record")
    p.add_argument("--record", required=True)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--L", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except WGFlowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
