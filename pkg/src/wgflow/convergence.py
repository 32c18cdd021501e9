"""Time-step refinement sweeps and observed convergence order.

A sweep runs one trajectory per step size to a common final time ``T`` and
measures the terminal L2(rho0) distance to a reference: either a fine-step
run of the same scheme (``tau_ref``) or an exact flow map. Step sizes are
exact rationals so that ``N tau = M tau_ref = T`` is checked without
round-off.
"""

from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import bounds
from .energy import EnergySpec
from .ensemble import ParticleEnsemble, format_float, l2_norm, l2_reference_distance
from .errors import FitError, PlanError, WGFlowError
from .steppers import InnerSolverConfig, SchemeConfig, run_trajectory

log = logging.getLogger(__name__)

ORACLE_KINDS = ("quadratic_confinement", "quadratic_interaction")


def parse_rational(text) -> Fraction:
    """Parse ``"p/q"``, an integer or a decimal string into an exact Fraction."""
    if isinstance(text, Fraction):
        return text
    if isinstance(text, int):
        return Fraction(text)
    if isinstance(text, float):
        raise PlanError(f"rational values must be given as strings like '1/64', got float {text!r}")
    try:
        value = Fraction(str(text).strip())
    except (ValueError, ZeroDivisionError):
        raise PlanError(f"cannot parse {text!r} as a rational") from None
    return value


def format_rational(value: Fraction) -> str:
    value = Fraction(value)
    return str(value.numerator) if value.denominator == 1 else f"{value.numerator}/{value.denominator}"


def worker_count(threads: int | None = None) -> int:
    """Worker cap from the argument or ``WGFLOW_THREADS`` (0 or unset means all cores)."""
    if threads is None:
        raw = os.environ.get("WGFLOW_THREADS", "").strip()
        threads = int(raw) if raw else 0
    if threads <= 0:
        threads = os.cpu_count() or 1
    return threads


# --- exact flows for validation ---------------------------------------------


def analytic_oracle(kind: str, params: dict | None, x0: ParticleEnsemble, t: float) -> ParticleEnsemble:
    """Exact flow map at time ``t`` for the two linear test problems.

    ``quadratic_confinement{a}``: V = a|x|^2/2, X(t) = e^{-a t} X0.
    ``quadratic_interaction{a}``: W = a|x|^2/2, centroid fixed, deviations scale by e^{-a t}.
    """
    params = dict(params or {})
    a = float(params.get("a", 1.0))
    if kind == "quadratic_confinement":
        return ParticleEnsemble(math.exp(-a * float(t)) * x0.positions)
    if kind == "quadratic_interaction":
        c = x0.centroid()
        return ParticleEnsemble(c + math.exp(-a * float(t)) * (x0.positions - c))
    raise PlanError(f"unsupported oracle kind {kind!r}; expected one of {ORACLE_KINDS}")


def oracle_spec(kind: str, params: dict | None = None) -> EnergySpec:
    from .energy import RadialPotential

    a = float(dict(params or {}).get("a", 1.0))
    if kind == "quadratic_confinement":
        return EnergySpec(V=RadialPotential("quadratic", {"a": a}))
    if kind == "quadratic_interaction":
        return EnergySpec(W=RadialPotential("quadratic", {"a": a}))
    raise PlanError(f"unsupported oracle kind {kind!r}")


def oracle_curvature(kind: str, params: dict | None, x0: ParticleEnsemble, T: float, alpha: float = 1.0) -> float:
    """sup_{s != t in [0,T]} |X'(t) - X'(s) - (t - s) X''(s)| / |t - s|^alpha for the exact flow.

    With X(t) = e^{-a t} Y the numerator is a|Y| e^{-a s} |e^{-a h} - 1 + a h|
    (h = t - s). For h > 0 the worst case is s = 0, h = T; for h = -u < 0 it
    is s = u, leaving a one-dimensional maximisation over u in (0, T].
    """
    a = float(dict(params or {}).get("a", 1.0))
    if kind == "quadratic_confinement":
        amplitude = l2_norm(x0.positions)
    elif kind == "quadratic_interaction":
        amplitude = l2_norm(x0.positions - x0.centroid())
    else:
        raise PlanError(f"unsupported oracle kind {kind!r}")
    if T <= 0 or a == 0 or amplitude == 0:
        return 0.0
    forward = math.expm1(-a * T) + a * T
    forward /= T**alpha
    u = np.linspace(T / 20000, T, 20000)
    backward = (-np.expm1(-a * u) - a * u * np.exp(-a * u)) / u**alpha
    return abs(a) * amplitude * max(forward, float(backward.max()))


# --- errors and fits ---------------------------------------------------------


def terminal_error(run: ParticleEnsemble, ref: ParticleEnsemble, run_time=None, ref_time=None) -> float:
    if run_time is not None and ref_time is not None and Fraction(run_time) != Fraction(ref_time):
        raise PlanError(f"terminal times differ: {run_time} vs {ref_time}")
    return l2_reference_distance(run, ref)


def fit_order(points) -> tuple[float, float]:
    """Least-squares slope of log(error) against log(tau).

    Returns ``(p, residual)`` with ``residual`` the RMS log-residual. Points
    with zero or non-finite error are skipped.
    """
    usable = [(float(t), float(e)) for t, e in points if e > 0 and math.isfinite(e) and t > 0]
    if len(usable) < 2 or len({t for t, _ in usable}) < 2:
        raise FitError(f"need at least 2 distinct points with positive error, got {len(usable)}")
    lt = np.log([t for t, _ in usable])
    le = np.log([e for _, e in usable])
    A = np.vstack([lt, np.ones_like(lt)]).T
    coef, *_ = np.linalg.lstsq(A, le, rcond=None)
    resid = le - A @ coef
    return float(coef[0]), float(np.sqrt(np.mean(resid**2)))


# --- sweeps -----------------------------------------------------------------


@dataclass
class SweepPlan:
    spec: EnergySpec
    x0: ParticleEnsemble
    taus: list[Fraction]
    t_final: Fraction
    scheme: str = "trapezoid"
    inner: InnerSolverConfig = field(default_factory=InnerSolverConfig)
    tau_ref: Fraction | None = None
    oracle: tuple[str, dict] | None = None
    lam: float | None = None
    L: float | None = None
    curvature: float | None = None
    alpha: float = 1.0

    def __post_init__(self) -> None:
        self.taus = [parse_rational(t) for t in self.taus]
        self.t_final = parse_rational(self.t_final)
        if self.tau_ref is not None:
            self.tau_ref = parse_rational(self.tau_ref)

    def validate(self) -> None:
        if not self.taus:
            raise PlanError("sweep needs at least one tau")
        if self.t_final <= 0:
            raise PlanError(f"T must be positive, got {self.t_final}")
        for tau in self.taus:
            if tau <= 0 or (self.t_final / tau).denominator != 1:
                raise PlanError(f"tau={format_rational(tau)} does not divide T={format_rational(self.t_final)}")
        if self.oracle is None and self.tau_ref is None:
            raise PlanError("sweep needs either tau_ref or an analytic oracle")
        if self.tau_ref is not None:
            if self.tau_ref <= 0 or (self.t_final / self.tau_ref).denominator != 1:
                raise PlanError(
                    f"tau_ref={format_rational(self.tau_ref)} does not divide T={format_rational(self.t_final)}"
                )
            if self.tau_ref >= min(self.taus):
                raise PlanError("tau_ref must be smaller than every tau")

    def config(self, tau: Fraction) -> SchemeConfig:
        return SchemeConfig(self.scheme, tau, self.t_final, self.inner, lam=self.lam)

    def bound_overlay(self, tau: Fraction) -> float | None:
        if self.L is None or self.curvature is None:
            return None
        try:
            return bounds.smooth_error_bound(
                bounds.BoundInputs(L=self.L, tau=float(tau), t=float(self.t_final), curvature_L2=self.curvature, alpha=self.alpha)
            )
        except WGFlowError:
            return None


@dataclass
class SweepRow:
    tau: Fraction
    steps: int
    terminal_error: float
    wall_time: float
    failed: bool = False
    bound_overlay: float | None = None
    fitted_p_cumulative: float | None = None


@dataclass
class ConvergenceReport:
    rows: list[SweepRow]
    order: float
    residual: float
    reference: str
    reference_wall_time: float = 0.0

    def points(self) -> list[tuple[float, float]]:
        return [(float(r.tau), r.terminal_error) for r in self.rows if not r.failed]

    def to_csv_text(self) -> str:
        lines = ["tau,steps,terminal_error,fitted_p_cumulative,bound_overlay"]
        for r in self.rows:
            err = "nan" if r.failed else format_float(r.terminal_error)
            p = "" if r.fitted_p_cumulative is None else format_float(r.fitted_p_cumulative)
            b = "" if r.bound_overlay is None else format_float(r.bound_overlay)
            lines.append(f"{format_rational(r.tau)},{r.steps},{err},{p},{b}")
        lines.append(f"# fitted_order={format_float(self.order)} residual={format_float(self.residual)}")
        return "\n".join(lines) + "\n"

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv_text())


def _run_member(plan: SweepPlan, tau: Fraction):
    cfg = plan.config(tau)
    steps = int(plan.t_final / tau)
    start = time.perf_counter()
    try:
        _, snaps = run_trajectory(plan.x0, plan.spec, cfg, save_every=steps, num_steps=steps)
    except WGFlowError as exc:
        log.warning("sweep member tau=%s failed: %s", format_rational(tau), exc)
        return tau, steps, None, time.perf_counter() - start
    return tau, steps, snaps[steps], time.perf_counter() - start


def run_sweep(plan: SweepPlan, threads: int | None = None) -> ConvergenceReport:
    """Run every member of ``plan`` and fit the observed order.

    Members run concurrently (each trajectory is sequential and self-contained);
    rows are assembled in descending-tau order so the report does not depend
    on scheduling.
    """
    plan.validate()
    taus = sorted(set(plan.taus), reverse=True)
    jobs = list(taus)
    if plan.oracle is None:
        jobs.append(plan.tau_ref)
    workers = min(worker_count(threads), len(jobs))
    if workers == 1:
        results = [_run_member(plan, tau) for tau in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda tau: _run_member(plan, tau), jobs))
    by_tau = {r[0]: r for r in results}

    if plan.oracle is None:
        _, _, ref, ref_wall = by_tau[plan.tau_ref]
        if ref is None:
            raise PlanError(f"reference run tau_ref={format_rational(plan.tau_ref)} failed")
        reference = f"run:tau_ref={format_rational(plan.tau_ref)}"
    else:
        kind, params = plan.oracle
        ref = analytic_oracle(kind, params, plan.x0, float(plan.t_final))
        ref_wall = 0.0
        reference = f"analytic:{kind}"

    rows = []
    for tau in taus:
        _, steps, final, wall = by_tau[tau]
        if final is None:
            rows.append(SweepRow(tau, steps, math.nan, wall, failed=True, bound_overlay=plan.bound_overlay(tau)))
            continue
        err = terminal_error(final, ref)
        rows.append(SweepRow(tau, steps, err, wall, bound_overlay=plan.bound_overlay(tau)))

    usable = []
    for row in rows:
        if not row.failed:
            usable.append((float(row.tau), row.terminal_error))
        try:
            row.fitted_p_cumulative = fit_order(usable)[0]
        except FitError:
            row.fitted_p_cumulative = None
    order, residual = fit_order(usable)
    return ConvergenceReport(rows, order, residual, reference, ref_wall)
