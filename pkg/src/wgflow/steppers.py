"""One-step maps (explicit Euler, implicit Euler, trapezoid) and trajectory driver.

Implicit steps solve their defect equation

    implicit Euler:  xi - x + tau * g(xi) = 0
    trapezoid:       xi - x + (tau/2) * (g(xi) + g(x)) = 0

with an inner loop warm-started by one explicit Euler step. The loop stops
once the next update would move the iterate by at most ``tol`` in L2(rho0)
and the defect itself is at most ``tol``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .energy import EnergySpec, energy_value, estimate_lipschitz, gradient_array
from .ensemble import ParticleEnsemble, l2_norm
from .errors import InnerSolverError, ParameterError
from .record import TrajectoryRecord

log = logging.getLogger(__name__)

SCHEMES = ("explicit_euler", "implicit_euler", "trapezoid")
INNER_KINDS = ("fixed_point", "prox_descent")


@dataclass(frozen=True)
class InnerSolverConfig:
    kind: str = "fixed_point"
    tol: float = 1e-10
    max_iters: int = 10000
    descent_rate: float | str = "auto"

    def __post_init__(self) -> None:
        if self.kind not in INNER_KINDS:
            raise ParameterError(f"inner solver kind must be one of {INNER_KINDS}, got {self.kind!r}")
        if not self.tol > 0:
            raise ParameterError(f"inner tol must be positive, got {self.tol}")
        if int(self.max_iters) < 1:
            raise ParameterError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.descent_rate != "auto" and not float(self.descent_rate) > 0:
            raise ParameterError(f"descent_rate must be positive or 'auto', got {self.descent_rate!r}")


@dataclass(frozen=True)
class SchemeConfig:
    kind: str = "trapezoid"
    tau: Fraction | float = Fraction(1, 10)
    t_final: Fraction | float = Fraction(1)
    inner: InnerSolverConfig = field(default_factory=InnerSolverConfig)
    lam: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in SCHEMES:
            raise ParameterError(f"scheme must be one of {SCHEMES}, got {self.kind!r}")
        if not self.tau > 0:
            raise ParameterError(f"tau must be positive, got {self.tau}")
        if not self.t_final > 0:
            raise ParameterError(f"t_final must be positive, got {self.t_final}")
        if self.kind == "trapezoid" and self.lam is not None and self.lam < 0:
            if not self.lam / 2 + 1 / float(self.tau) > 0:
                raise ParameterError(f"trapezoid needs lambda/2 + 1/tau > 0 (lambda={self.lam}, tau={self.tau})")

    @property
    def dt(self) -> float:
        return float(self.tau)

    def num_steps(self) -> int:
        """ceil(t_final / tau); exact for rationals, round-off tolerant for floats."""
        if isinstance(self.tau, Fraction) and isinstance(self.t_final, (Fraction, int)):
            return math.ceil(Fraction(self.t_final) / self.tau)
        ratio = float(self.t_final) / float(self.tau)
        nearest = round(ratio)
        if abs(ratio - nearest) <= 1e-9 * max(1.0, ratio):
            return max(int(nearest), 1)
        return math.ceil(ratio)


@dataclass
class StepResult:
    next: ParticleEnsemble
    inner_iterations: int
    residual: float
    gradient_at_next: np.ndarray


def explicit_euler_step(x: ParticleEnsemble, spec: EnergySpec, tau: float) -> ParticleEnsemble:
    if not tau > 0:
        raise ParameterError(f"tau must be positive, got {tau}")
    return ParticleEnsemble(x.positions - float(tau) * gradient_array(x.positions, spec))


def resolve_descent_rate(x: ParticleEnsemble, spec: EnergySpec, cfg: SchemeConfig) -> float:
    """Step size of the prox-descent inner solver; ``auto`` uses 1/(1/tau + theta * L_hat)."""
    rate = cfg.inner.descent_rate
    if rate != "auto":
        return float(rate)
    theta = 0.5 if cfg.kind == "trapezoid" else 1.0
    lip = estimate_lipschitz(spec, x, samples=8, radius=1e-3 * (1.0 + x.rms_radius()), seed=0)
    return 1.0 / (1.0 / cfg.dt + theta * lip)


def _inner_solve(x, spec, cfg, theta, gx, descent_rate=None) -> StepResult:
    tau = cfg.dt
    inner = cfg.inner
    x0 = x.positions
    explicit_part = x0 - tau * (1.0 - theta) * gx
    if inner.kind == "fixed_point":
        relax = 1.0
    else:
        if descent_rate is None:
            descent_rate = resolve_descent_rate(x, spec, cfg)
        # the descent direction of the step functional is defect / tau
        relax = descent_rate / tau

    xi = x0 - tau * gx
    best = math.inf
    # a diverging iteration overflows before it is caught by the finiteness test
    with np.errstate(over="ignore", invalid="ignore"):
        for it in range(inner.max_iters + 1):
            g = gradient_array(xi, spec)
            defect = xi - explicit_part + tau * theta * g
            r = l2_norm(defect)
            if not math.isfinite(r):
                raise InnerSolverError(f"inner solver diverged after {it} iterations", best, it)
            best = min(best, r)
            if r <= inner.tol and relax * r <= inner.tol:
                return StepResult(ParticleEnsemble(xi), it, r, g)
            if it == inner.max_iters:
                break
            xi = xi - relax * defect
    raise InnerSolverError(
        f"inner solver ({inner.kind}) did not reach tol={inner.tol} in {inner.max_iters} iterations; "
        f"best residual {best:.3e}",
        best,
        inner.max_iters,
    )


def implicit_euler_step(x: ParticleEnsemble, spec: EnergySpec, cfg: SchemeConfig, *, gradient_at_x=None, descent_rate=None) -> StepResult:
    gx = gradient_array(x.positions, spec) if gradient_at_x is None else gradient_at_x
    return _inner_solve(x, spec, cfg, 1.0, gx, descent_rate)


def trapezoid_step(x: ParticleEnsemble, spec: EnergySpec, cfg: SchemeConfig, *, gradient_at_x=None, descent_rate=None) -> StepResult:
    gx = gradient_array(x.positions, spec) if gradient_at_x is None else gradient_at_x
    return _inner_solve(x, spec, cfg, 0.5, gx, descent_rate)


def run_trajectory(
    x0: ParticleEnsemble,
    spec: EnergySpec,
    cfg: SchemeConfig,
    save_every: int = 1,
    *,
    L: float | None = None,
    num_steps: int | None = None,
) -> tuple[TrajectoryRecord, dict[int, ParticleEnsemble]]:
    """Iterate the configured scheme from ``x0`` for ceil(t_final/tau) steps.

    Returns the per-step record and the snapshots kept at multiples of
    ``save_every`` (step 0 included) plus the final step. On inner-solver
    failure the raised :class:`InnerSolverError` carries the partial record
    (flagged incomplete) and snapshots.
    """
    if save_every < 1:
        raise ParameterError(f"save_every must be >= 1, got {save_every}")
    n_steps = cfg.num_steps() if num_steps is None else num_steps
    tau = cfg.dt
    descent_rate = None
    if cfg.kind != "explicit_euler" and cfg.inner.kind == "prox_descent":
        descent_rate = resolve_descent_rate(x0, spec, cfg)

    x = x0
    g = gradient_array(x.positions, spec)
    record = TrajectoryRecord(
        tau=tau,
        scheme=cfg.kind,
        energy0=energy_value(x, spec),
        grad_norm0=l2_norm(g),
        spec_digest=spec.digest(),
        lam=cfg.lam,
        L=L,
        tol=cfg.inner.tol,
        descent_rate=descent_rate,
    )
    snapshots = {0: x0}
    for n in range(1, n_steps + 1):
        try:
            if cfg.kind == "explicit_euler":
                nxt = ParticleEnsemble(x.positions - tau * g)
                g_next = gradient_array(nxt.positions, spec)
                res = StepResult(nxt, 0, 0.0, g_next)
            elif cfg.kind == "implicit_euler":
                res = implicit_euler_step(x, spec, cfg, gradient_at_x=g, descent_rate=descent_rate)
            else:
                res = trapezoid_step(x, spec, cfg, gradient_at_x=g, descent_rate=descent_rate)
        except InnerSolverError as exc:
            record.complete = False
            snapshots[n - 1] = x
            exc.record = record
            exc.snapshots = snapshots
            log.error("step %d failed: %s", n, exc)
            raise
        displacement = l2_norm(res.next.positions - x.positions)
        x, g = res.next, res.gradient_at_next
        record.append(n, n * tau, energy_value(x, spec), l2_norm(g), displacement, res.residual, res.inner_iterations)
        if n % save_every == 0 or n == n_steps:
            snapshots[n] = x
    return record, snapshots


def with_tau(cfg: SchemeConfig, tau, t_final=None) -> SchemeConfig:
    return replace(cfg, tau=tau, t_final=cfg.t_final if t_final is None else t_final)
