"""Post-hoc stability checks on a logged trajectory.

Each check turns one of the discrete stability inequalities of the trapezoid
scheme into per-step slacks ``rhs - lhs`` and passes iff every slack is at
least ``-allowance`` for that row. Step labels are transition indices: step
``j`` compares ``X_j`` with ``X_{j+1}``.

Notation: phi_n energies, gamma_n gradient norms, delta_j = |X_{j+1} - X_j|,
all in L2(rho0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bounds
from .ensemble import format_float
from .errors import ApplicabilityError
from .record import TrajectoryRecord

REL_TOL = 1e-8
ABS_TOL = 1e-10


@dataclass
class CheckRow:
    check: str
    step: int
    lhs: float
    rhs: float
    allowance: float

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @property
    def ok(self) -> bool:
        return self.slack >= -self.allowance


@dataclass
class CheckReport:
    name: str
    tolerance: float
    rows: list[CheckRow] = field(default_factory=list)
    note: str = ""

    @property
    def slacks(self) -> np.ndarray:
        return np.array([r.slack for r in self.rows])

    @property
    def min_slack(self) -> float:
        return float(self.slacks.min()) if self.rows else math.inf

    @property
    def passed(self) -> bool:
        return all(r.ok for r in self.rows)

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def failures(self) -> list[CheckRow]:
        return [r for r in self.rows if not r.ok]

    def sub(self, check: str) -> list[CheckRow]:
        return [r for r in self.rows if r.check == check]

    def to_csv_text(self, header: bool = True) -> str:
        lines = ["check,step,lhs,rhs,slack"] if header else []
        for r in self.rows:
            lines.append(f"{r.check},{r.step},{format_float(r.lhs)},{format_float(r.rhs)},{format_float(r.slack)}")
        if self.note:
            lines.append(f"# note: {self.note}")
        lines.append(f"# verdict: {self.verdict}")
        return "\n".join(lines) + "\n"

    def to_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv_text())


def _require_trapezoid(rec: TrajectoryRecord, name: str) -> None:
    if rec.scheme != "trapezoid":
        raise ApplicabilityError(f"{name} applies to trapezoid trajectories, record scheme is {rec.scheme!r}")


def _require_digest(rec: TrajectoryRecord, expected_digest: str | None) -> None:
    if expected_digest is not None and rec.spec_digest and rec.spec_digest != expected_digest:
        raise ApplicabilityError(f"record spec digest {rec.spec_digest} does not match {expected_digest}")


def _require_refined(lam: float, L: float, tau: float, name: str) -> None:
    if lam < 0:
        raise ApplicabilityError(f"{name} needs lambda >= 0, got {lam}")
    if L < 0 or L * tau > 1:
        raise ApplicabilityError(f"{name} needs tau <= 1/L (tau={tau}, L={L})")


def check_energy_almost_decreasing(
    rec: TrajectoryRecord, tol: float = REL_TOL, expected_digest: str | None = None
) -> CheckReport:
    """phi_{n+1} - phi_n <= (tau/4)(gamma_n^2 - gamma_{n+1}^2)."""
    _require_trapezoid(rec, "check_energy_almost_decreasing")
    _require_digest(rec, expected_digest)
    phi = rec.energies
    drop = rec.gradient_drop
    report = CheckReport("energy_almost_decreasing", tol)
    for j in range(len(rec)):
        lhs = phi[j + 1] - phi[j]
        rhs = rec.tau / 4.0 * drop[j]
        report.rows.append(CheckRow(report.name, j, lhs, rhs, tol * (1.0 + abs(phi[j]))))
    return report


def check_gradient_decay(
    rec: TrajectoryRecord, lam: float, tol: float = ABS_TOL, expected_digest: str | None = None
) -> CheckReport:
    """gamma_{n+1}^2 <= C(lam, tau) gamma_n^2, tolerance relative to gamma_n^2."""
    _require_digest(rec, expected_digest)
    c = bounds.gradient_decay_factor(lam, rec.tau)
    g2 = rec.grad_norms**2
    report = CheckReport("gradient_decay", tol)
    for j in range(len(rec)):
        report.rows.append(CheckRow(report.name, j, g2[j + 1], c * g2[j], tol * g2[j]))
    return report


def check_refined_decay(
    rec: TrajectoryRecord, lam: float, L: float, tol: float = ABS_TOL, expected_digest: str | None = None
) -> CheckReport:
    """Monotone energy with margin, exponential gradient decay, displacement floor.

    energy:        phi_{n+1} + (lam/2) delta_n^2 + tau(1 - L tau/2) gamma_{n+1}^2 <= phi_n
    gradient:      gamma_{n+1}^2 <= exp(-2 lambda_{tau,L} tau) gamma_n^2
    displacement:  tau^2 (1 - L tau/2) gamma_{n+1}^2 <= delta_n^2
    """
    _require_trapezoid(rec, "check_refined_decay")
    _require_digest(rec, expected_digest)
    tau = rec.tau
    _require_refined(lam, L, tau, "check_refined_decay")
    ltl = bounds.lambda_tau_L(lam, tau, L)
    decay = math.exp(-2.0 * ltl * tau)
    phi = rec.energies
    g2 = rec.grad_norms**2
    d2 = rec.displacements**2
    margin = tau * (1.0 - L * tau / 2.0)
    report = CheckReport("refined_decay", tol)
    for j in range(len(rec)):
        lhs = phi[j + 1] + lam / 2.0 * d2[j] + margin * g2[j + 1]
        report.rows.append(CheckRow("refined_decay.energy", j, lhs, phi[j], REL_TOL * (1.0 + abs(phi[j]))))
        report.rows.append(CheckRow("refined_decay.gradient", j, g2[j + 1], decay * g2[j], tol * g2[j]))
        floor = tau * margin * g2[j + 1]
        report.rows.append(CheckRow("refined_decay.displacement", j, floor, d2[j], tol * max(floor, d2[j])))
    return report


def _horizon_ok(rec: TrajectoryRecord, T: float) -> None:
    if len(rec) * rec.tau > T * (1.0 + 1e-12):
        raise ApplicabilityError(f"record spans {len(rec)} steps of tau={rec.tau}, beyond T={T}")


def check_classical_stability(
    rec: TrajectoryRecord, lam: float, T: float, tol: float = ABS_TOL, expected_digest: str | None = None
) -> CheckReport:
    """Sum bound sum_j delta_j^2/tau <= T C~ gamma_0^2 and the Lipschitz-in-time bound.

    The record only holds consecutive displacements, so ``|X_n - X_m|`` is
    replaced by its triangle-inequality majorant ``sum_{j=m}^{n-1} delta_j``.
    A pass is therefore conclusive; a Lipschitz failure is not.
    """
    _require_digest(rec, expected_digest)
    _horizon_ok(rec, T)
    c = bounds.stability_factor(lam, rec.tau, T)
    g0 = rec.grad_norm0
    d = rec.displacements
    report = CheckReport("classical_stability", tol)
    lhs = float(np.sum(d**2) / rec.tau)
    rhs = T * c * g0**2
    report.rows.append(CheckRow("classical_stability.sum", len(rec) - 1, lhs, rhs, tol * (1.0 + rhs)))
    # worst pair (m < n) of  tau (n - m) sqrt(c) g0 - sum_{m<=j<n} delta_j,
    # via h_k = k tau sqrt(c) g0 - S_k and slack(m, n) = h_n - h_m
    speed = rec.tau * math.sqrt(c) * g0
    partial = np.concatenate([[0.0], np.cumsum(d)])
    h = speed * np.arange(len(partial)) - partial
    m = 0
    for n in range(1, len(partial)):
        if h[n - 1] > h[m]:
            m = n - 1
        span = n - m
        report.rows.append(
            CheckRow("classical_stability.lipschitz", n - 1, partial[n] - partial[m], speed * span, tol * (1.0 + speed * span))
        )
    if not report.passed and any(not r.ok for r in report.sub("classical_stability.lipschitz")):
        report.note = "lipschitz check uses a triangle-inequality surrogate; failure is inconclusive"
    return report


def check_refined_stability(
    rec: TrajectoryRecord, lam: float, L: float, T: float, tol: float = ABS_TOL, expected_digest: str | None = None
) -> CheckReport:
    """delta_j <= tau e^{-j lambda_{tau,L} tau} gamma_0 and sum_j e^{2 j lambda_{tau,L} tau} delta_j^2/tau <= T gamma_0^2."""
    _require_digest(rec, expected_digest)
    tau = rec.tau
    _require_refined(lam, L, tau, "check_refined_stability")
    _horizon_ok(rec, T)
    ltl = bounds.lambda_tau_L(lam, tau, L)
    g0 = rec.grad_norm0
    d = rec.displacements
    report = CheckReport("refined_stability", tol)
    weights = np.exp(2.0 * ltl * tau * np.arange(len(d)))
    for j, dj in enumerate(d):
        rhs = tau * math.exp(-j * ltl * tau) * g0
        report.rows.append(CheckRow("refined_stability.step", j, dj, rhs, tol * (1.0 + rhs)))
    total = float(np.sum(weights * d**2) / tau)
    rhs = T * g0**2
    report.rows.append(CheckRow("refined_stability.sum", len(d) - 1, total, rhs, tol * (1.0 + rhs)))
    return report


def run_all(
    rec: TrajectoryRecord, lam: float | None = None, L: float | None = None, T: float | None = None
) -> list[CheckReport]:
    """Every check whose parameters were supplied and whose hypotheses hold."""
    reports = []
    if rec.scheme == "trapezoid":
        reports.append(check_energy_almost_decreasing(rec))
    if lam is not None:
        reports.append(check_gradient_decay(rec, lam))
        if T is not None:
            reports.append(check_classical_stability(rec, lam, T))
        if L is not None and rec.scheme == "trapezoid":
            reports.append(check_refined_decay(rec, lam, L))
            if T is not None:
                reports.append(check_refined_stability(rec, lam, L, T))
    return reports
