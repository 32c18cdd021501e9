import copy
import math

import numpy as np
import pytest

from wgflow.diagnostics import (
    check_classical_stability,
    check_energy_almost_decreasing,
    check_gradient_decay,
    check_refined_decay,
    check_refined_stability,
    run_all,
)
from wgflow.energy import EnergySpec
from wgflow.ensemble import ParticleEnsemble
from wgflow.errors import ApplicabilityError, DomainError
from wgflow.record import TrajectoryRecord
from wgflow.steppers import SchemeConfig, run_trajectory

from conftest import quad_confinement, quad_interaction, random_positions


def oracle_record(a=1.0, tau=0.1, t_final=1.0, x0=None, spec=None, scheme="trapezoid"):
    x0 = ParticleEnsemble([[1.0]]) if x0 is None else x0
    spec = quad_confinement(a) if spec is None else spec
    rec, _ = run_trajectory(x0, spec, SchemeConfig(kind=scheme, tau=tau, t_final=t_final))
    return rec


def stationary_record(n=5, tau=0.1):
    rec = TrajectoryRecord(tau=tau, scheme="trapezoid", energy0=0.7, grad_norm0=0.0)
    for k in range(1, n + 1):
        rec.append(k, k * tau, 0.7, 0.0, 0.0, 0.0, 0)
    return rec


def all_checks(rec, lam, L, T):
    return [
        check_energy_almost_decreasing(rec),
        check_gradient_decay(rec, lam),
        check_refined_decay(rec, lam, L),
        check_classical_stability(rec, lam, T),
        check_refined_stability(rec, lam, L, T),
    ]


class TestOraclePasses:
    def test_all_five_on_confinement(self):
        rec = oracle_record()
        for report in all_checks(rec, 1.0, 1.0, 1.0):
            assert report.passed, (report.name, report.failures())

    @pytest.mark.parametrize("a,tau", [(0.5, 0.2), (2.0, 0.4), (3.0, 0.1)])
    def test_all_five_other_parameters(self, a, tau):
        x0 = ParticleEnsemble(random_positions(1, 6, 2))
        rec = oracle_record(a=a, tau=tau, t_final=2.0, x0=x0)
        for report in all_checks(rec, a, a, 2.0):
            assert report.passed, (report.name, report.failures())

    def test_energy_slacks_nonnegative(self):
        report = check_energy_almost_decreasing(oracle_record())
        assert report.min_slack >= 0

    def test_gradient_decay_with_pessimistic_lambda(self):
        report = check_gradient_decay(oracle_record(), -1.0)
        assert report.passed and report.rows[0].rhs > report.rows[0].lhs

    def test_interaction_flow(self):
        x0 = ParticleEnsemble(random_positions(2, 8, 2))
        rec = oracle_record(tau=0.25, t_final=2.0, x0=x0, spec=quad_interaction())
        assert all(r.passed for r in all_checks(rec, 1.0, 1.0, 2.0))


class TestStationary:
    def test_zero_slacks(self):
        rec = stationary_record()
        assert np.all(check_energy_almost_decreasing(rec).slacks == 0)
        assert np.all(check_gradient_decay(rec, 1.0).slacks == 0)
        refined = check_refined_decay(rec, 1.0, 1.0)
        assert np.all(refined.slacks == 0) and refined.passed
        assert check_classical_stability(rec, 1.0, 1.0).passed
        assert check_refined_stability(rec, 1.0, 1.0, 1.0).passed


class TestViolations:
    def test_energy_bump(self):
        rec = oracle_record()
        # phi_5 above phi_4 while the gradient keeps shrinking
        rec.energy[4] = rec.energy[3] + 1e-2
        report = check_energy_almost_decreasing(rec)
        assert not report.passed
        assert [r.step for r in report.failures()] == [4]

    def test_gradient_growth(self):
        rec = oracle_record()
        rec.grad_norm[2] = 1.01 * rec.grad_norm[1]
        report = check_gradient_decay(rec, 1.0)
        assert [r.step for r in report.failures()] == [2]

    def test_refined_gradient(self):
        rec = oracle_record()
        # a gradient that does not shrink is within the classical bound but not the refined one
        rec.grad_norm[3] = rec.grad_norm[2]
        refined = check_refined_decay(rec, 1.0, 1.0)
        assert any(r.check == "refined_decay.gradient" and r.step == 3 for r in refined.failures())

    def test_displacement_floor(self):
        rec = oracle_record()
        rec.step_displacement[5] = 0.0
        refined = check_refined_decay(rec, 1.0, 1.0)
        assert any(r.check == "refined_decay.displacement" and r.step == 5 for r in refined.failures())

    def test_refined_stability_first_step(self):
        rec = oracle_record()
        rec.step_displacement[0] = 1.5 * rec.tau * rec.grad_norm0
        report = check_refined_stability(rec, 1.0, 1.0, 1.0)
        assert report.failures()[0].step == 0

    def test_classical_sum(self):
        rec = oracle_record()
        rec.step_displacement = [10 * d for d in rec.step_displacement]
        report = check_classical_stability(rec, 1.0, 1.0)
        assert not report.passed
        assert report.note  # the lipschitz surrogate is flagged as inconclusive


class TestApplicability:
    def test_refined_needs_small_step(self):
        rec = oracle_record(tau=1.5, t_final=3.0, a=0.5)
        with pytest.raises(ApplicabilityError):
            check_refined_decay(rec, 1.0, 1.0)
        with pytest.raises(ApplicabilityError):
            check_refined_stability(rec, 1.0, 1.0, 3.0)

    def test_refined_needs_convexity(self):
        with pytest.raises(ApplicabilityError):
            check_refined_decay(oracle_record(), -0.5, 1.0)

    def test_horizon(self):
        rec = oracle_record()
        with pytest.raises(ApplicabilityError):
            check_classical_stability(rec, 1.0, 0.5)
        with pytest.raises(ApplicabilityError):
            check_refined_stability(rec, 1.0, 1.0, 0.5)

    def test_scheme(self):
        rec = oracle_record(scheme="implicit_euler")
        with pytest.raises(ApplicabilityError):
            check_energy_almost_decreasing(rec)
        with pytest.raises(ApplicabilityError):
            check_refined_decay(rec, 1.0, 1.0)

    def test_lambda_domain(self):
        with pytest.raises(DomainError):
            check_gradient_decay(oracle_record(), -20.0)

    def test_digest_mismatch(self):
        rec = oracle_record()
        check_energy_almost_decreasing(rec, expected_digest=quad_confinement().digest())
        with pytest.raises(ApplicabilityError):
            check_energy_almost_decreasing(rec, expected_digest=EnergySpec().digest())


class TestReports:
    def test_csv_shape(self):
        text = check_gradient_decay(oracle_record(), 1.0).to_csv_text()
        lines = text.splitlines()
        assert lines[0] == "check,step,lhs,rhs,slack"
        assert lines[1].startswith("gradient_decay,0,")
        assert lines[-1] == "# verdict: pass"
        assert len(lines) == 12

    def test_pure_and_reproducible(self):
        rec = oracle_record()
        before = copy.deepcopy(rec)
        a = [r.to_csv_text() for r in all_checks(rec, 1.0, 1.0, 1.0)]
        b = [r.to_csv_text() for r in all_checks(rec, 1.0, 1.0, 1.0)]
        assert a == b
        assert rec == before

    def test_record_csv_round_trip(self, tmp_path):
        rec = oracle_record()
        rec.lam, rec.L = 1.0, 1.0
        rec.to_csv(tmp_path / "t.csv")
        back = TrajectoryRecord.from_csv(tmp_path / "t.csv")
        assert back == rec
        assert [r.to_csv_text() for r in run_all(back, 1.0, 1.0, 1.0)] == [
            r.to_csv_text() for r in run_all(rec, 1.0, 1.0, 1.0)
        ]

    def test_run_all_selection(self):
        rec = oracle_record()
        assert [r.name for r in run_all(rec)] == ["energy_almost_decreasing"]
        assert len(run_all(rec, 1.0, 1.0, 1.0)) == 5


def test_refined_decay_on_closed_form_iterates():
    """Substitute the closed-form oracle iterates directly into the three inequalities."""
    a, tau = 1.0, 0.1
    q = (1 - a * tau / 2) / (1 + a * tau / 2)
    x = q ** np.arange(11)
    rec = TrajectoryRecord(tau=tau, scheme="trapezoid", energy0=0.5 * a, grad_norm0=a)
    for n in range(1, 11):
        rec.append(n, n * tau, 0.5 * a * x[n] ** 2, a * x[n], x[n - 1] - x[n], 0.0, 0)
    report = check_refined_decay(rec, a, a)
    assert report.passed
    decay = math.exp(-2 * 0.8697665356171901 * tau)
    assert q**2 <= decay
