import math
from fractions import Fraction

import numpy as np
import pytest

from wgflow.energy import EnergySpec, RadialPotential, ScalarField1D, gradient_array, wasserstein_gradient
from wgflow.ensemble import ParticleEnsemble, l2_inner, l2_norm
from wgflow.errors import InnerSolverError, ParameterError
from wgflow.steppers import (
    InnerSolverConfig,
    SchemeConfig,
    explicit_euler_step,
    implicit_euler_step,
    resolve_descent_rate,
    run_trajectory,
    trapezoid_step,
)

from conftest import quad_confinement, quad_interaction, random_positions


def E(*rows):
    return ParticleEnsemble(np.array(rows, dtype=float).reshape(len(rows), -1))


def cfg(kind="trapezoid", tau=0.1, t_final=1.0, solver="fixed_point", **inner):
    return SchemeConfig(kind=kind, tau=tau, t_final=t_final, inner=InnerSolverConfig(kind=solver, **inner))


class TestConfig:
    def test_validation(self):
        with pytest.raises(ParameterError):
            SchemeConfig(kind="rk4")
        with pytest.raises(ParameterError):
            SchemeConfig(tau=0.0)
        with pytest.raises(ParameterError):
            InnerSolverConfig(tol=0.0)
        with pytest.raises(ParameterError):
            InnerSolverConfig(max_iters=0)
        with pytest.raises(ParameterError):
            InnerSolverConfig(kind="newton")
        with pytest.raises(ParameterError):
            InnerSolverConfig(descent_rate=-1.0)

    def test_negative_lambda_admissibility(self):
        SchemeConfig(tau=0.5, lam=-3.9)
        with pytest.raises(ParameterError):
            SchemeConfig(tau=0.5, lam=-4.0)
        # only the trapezoid rule carries the restriction
        SchemeConfig(kind="implicit_euler", tau=0.5, lam=-4.0)

    @pytest.mark.parametrize(
        "tau,t_final,n",
        [(Fraction(1, 10), Fraction(1), 10), (0.1, 1.0, 10), (0.3, 1.0, 4), (Fraction(1, 3), Fraction(1, 2), 2), (0.1, 0.7, 7)],
    )
    def test_num_steps(self, tau, t_final, n):
        assert SchemeConfig(tau=tau, t_final=t_final).num_steps() == n


class TestExplicitEuler:
    def test_examples(self):
        assert explicit_euler_step(E(0.0), quad_confinement(), 0.1) == E(0.0)
        assert explicit_euler_step(E(1.0), quad_confinement(), 0.1).positions[0, 0] == pytest.approx(0.9, rel=1e-15)
        out = explicit_euler_step(E(1.0, -1.0), quad_interaction(), 0.5)
        assert np.allclose(out.positions.ravel(), [0.5, -0.5], rtol=0, atol=1e-15)


class TestImplicitSteps:
    def test_critical_point(self):
        for step in (implicit_euler_step, trapezoid_step):
            res = step(E(0.0), quad_confinement(), cfg())
            assert res.next == E(0.0) and res.residual == 0.0 and res.inner_iterations == 0

    def test_implicit_euler_examples(self):
        res = implicit_euler_step(E(1.0), quad_confinement(), cfg("implicit_euler"))
        assert res.next.positions[0, 0] == pytest.approx(1 / 1.1, abs=1e-9)
        res = implicit_euler_step(E(1.0), quad_confinement(2.0), cfg("implicit_euler", tau=0.25))
        assert res.next.positions[0, 0] == pytest.approx(2 / 3, abs=1e-9)

    def test_trapezoid_examples(self):
        q = 0.95 / 1.05
        res = trapezoid_step(E(1.0), quad_confinement(), cfg())
        assert res.next.positions[0, 0] == pytest.approx(q, abs=1e-10)
        res = trapezoid_step(E(1.0, -1.0), quad_interaction(), cfg())
        assert np.allclose(res.next.positions.ravel(), [q, -q], rtol=0, atol=1e-10)

    @pytest.mark.parametrize("kind", ["implicit_euler", "trapezoid"])
    def test_residual_postcondition(self, kind, full_spec):
        x = ParticleEnsemble(random_positions(1, 12, 2))
        c = cfg(kind, tau=0.05)
        res = (implicit_euler_step if kind == "implicit_euler" else trapezoid_step)(x, full_spec, c)
        theta = 1.0 if kind == "implicit_euler" else 0.5
        gx = gradient_array(x.positions, full_spec)
        defect = res.next.positions - x.positions + c.dt * (theta * res.gradient_at_next + (1 - theta) * gx)
        assert res.residual <= c.inner.tol
        assert l2_norm(defect) == pytest.approx(res.residual, abs=1e-15)
        assert np.array_equal(res.gradient_at_next, wasserstein_gradient(res.next, full_spec))

    @pytest.mark.parametrize("a,tau", [(1.0, 0.1), (2.0, 0.25), (3.0, 0.3), (1.0, 1.0)])
    def test_fixed_point_contraction_count(self, a, tau):
        c = cfg(tau=tau)
        res = trapezoid_step(E(1.0), quad_confinement(a), c)
        q = a * tau / 2
        exact = (1 - q) / (1 + q)
        e0 = abs((1 - a * tau) - exact)
        # the defect at iterate k is (1 + q) q^k e0; stop at the first k where it drops below tol
        predicted = max(0, math.ceil(math.log(c.inner.tol / ((1 + q) * e0)) / math.log(q)))
        assert abs(res.inner_iterations - predicted) <= 2

    def test_prox_descent_agrees_with_fixed_point(self, full_spec):
        x = ParticleEnsemble(random_positions(2, 10, 2))
        a = trapezoid_step(x, full_spec, cfg(tau=0.05))
        b = trapezoid_step(x, full_spec, cfg(tau=0.05, solver="prox_descent"))
        assert b.residual <= 1e-10
        assert l2_norm(a.next.positions - b.next.positions) < 1e-9

    def test_auto_descent_rate(self):
        c = cfg(tau=0.1, solver="prox_descent")
        assert resolve_descent_rate(E(1.0, 2.0), quad_confinement(4.0), c) == pytest.approx(1 / (10 + 2), rel=1e-10)
        c = cfg(tau=0.1, solver="prox_descent", descent_rate=0.01)
        assert resolve_descent_rate(E(1.0), quad_confinement(), c) == 0.01

    def test_non_convergence(self):
        with pytest.raises(InnerSolverError) as info:
            trapezoid_step(E(1.0), quad_confinement(), cfg(max_iters=2, tol=1e-14))
        assert info.value.best_residual > 1e-14
        # divergent fixed point map when tau * a / 2 > 1
        with pytest.raises(InnerSolverError):
            trapezoid_step(E(1.0), quad_confinement(30.0), cfg(tau=0.1, max_iters=500))


class TestRunTrajectory:
    def test_quadratic_oracle(self):
        rec, snaps = run_trajectory(E(1.0), quad_confinement(), cfg(tau=Fraction(1, 10), t_final=Fraction(1)))
        final = snaps[10].positions[0, 0]
        assert final == pytest.approx((0.95 / 1.05) ** 10, abs=1e-9)
        assert final == pytest.approx(0.36757254238286915, abs=1e-9)
        assert abs(final - math.exp(-1)) == pytest.approx(3.0689878857317215e-4, rel=1e-4)
        assert len(rec) == 10 and rec.complete
        assert rec.steps == list(range(1, 11))
        assert rec.times[-1] == pytest.approx(1.0)

    def test_stationary(self):
        x0 = ParticleEnsemble(random_positions(3, 5, 2))
        rec, snaps = run_trajectory(x0, EnergySpec(), cfg(t_final=0.5))
        assert all(s == x0 for s in snaps.values())
        assert np.all(rec.energies == 0.0)

    def test_centroid_conserved_under_interaction(self):
        x0 = ParticleEnsemble(random_positions(4, 9, 2, scale=2.0))
        _, snaps = run_trajectory(x0, quad_interaction(1.3), cfg(tau=0.05, t_final=1.0), save_every=3)
        for s in snaps.values():
            assert np.all(np.abs(s.centroid() - x0.centroid()) <= 1e-12)

    def test_snapshot_schedule(self):
        _, snaps = run_trajectory(E(1.0), quad_confinement(), cfg(tau=0.1, t_final=1.0), save_every=3)
        assert sorted(snaps) == [0, 3, 6, 9, 10]

    def test_record_columns(self):
        rec, snaps = run_trajectory(E(1.0, 2.0), quad_confinement(), cfg(tau=0.1, t_final=0.3))
        assert rec.energy0 == pytest.approx(1.25)
        assert rec.displacements[0] == pytest.approx(l2_norm(snaps[1].positions - snaps[0].positions))
        assert all(r <= 1e-10 for r in rec.residual)

    def test_failure_leaves_partial_record(self):
        # tau * a / 2 > 1: the fixed point map diverges on the first step
        c = cfg(tau=0.1, t_final=1.0, max_iters=50, tol=1e-12)
        with pytest.raises(InnerSolverError) as info:
            run_trajectory(E(1.0), quad_confinement(25.0), c)
        rec = info.value.record
        assert rec is not None and not rec.complete
        assert 0 in info.value.snapshots

    def test_explicit_and_implicit_schemes_run(self):
        for kind in ("explicit_euler", "implicit_euler"):
            rec, snaps = run_trajectory(E(1.0), quad_confinement(), cfg(kind, tau=0.1, t_final=1.0))
            expected = 0.9**10 if kind == "explicit_euler" else 1.1**-10
            assert snaps[10].positions[0, 0] == pytest.approx(expected, abs=1e-9)


def _trajectory_gradients(x0, spec, c):
    _, snaps = run_trajectory(x0, spec, c)
    return [wasserstein_gradient(snaps[n], spec) for n in sorted(snaps)]


class TestTheoryInvariants:
    specs = [
        (quad_confinement(1.0), 1.0),
        (quad_interaction(1.0), 1.0),
        (EnergySpec(V=RadialPotential("quadratic", {"a": 2.0}), W=RadialPotential("quadratic", {"a": 0.5})), 2.5),
    ]

    @pytest.mark.parametrize("idx", range(3))
    def test_secant_lower_bound(self, idx):
        spec, L = self.specs[idx]
        tau = 0.9 / L
        gs = _trajectory_gradients(ParticleEnsemble(random_positions(idx, 7, 2)), spec, cfg(tau=tau, t_final=5 * tau))
        for g0, g1 in zip(gs, gs[1:]):
            assert l2_inner(g0, g1) >= (1 - L * tau) * l2_norm(g1) ** 2 - 1e-12

    @pytest.mark.parametrize("idx", range(3))
    def test_gradient_non_increasing(self, idx):
        spec, L = self.specs[idx]
        gs = _trajectory_gradients(ParticleEnsemble(random_positions(10 + idx, 7, 2)), spec, cfg(tau=0.2, t_final=2.0))
        norms = [l2_norm(g) for g in gs]
        for a, b in zip(norms, norms[1:]):
            assert b**2 <= a**2 * (1 + 1e-10)

    def test_almost_decreasing_energy(self, full_spec):
        from wgflow.energy import energy_value

        x0 = ParticleEnsemble(random_positions(5, 10, 2))
        rec, _ = run_trajectory(x0, full_spec, cfg(tau=0.02, t_final=0.2))
        phi, g = rec.energies, rec.grad_norms
        for j in range(len(rec)):
            rhs = 0.25 * rec.tau * (g[j] ** 2 - g[j + 1] ** 2)
            assert phi[j + 1] - phi[j] <= rhs + 1e-8 * (1 + abs(phi[j]))
        assert phi[0] == energy_value(x0, full_spec)


def test_internal_energy_flow_spreads_particles():
    # a positive f' pushes mass apart; the second moment must grow
    spec = EnergySpec(f=ScalarField1D("quadratic", {"a": 1.0}), sigma=0.5)
    x0 = ParticleEnsemble(random_positions(6, 12, 1, scale=0.3))
    _, snaps = run_trajectory(x0, spec, cfg(tau=0.05, t_final=0.5))
    assert snaps[10].rms_radius() > x0.rms_radius()
