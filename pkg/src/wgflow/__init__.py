"""Particle solver for Wasserstein gradient flows with a second-order trapezoid scheme."""

__version__ = "0.1.0"

from .energy import (  # noqa: E402
    EnergySpec,
    RadialPotential,
    ScalarField1D,
    convexity_probe,
    energy_value,
    estimate_lambda,
    estimate_lipschitz,
    lifted_gradient_norm,
    mollified_density,
    wasserstein_gradient,
)
from .ensemble import ParticleEnsemble, exact_w2, l2_reference_distance, lipschitz_pushforward_bound  # noqa: E402
from .steppers import (  # noqa: E402
    InnerSolverConfig,
    SchemeConfig,
    explicit_euler_step,
    implicit_euler_step,
    run_trajectory,
    trapezoid_step,
)

__all__ = [
    "EnergySpec",
    "InnerSolverConfig",
    "ParticleEnsemble",
    "RadialPotential",
    "ScalarField1D",
    "SchemeConfig",
    "convexity_probe",
    "energy_value",
    "estimate_lambda",
    "estimate_lipschitz",
    "exact_w2",
    "explicit_euler_step",
    "implicit_euler_step",
    "l2_reference_distance",
    "lifted_gradient_norm",
    "lipschitz_pushforward_bound",
    "mollified_density",
    "run_trajectory",
    "trapezoid_step",
    "wasserstein_gradient",
]
