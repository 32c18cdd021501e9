import itertools
import math

import numpy as np
import pytest

from wgflow import rng
from wgflow.energy import EnergySpec, RadialPotential, ScalarField1D
from wgflow.ensemble import ParticleEnsemble

TEST_STREAM = 99


def random_positions(seed: int, n: int, d: int, scale: float = 1.0) -> np.ndarray:
    return scale * rng.normals(seed, TEST_STREAM, 0, n * d).reshape(n, d)


def brute_force_w2(a: np.ndarray, b: np.ndarray) -> float:
    """Minimum over all N! permutation couplings; independent of any assignment solver."""
    n = len(a)
    cost = np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=-1)
    perms = np.array(list(itertools.permutations(range(n))))
    best = cost[np.arange(n), perms].sum(axis=1).min()
    return math.sqrt(best / n)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def quad_confinement(a: float = 1.0) -> EnergySpec:
    return EnergySpec(V=RadialPotential("quadratic", {"a": a}))


def quad_interaction(a: float = 1.0) -> EnergySpec:
    return EnergySpec(W=RadialPotential("quadratic", {"a": a}))


@pytest.fixture
def single_particle():
    return ParticleEnsemble([[1.0]])


@pytest.fixture
def pair_1d():
    return ParticleEnsemble([[1.0], [-1.0]])


@pytest.fixture
def full_spec():
    """Every term active, moderate stiffness."""
    return EnergySpec(
        f=ScalarField1D("log_regularized", {"scale": 0.5, "eps": 0.01}),
        sigma=0.4,
        V=RadialPotential("quadratic_paper"),
        W=RadialPotential("log_regularized", {"c": -0.2, "eps": 0.1}),
    )
