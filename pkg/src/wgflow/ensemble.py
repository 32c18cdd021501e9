"""Equal-weight particle ensembles and the two distances used throughout.

An ensemble of ``N`` particles in ``R^d`` represents the empirical measure
``(1/N) sum_i delta_{X_i}``. The particle index is the Lagrangian label, so
nothing here ever reorders particles.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import CapacityError, ComparabilityError, ConfigError, ParameterError

DEFAULT_W2_CAP = 512


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    positions: np.ndarray

    def __post_init__(self) -> None:
        pos = np.array(self.positions, dtype=float, copy=True)
        if pos.ndim == 1:
            pos = pos[:, None]
        if pos.ndim != 2 or pos.shape[0] < 1 or pos.shape[1] < 1:
            raise ParameterError(f"positions must have shape (N, d) with N, d >= 1, got {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise ParameterError("positions contain non-finite values")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def count(self) -> int:
        return self.positions.shape[0]

    @property
    def dimension(self) -> int:
        return self.positions.shape[1]

    def comparable(self, other: ParticleEnsemble) -> bool:
        return self.positions.shape == other.positions.shape

    def moved(self, displacement: np.ndarray) -> ParticleEnsemble:
        return ParticleEnsemble(self.positions + displacement)

    def centroid(self) -> np.ndarray:
        return self.positions.mean(axis=0)

    def rms_radius(self) -> float:
        return float(np.sqrt(np.mean(np.sum(self.positions**2, axis=1))))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ParticleEnsemble):
            return NotImplemented
        return self.comparable(other) and bool(np.array_equal(self.positions, other.positions))

    def __len__(self) -> int:
        return self.count


def _require_comparable(a: ParticleEnsemble, b: ParticleEnsemble) -> None:
    if not a.comparable(b):
        raise ComparabilityError(
            f"ensembles are not comparable: shapes {a.positions.shape} and {b.positions.shape}"
        )


def l2_norm(field: np.ndarray) -> float:
    """L2(rho0) norm of a per-particle vector field: sqrt(mean_i |v_i|^2)."""
    return float(np.sqrt(np.mean(np.sum(field * field, axis=1))))


def l2_inner(u: np.ndarray, v: np.ndarray) -> float:
    return float(np.mean(np.sum(u * v, axis=1)))


def l2_reference_distance(a: ParticleEnsemble, b: ParticleEnsemble) -> float:
    """Distance of the two Lagrangian maps in L2(rho0), particle i against particle i.

    This is the coupling that matches labels, so it bounds W2 from above.
    """
    _require_comparable(a, b)
    return l2_norm(a.positions - b.positions)


def squared_cost_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.sum(diff * diff, axis=2)


def exact_w2(a: ParticleEnsemble, b: ParticleEnsemble, cap: int = DEFAULT_W2_CAP) -> float:
    """Exact W2 between two equal-weight empirical measures of the same size.

    For uniform weights the optimal plan is a permutation, found here by an
    O(N^3) assignment solve on the squared Euclidean cost.
    """
    _require_comparable(a, b)
    if a.count > cap:
        raise CapacityError(f"exact_w2 supports at most {cap} particles, got {a.count}")
    cost = squared_cost_matrix(a.positions, b.positions)
    rows, cols = linear_sum_assignment(cost)
    return float(np.sqrt(np.sum(cost[rows, cols]) / a.count))


def lipschitz_pushforward_bound(l: float, a: ParticleEnsemble, b: ParticleEnsemble) -> float:
    """Upper bound on W2 after pushing both measures through an l-Lipschitz map."""
    if l < 0:
        raise ParameterError(f"Lipschitz constant must be nonnegative, got {l}")
    return l * exact_w2(a, b)


# --- snapshot CSV -----------------------------------------------------------


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def write_ensemble_csv(ensemble: ParticleEnsemble, path: str | Path) -> None:
    d = ensemble.dimension
    with open(path, "w", newline="") as fh:
        fh.write(",".join(["particle_index"] + [f"x{k}" for k in range(d)]) + "\n")
        for i, row in enumerate(ensemble.positions):
            fh.write(",".join([str(i)] + [format_float(v) for v in row]) + "\n")


def read_ensemble_csv(path: str | Path) -> ParticleEnsemble:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"{path}: empty snapshot file") from None
        d = len(header) - 1
        if d < 1 or header[0] != "particle_index" or header[1:] != [f"x{k}" for k in range(d)]:
            raise ConfigError(f"{path}: bad snapshot header {header}")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != d + 1:
                raise ConfigError(f"{path}:{lineno}: expected {d + 1} fields, got {len(rec)}")
            if int(rec[0]) != len(rows):
                raise ConfigError(f"{path}:{lineno}: particle indices must ascend from 0")
            try:
                rows.append([float(v) for v in rec[1:]])
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise ConfigError(f"{path}: no particles")
    return ParticleEnsemble(np.array(rows))
