"""Model energy on empirical measures and its particle-level Wasserstein gradient.

The energy of an ensemble ``X_1..X_N`` is

    U(X) = (1/N) sum_i f((rho * chi_sigma)(X_i))
         + (1/N) sum_i V(X_i)
         + (1/(2 N^2)) sum_i sum_j W(X_i - X_j)

with ``chi_sigma`` the isotropic Gaussian density of width ``sigma`` and the
diagonal ``i == j`` kept in the interaction sum. Gradients are returned in the
L2(rho0) geometry, i.e. ``N`` times the Euclidean gradient with respect to
``X_i``, so that ``d/dt U(X + t v) = (1/N) sum_i <g_i, v_i>``.

Unbounded built-ins (``identity`` f, ``quadratic_paper`` V) lie outside the
C^{2,1}_b hypotheses of the convergence theory but are what the reference
experiments use.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import rng
from .ensemble import ParticleEnsemble, l2_inner, l2_norm
from .errors import ComparabilityError, ConfigError, EvaluationError, ParameterError, SamplingError

FIG1_LOG_C = -1.0 / (4.0 * math.pi)
FIG1_LOG_EPS = 1e-2

SCALAR_FIELD_PARAMS: dict[str, dict[str, float]] = {
    "none": {},
    "identity": {},
    "log_regularized": {"scale": 0.5, "eps": 1e-2},
    "quadratic": {"a": 1.0},
}

POTENTIAL_PARAMS: dict[str, dict[str, float]] = {
    "none": {},
    "quadratic": {"a": 1.0},
    "quadratic_paper": {},
    "log_regularized": {"c": FIG1_LOG_C, "eps": FIG1_LOG_EPS},
}


def _resolve_params(kind: str, given: dict[str, Any], table: dict[str, dict[str, float]], what: str) -> dict[str, float]:
    if kind not in table:
        raise ConfigError(f"unknown {what} kind {kind!r}; expected one of {sorted(table)}")
    allowed = table[kind]
    unknown = set(given) - set(allowed)
    if unknown:
        raise ConfigError(f"{what} kind {kind!r} takes no parameter(s) {sorted(unknown)}")
    params = dict(allowed)
    for name, value in given.items():
        try:
            params[name] = float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{what} parameter {name!r} must be a number, got {value!r}") from None
    return params


@dataclass(frozen=True)
class ScalarField1D:
    """The internal-energy integrand f(s), evaluated elementwise on arrays."""

    kind: str = "none"
    params: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "params", _resolve_params(self.kind, self.params, SCALAR_FIELD_PARAMS, "f"))
        if self.kind == "log_regularized" and self.params["eps"] <= 0:
            raise ConfigError("log_regularized f needs eps > 0")

    @property
    def is_none(self) -> bool:
        return self.kind == "none"

    def in_domain(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.kind == "log_regularized":
            return s > -self.params["eps"]
        return np.isfinite(s)

    def value(self, s):
        s = np.asarray(s, dtype=float)
        p = self.params
        if self.kind == "none":
            return np.zeros_like(s)
        if self.kind == "identity":
            return s.copy()
        if self.kind == "log_regularized":
            return p["scale"] * np.log(s + p["eps"])
        return 0.5 * p["a"] * s * s

    def d1(self, s):
        s = np.asarray(s, dtype=float)
        p = self.params
        if self.kind == "none":
            return np.zeros_like(s)
        if self.kind == "identity":
            return np.ones_like(s)
        if self.kind == "log_regularized":
            return p["scale"] / (s + p["eps"])
        return p["a"] * s

    def d2(self, s):
        s = np.asarray(s, dtype=float)
        p = self.params
        if self.kind in ("none", "identity"):
            return np.zeros_like(s)
        if self.kind == "log_regularized":
            return -p["scale"] / (s + p["eps"]) ** 2
        return np.full_like(s, p["a"])

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, **self.params}


@dataclass(frozen=True)
class RadialPotential:
    """A radial (hence even) potential on R^d, used for both V and W."""

    kind: str = "none"
    params: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "params", _resolve_params(self.kind, self.params, POTENTIAL_PARAMS, "potential"))
        if self.kind == "log_regularized" and self.params["eps"] <= 0:
            raise ConfigError("log_regularized potential needs eps > 0")

    @property
    def is_none(self) -> bool:
        return self.kind == "none"

    def value(self, x: np.ndarray) -> np.ndarray:
        r2 = np.sum(x * x, axis=-1)
        p = self.params
        if self.kind == "none":
            return np.zeros_like(r2)
        if self.kind == "quadratic":
            return 0.5 * p["a"] * r2
        if self.kind == "quadratic_paper":
            return r2
        return p["c"] * np.log(p["eps"] ** 2 + r2)

    def grad(self, x: np.ndarray) -> np.ndarray:
        p = self.params
        if self.kind == "none":
            return np.zeros_like(x)
        if self.kind == "quadratic":
            return p["a"] * x
        if self.kind == "quadratic_paper":
            return 2.0 * x
        r2 = np.sum(x * x, axis=-1)
        return (2.0 * p["c"] / (p["eps"] ** 2 + r2))[..., None] * x

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, **self.params}


@dataclass(frozen=True)
class EnergySpec:
    f: ScalarField1D = field(default_factory=ScalarField1D)
    sigma: float = 1.0
    V: RadialPotential = field(default_factory=RadialPotential)
    W: RadialPotential = field(default_factory=RadialPotential)

    def __post_init__(self) -> None:
        if not self.f.is_none and not self.sigma > 0:
            raise ParameterError(f"mollifier width sigma must be positive, got {self.sigma}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "internal": {"f": self.f.to_dict(), "sigma": float(self.sigma)},
            "potential": self.V.to_dict(),
            "interaction": self.W.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> EnergySpec:
        if not isinstance(doc, dict):
            raise ConfigError("energy must be an object")
        unknown = set(doc) - {"internal", "potential", "interaction"}
        if unknown:
            raise ConfigError(f"unknown energy keys {sorted(unknown)}")
        internal = doc.get("internal", {}) or {}
        f = _field_from(internal.get("f", {"kind": "none"}), ScalarField1D)
        sigma = float(internal.get("sigma", 1.0))
        V = _field_from(doc.get("potential", {"kind": "none"}), RadialPotential)
        W = _field_from(doc.get("interaction", {"kind": "none"}), RadialPotential)
        return cls(f=f, sigma=sigma, V=V, W=W)

    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _field_from(doc: dict[str, Any], cls):
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ConfigError(f"expected an object with a 'kind' key, got {doc!r}")
    params = {k: v for k, v in doc.items() if k != "kind"}
    return cls(doc["kind"], params)


# --- evaluation -------------------------------------------------------------


def _gaussian(diff: np.ndarray, sigma: float) -> np.ndarray:
    d = diff.shape[-1]
    r2 = np.sum(diff * diff, axis=-1)
    return np.exp(-r2 / (2.0 * sigma * sigma)) / (2.0 * math.pi * sigma * sigma) ** (d / 2.0)


def _pair_differences(x: np.ndarray) -> np.ndarray:
    return x[:, None, :] - x[None, :, :]


def mollified_density(e: ParticleEnsemble, sigma: float, x) -> float:
    """(rho * chi_sigma)(x) for the empirical measure of ``e``."""
    if not sigma > 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (e.dimension,):
        raise ComparabilityError(f"point has shape {x.shape}, ensemble dimension is {e.dimension}")
    return float(np.mean(_gaussian(x[None, :] - e.positions, sigma)))


def _densities(spec: EnergySpec, diff: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    chi = _gaussian(diff, spec.sigma)
    s = chi.mean(axis=1)
    bad = np.flatnonzero(~spec.f.in_domain(s))
    if bad.size:
        i = int(bad[0])
        raise EvaluationError(
            f"mollified density {s[i]!r} at particle {i} is outside the domain of f ({spec.f.kind})", index=i
        )
    return chi, s


def energy_value(e: ParticleEnsemble, spec: EnergySpec) -> float:
    x = e.positions
    total = 0.0
    diff = None
    if not spec.f.is_none:
        diff = _pair_differences(x)
        _, s = _densities(spec, diff)
        total += float(np.mean(spec.f.value(s)))
    if not spec.V.is_none:
        total += float(np.mean(spec.V.value(x)))
    if not spec.W.is_none:
        if diff is None:
            diff = _pair_differences(x)
        total += 0.5 * float(np.mean(spec.W.value(diff)))
    return total


def internal_gradient(x: np.ndarray, spec: EnergySpec, diff: np.ndarray | None = None) -> np.ndarray:
    if diff is None:
        diff = _pair_differences(x)
    chi, s = _densities(spec, diff)
    fp = spec.f.d1(s)
    # grad chi_sigma(z) = -z / sigma^2 * chi_sigma(z); the f' factor is symmetrised over (i, j)
    weight = (fp[:, None] + fp[None, :]) * chi / (spec.sigma * spec.sigma)
    return -np.mean(weight[:, :, None] * diff, axis=1)


def interaction_gradient(x: np.ndarray, spec: EnergySpec, diff: np.ndarray | None = None) -> np.ndarray:
    if diff is None:
        diff = _pair_differences(x)
    return np.mean(spec.W.grad(diff), axis=1)


def gradient_array(x: np.ndarray, spec: EnergySpec) -> np.ndarray:
    g = np.zeros_like(x)
    diff = None
    if not spec.f.is_none or not spec.W.is_none:
        diff = _pair_differences(x)
    if not spec.f.is_none:
        g += internal_gradient(x, spec, diff)
    if not spec.V.is_none:
        g += spec.V.grad(x)
    if not spec.W.is_none:
        g += interaction_gradient(x, spec, diff)
    return g


def wasserstein_gradient(e: ParticleEnsemble, spec: EnergySpec) -> np.ndarray:
    """Per-particle Wasserstein gradient, shape ``(N, d)`` aligned with particle indices."""
    return gradient_array(e.positions, spec)


def lifted_gradient_norm(e: ParticleEnsemble, spec: EnergySpec) -> float:
    return l2_norm(wasserstein_gradient(e, spec))


def default_probe_step(e: ParticleEnsemble) -> float:
    return 1e-4 * (1.0 + e.rms_radius())


def convexity_probe(
    e: ParticleEnsemble, v: np.ndarray, spec: EnergySpec, h: float | None = None
) -> tuple[float, float]:
    """First and second derivative of ``t -> U(X + t v)`` at ``t = 0``.

    The first derivative is the exact pairing of the gradient with ``v``; the
    second is a central difference with step ``h``.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    if v.shape != e.positions.shape:
        raise ComparabilityError(f"direction shape {v.shape} does not match ensemble {e.positions.shape}")
    if h is None:
        h = default_probe_step(e)
    if not h > 0:
        raise ParameterError(f"probe step must be positive, got {h}")
    first = l2_inner(wasserstein_gradient(e, spec), v)
    e0 = energy_value(e, spec)
    ep = energy_value(e.moved(h * v), spec)
    em = energy_value(e.moved(-h * v), spec)
    second = ((ep - e0) + (em - e0)) / (h * h)
    return first, second


def _sampled_ratios(spec, base, samples, radius, seed, ratio):
    if samples < 1:
        raise ParameterError(f"samples must be >= 1, got {samples}")
    if not radius > 0:
        raise ParameterError(f"radius must be positive, got {radius}")
    n, d = base.positions.shape
    out = []
    draw = 0
    degenerate = 0
    while len(out) < samples:
        z1 = rng.normals(seed, rng.PERTURBATION, 2 * draw, n * d).reshape(n, d)
        z2 = rng.normals(seed, rng.PERTURBATION, 2 * draw + 1, n * d).reshape(n, d)
        draw += 1
        xi1 = base.positions + radius * z1
        xi2 = base.positions + radius * z2
        dx = xi1 - xi2
        dist = l2_norm(dx)
        if dist == 0.0:
            degenerate += 1
            if degenerate >= 100:
                raise SamplingError("100 consecutive degenerate perturbation pairs")
            continue
        degenerate = 0
        dg = gradient_array(xi1, spec) - gradient_array(xi2, spec)
        out.append(ratio(dg, dx, dist))
    return np.array(out)


def estimate_lambda(
    spec: EnergySpec, base: ParticleEnsemble, samples: int = 32, radius: float = 0.1, seed: int = 0
) -> float:
    """Smallest sampled secant ratio <g1 - g2, x1 - x2> / |x1 - x2|^2 near ``base``.

    An empirical estimate of the convexity modulus, not a certified bound.
    """
    r = _sampled_ratios(spec, base, samples, radius, seed, lambda dg, dx, dist: l2_inner(dg, dx) / dist**2)
    return float(r.min())


def estimate_lipschitz(
    spec: EnergySpec, base: ParticleEnsemble, samples: int = 32, radius: float = 0.1, seed: int = 0
) -> float:
    r = _sampled_ratios(spec, base, samples, radius, seed, lambda dg, dx, dist: l2_norm(dg) / dist)
    return float(r.max())
