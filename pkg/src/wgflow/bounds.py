"""Closed-form constants and a-priori error bounds for the trapezoid scheme.

All functions are pure scalar formulas. ``lam`` is the convexity modulus of
the lifted energy, ``L`` the Lipschitz constant of its gradient, ``tau`` the
step and ``t``/``T`` the horizon. Violated hypotheses raise DomainError.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError

SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class BoundInputs:
    lam: float = 0.0
    L: float = 0.0
    tau: float = 0.1
    t: float = 0.0
    init_error: float = 0.0
    init_grad_norm: float = 0.0
    curvature_L2: float = 0.0
    alpha: float = 1.0

    def __post_init__(self) -> None:
        for name in ("L", "t", "init_error", "init_grad_norm", "curvature_L2"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be nonnegative, got {getattr(self, name)}")
        if not self.tau > 0:
            raise DomainError(f"tau must be positive, got {self.tau}")
        if not 0 < self.alpha <= 1:
            raise DomainError(f"alpha must lie in (0, 1], got {self.alpha}")


def _require_small_step(lam: float, tau: float) -> None:
    if not tau > 0:
        raise DomainError(f"tau must be positive, got {tau}")
    if abs(lam) * tau >= 1:
        raise DomainError(f"need |lambda| * tau < 1, got {abs(lam) * tau}")


def lambda_tau(lam: float, tau: float) -> float:
    """(1/(2 tau)) log((1 + lam tau)/(1 - lam tau)), i.e. artanh(lam tau)/tau."""
    _require_small_step(lam, tau)
    return math.atanh(lam * tau) / tau


def lambda_tau_L(lam: float, tau: float, L: float) -> float:
    if lam < 0:
        raise DomainError(f"lambda_tau_L needs lambda >= 0, got {lam}")
    if not tau > 0 or L < 0 or L * tau > 1:
        raise DomainError(f"lambda_tau_L needs 0 < tau <= 1/L (tau={tau}, L={L})")
    return math.log1p(lam * tau * (2.0 - L * tau)) / (2.0 * tau)


def gradient_decay_factor(lam: float, tau: float) -> float:
    """Per-step bound on the growth of the squared gradient norm."""
    lt = lambda_tau(lam, tau)
    if lam >= 0:
        return 1.0
    return math.exp(2.0 * abs(lt) * tau)


def stability_factor(lam: float, tau: float, T: float) -> float:
    if T < 0:
        raise DomainError(f"T must be nonnegative, got {T}")
    lt = lambda_tau(lam, tau)
    return max(1.0, math.exp(-2.0 * lt * T))


def lower_order_constant(lt: float, t: float, tau: float) -> float:
    """C(lambda_tau, t, tau) of the O(tau) estimate.

    The root term is sqrt(3/4 + (1 + (7/3)|lt|(t + tau)) e^{-2 lt tau}).
    """
    s = t + tau
    return (1.0 + abs(lt) * s) * math.exp(-lt * tau) + math.sqrt(
        0.75 + (1.0 + 7.0 / 3.0 * abs(lt) * s) * math.exp(-2.0 * lt * tau)
    )


def evi_error_bound(inputs: BoundInputs) -> float:
    lam, tau, t = inputs.lam, inputs.tau, inputs.t
    lt = lambda_tau(lam, tau)
    if lam >= 0:
        return SQRT3 * inputs.init_error + math.sqrt(33.0) / 2.0 * tau * inputs.init_grad_norm
    growth = math.exp(-lt * t)
    return SQRT3 * growth * inputs.init_error + SQRT3 * lower_order_constant(lt, t, tau) * tau * growth * inputs.init_grad_norm


def k_constant(lt: float, T: float, tau_prime: float) -> float:
    """K(lambda_tau, T, tau') of the lambda < 0 interpolation bound.

    A single modulus ``lt`` is used inside and outside the square root.
    """
    if lt > 0:
        raise DomainError(f"k_constant applies to lambda_tau <= 0, got {lt}")
    if T < 0 or tau_prime < 0:
        raise DomainError("T and tau' must be nonnegative")
    s = T + tau_prime
    value = math.sqrt(0.75 + (1.0 - 7.0 / 3.0 * lt * s) * math.exp(-2.0 * lt * tau_prime)) + abs(lt) * s * math.exp(
        -lt * tau_prime
    )
    if not math.isfinite(value):
        raise DomainError("k_constant overflowed")
    return value


def _refined_preconditions(lam: float, tau: float, L: float) -> None:
    if lam < 0:
        raise DomainError(f"refined bounds need lambda >= 0, got {lam}")
    if L * tau > 1:
        raise DomainError(f"refined bounds need tau <= 1/L (tau={tau}, L={L})")


def convexity_ratio(lam: float, tau: float, L: float) -> float:
    """lambda / lambda_{tau,L}, continued by its limit 2/(2 - L tau) at lambda -> 0."""
    if lam < 1e-12:
        return 2.0 / (2.0 - L * tau)
    return lam / lambda_tau_L(lam, tau, L)


def refined_constant(lam: float, t: float, tau: float, L: float) -> float:
    _refined_preconditions(lam, tau, L)
    ltl = lambda_tau_L(lam, tau, L)
    ratio = convexity_ratio(lam, tau, L)
    s = t + tau
    return (
        math.exp(ltl * tau)
        + math.sqrt(ratio) * s
        + math.sqrt(ratio * (1.0 + 2.0 * lam * s) + lam * s + math.exp(2.0 * ltl * tau))
    )


def refined_error_bound(inputs: BoundInputs) -> float:
    lam, tau, t, L = inputs.lam, inputs.tau, inputs.t, inputs.L
    _refined_preconditions(lam, tau, L)
    ltl = lambda_tau_L(lam, tau, L)
    c = refined_constant(lam, t, tau, L)
    return SQRT3 * math.exp(-ltl * t) * (inputs.init_error + c * tau * inputs.init_grad_norm)


def smooth_error_bound(inputs: BoundInputs) -> float:
    """Second-order (for alpha = 1) bound e^{2LT} e_0 + 2 (L_curv/L)(e^{2LT} - 1) tau^{1+alpha}."""
    L, T, tau = inputs.L, inputs.t, inputs.tau
    if not L > 0:
        raise DomainError("smooth_error_bound needs L > 0")
    if L * tau > 1:
        raise DomainError(f"smooth_error_bound needs tau <= 1/L (tau={tau}, L={L})")
    growth = math.exp(2.0 * L * T)
    return growth * inputs.init_error + 2.0 * inputs.curvature_L2 / L * (growth - 1.0) * tau ** (1.0 + inputs.alpha)
