"""Numerical instruments for the normalized family Q(s, λ).

Q(s, λ) = s - (λ+1)/λ - λ/(1-λ) e^{-s} + e^{-λs}/(λ(1-λ)) has a triple root at
0 for every λ in (0, 1). The tools here follow nontrivial root branches in λ,
evaluate the imaginary-axis crossing relations, and describe the λ → 1 limit
s - 2 + e^{-s}(s + 2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import BranchError, InvalidSystemError, SingularDerivativeError
from .mid_design import normalized_Q

__all__ = [
    "BranchPoint",
    "CrossingCandidate",
    "branch_derivative",
    "continue_branch",
    "correct_root",
    "crossing_lambda",
    "crossing_residuals",
    "crossing_direction",
    "crossing_candidate",
    "scan_crossings",
    "limit_quasipolynomial",
    "limit_roots",
]

BRANCH_RESIDUAL = 1e-9


@dataclass(frozen=True)
class BranchPoint:
    lam: float
    s: complex
    residual: float


@dataclass(frozen=True)
class CrossingCandidate:
    omega: float
    lambda0: float
    residual_re: float
    residual_im: float
    direction: float


def _dQ_ds(s: complex, lam: float) -> complex:
    return 1.0 + lam / (1 - lam) * np.exp(-s) - np.exp(-lam * s) / (1 - lam)


def _scaled_parts(s: complex, lam: float) -> tuple[complex, complex]:
    """∂_s and ∂_λ of λ(1-λ)Q(s, λ)."""
    es, els = np.exp(-s), np.exp(-lam * s)
    d_s = lam * (1 - lam) + lam**2 * es - lam * els
    d_lam = (1 - 2 * lam) * s + 2 * lam - 2 * lam * es - s * els
    return complex(d_s), complex(d_lam)


def branch_derivative(s: complex, lam: float) -> complex:
    """ds/dλ along a branch of roots of Q(·, λ), by implicit differentiation."""
    if not 0.0 < lam < 1.0:
        raise InvalidSystemError(f"lambda must lie in (0, 1), got {lam}")
    d_s, d_lam = _scaled_parts(complex(s), lam)
    if abs(d_s) < 1e-14 * (1 + abs(d_lam)):
        raise SingularDerivativeError("∂Q/∂s vanishes on the branch", denominator=abs(d_s), s=str(s), lam=lam)
    return -d_lam / d_s


def correct_root(s: complex, lam: float, max_iter: int = 50) -> complex:
    """Newton correction of s onto a root of Q(·, λ)."""
    z = complex(s)
    for _ in range(max_iter):
        f = normalized_Q(z, lam)
        df = _dQ_ds(z, lam)
        if df == 0:
            raise SingularDerivativeError("∂Q/∂s vanishes in corrector", s=str(z), lam=lam)
        step = f / df
        z -= step
        if abs(step) < 1e-14 * (1 + abs(z)):
            break
    if abs(normalized_Q(z, lam)) > BRANCH_RESIDUAL:
        raise BranchError("corrector failed to converge", s=str(z), lam=lam)
    return z


def continue_branch(start: BranchPoint, lambda_end: float, steps: int | None = None) -> list[BranchPoint]:
    """Follow a nontrivial root branch from start.lam to lambda_end.

    RK4 predictor on ds/dλ, Newton corrector on Q(·, λ) after each step.
    The default is 1000 steps per unit of λ.
    """
    if abs(start.s) < 1e-8:
        raise InvalidSystemError("the trivial branch s ≡ 0 cannot be continued")
    if not (0.0 < lambda_end < 1.0):
        raise InvalidSystemError("lambda_end must lie in (0, 1)")
    if steps is None:
        steps = max(1, int(math.ceil(1000 * abs(lambda_end - start.lam))))
    if steps < 1:
        raise InvalidSystemError("steps must be positive")
    s = correct_root(start.s, start.lam)
    lam = start.lam
    h = (lambda_end - lam) / steps
    path = [BranchPoint(lam, s, abs(normalized_Q(s, lam)))]
    for i in range(steps):
        k1 = branch_derivative(s, lam)
        k2 = branch_derivative(s + 0.5 * h * k1, lam + 0.5 * h)
        k3 = branch_derivative(s + 0.5 * h * k2, lam + 0.5 * h)
        k4 = branch_derivative(s + h * k3, lam + h)
        predicted = s + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6
        lam = start.lam + (i + 1) * h
        s = correct_root(predicted, lam)
        if abs(s - predicted) > 0.1 * (1 + abs(s)):
            raise BranchError("corrector jumped to another branch", lam=lam, s=str(s))
        if abs(s) < 1e-8:
            raise BranchError("branch collapsed onto the triple root", lam=lam)
        path.append(BranchPoint(lam, s, abs(normalized_Q(s, lam))))
    return path


def crossing_lambda(omega: float) -> float:
    """λ at which iω could be a root of Q(·, λ) (from |e^{-iλω}| = 1)."""
    if omega == 0:
        raise InvalidSystemError("omega must be nonzero")
    c, sn = math.cos(omega), math.sin(omega)
    return (omega**2 + 2 * (c - 1)) / ((omega - sn) ** 2 + (1 - c) ** 2)


def crossing_residuals(omega: float, lam: float) -> tuple[float, float]:
    """Real and imaginary parts of λ(1-λ)Q(iω, λ) up to sign; both vanish at a crossing."""
    r1 = math.cos(lam * omega) - lam**2 * math.cos(omega) + lam**2 - 1
    r2 = math.sin(lam * omega) - lam**2 * math.sin(omega) + lam**2 * omega - lam * omega
    return r1, r2


def crossing_direction(omega: float, lambda0: float) -> float:
    """Numerator of Re s'(λ0) at s = iω: 2λ0³(1-λ0)(ω cos(ω/2) - 2 sin(ω/2))²."""
    return 2 * lambda0**3 * (1 - lambda0) * (omega * math.cos(omega / 2) - 2 * math.sin(omega / 2)) ** 2


def crossing_candidate(omega: float) -> CrossingCandidate:
    lam = crossing_lambda(omega)
    r1, r2 = crossing_residuals(omega, lam)
    return CrossingCandidate(
        omega=omega, lambda0=lam, residual_re=r1, residual_im=r2, direction=crossing_direction(omega, lam)
    )


def scan_crossings(omega_max: float = 200.0, samples: int = 10_000, threshold: float = 1e-8) -> list[CrossingCandidate]:
    """Candidates with λ0 in (0, 1) at which both parts of Q(iω, λ0) are below threshold.

    The residual pair describes λ(1-λ)Q, which vanishes identically at λ = 1;
    dividing by λ0(1-λ0) keeps candidates with λ0 close to 1 from passing
    trivially. For the normalized MID family the list should be empty.
    """
    found = []
    for omega in np.linspace(omega_max / samples, omega_max, samples):
        cand = crossing_candidate(float(omega))
        if not 0.0 < cand.lambda0 < 1.0:
            continue
        scale = cand.lambda0 * (1.0 - cand.lambda0)
        if abs(cand.residual_re) < threshold * scale and abs(cand.residual_im) < threshold * scale:
            found.append(cand)
    return found


def limit_quasipolynomial(s):
    """s - 2 + e^{-s}(s + 2), the λ → 1 limit of Q(·, λ)."""
    s = np.asarray(s, dtype=complex)
    out = s - 2 + np.exp(-s) * (s + 2)
    return out if out.ndim else complex(out)


def _tan_fixed_points(count: int) -> list[float]:
    # sin x - x cos x has derivative x sin x, monotone on (kπ, (k+1)π)
    f = lambda x: math.sin(x) - x * math.cos(x)
    return [brentq(f, k * math.pi, (k + 1) * math.pi, xtol=1e-15, rtol=4 * np.finfo(float).eps) for k in range(1, count + 1)]


def limit_roots(count: int) -> list[complex]:
    """First ``count`` nontrivial roots 2ζi (Im > 0) of the limit function, tan ζ = ζ."""
    if count < 1:
        raise InvalidSystemError("count must be positive")
    return [complex(0.0, 2 * z) for z in _tan_fixed_points(count)]
