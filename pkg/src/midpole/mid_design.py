"""Closed-form MID controller synthesis for Δ(s) = s + a0 - Σ a_i exp(-s τ_i).

A real root of maximal multiplicity N+1 (N delays) is placed by solving a
linear interpolation problem in the gains; for one and two delays the
solution is explicit.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidSystemError, NumericalError
from .quasipoly import (
    HorizontalStrip,
    Quasipolynomial,
    degree,
    derivative,
    evaluate,
    from_feedback,
    from_two_delay_system,
    polya_szego_bounds,
)

__all__ = [
    "OneDelayDesign",
    "TwoDelayDesign",
    "NormalizedSystem",
    "MultiplicityReport",
    "design_one_delay",
    "design_two_delay",
    "normalize",
    "normalized_Q",
    "normalized_quasipolynomial",
    "solve_multiplicity_system",
    "maximal_multiplicity_coefficients",
    "verify_multiplicity",
]


@dataclass(frozen=True)
class OneDelayDesign:
    a0: float
    tau1: float
    s_star: float
    a1: float

    def quasipolynomial(self) -> Quasipolynomial:
        return from_feedback(self.a0, [self.a1], [self.tau1])


@dataclass(frozen=True)
class TwoDelayDesign:
    a0: float
    tau1: float
    tau2: float
    s0: float
    a1: float
    a2: float

    def quasipolynomial(self) -> Quasipolynomial:
        return from_two_delay_system(self.a0, self.a1, self.a2, self.tau1, self.tau2)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "TwoDelayDesign":
        try:
            return cls(**{k: float(data[k]) for k in ("a0", "tau1", "tau2", "s0", "a1", "a2")})
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidSystemError(f"malformed design JSON: {exc}") from exc


@dataclass(frozen=True)
class NormalizedSystem:
    """Q(s, λ) = s + a0_t + a1_t exp(-λ s) + a2_t exp(-s), with λ = τ1/τ2."""

    lam: float
    a0_t: float
    a1_t: float
    a2_t: float

    def quasipolynomial(self) -> Quasipolynomial:
        return Quasipolynomial([((self.a0_t, 1.0), 0.0), ((self.a1_t,), self.lam), ((self.a2_t,), 1.0)])


def design_one_delay(a0: float, tau1: float) -> OneDelayDesign:
    """Double root s* = -a0 - 1/τ1 with a1 = -exp(-1 - τ1 a0)/τ1."""
    if not tau1 > 0:
        raise InvalidSystemError(f"delay must be positive, got {tau1}")
    return OneDelayDesign(
        a0=a0, tau1=tau1, s_star=-a0 - 1.0 / tau1, a1=-math.exp(-1.0 - tau1 * a0) / tau1
    )


def design_two_delay(a0: float, tau1: float, tau2: float) -> TwoDelayDesign:
    """Triple root s0 = -a0 - 1/τ1 - 1/τ2 with the gains that make it maximal.

    Delays are reordered so that τ1 < τ2.
    """
    if not (tau1 > 0 and tau2 > 0):
        raise InvalidSystemError("delays must be positive")
    if tau1 == tau2:
        raise InvalidSystemError("delays must be distinct")
    if tau1 > tau2:
        tau1, tau2 = tau2, tau1
    s0 = -a0 - 1.0 / tau1 - 1.0 / tau2
    gap = tau2 - tau1
    a1 = -tau2 * math.exp(s0 * tau1) / (tau1 * gap)
    a2 = tau1 * math.exp(s0 * tau2) / (tau2 * gap)
    return TwoDelayDesign(a0=a0, tau1=tau1, tau2=tau2, s0=s0, a1=a1, a2=a2)


def normalize(d: TwoDelayDesign) -> NormalizedSystem:
    """Shift s0 to the origin and scale the largest delay to 1 (s ↦ τ2 (s - s0))."""
    lam = d.tau1 / d.tau2
    return NormalizedSystem(
        lam=lam,
        a0_t=(d.s0 + d.a0) * d.tau2,
        a1_t=-d.a1 * d.tau2 * math.exp(-d.s0 * d.tau1),
        a2_t=-d.a2 * d.tau2 * math.exp(-d.s0 * d.tau2),
    )


def _check_lambda(lam: float) -> None:
    if not 0.0 < lam < 1.0:
        raise InvalidSystemError(f"lambda must lie in (0, 1), got {lam}")


def normalized_Q(s, lam: float):
    """s - (λ+1)/λ - λ/(1-λ) exp(-s) + exp(-λ s)/(λ(1-λ)); triple root at 0."""
    _check_lambda(lam)
    s = np.asarray(s, dtype=complex)
    out = s - (lam + 1) / lam - lam / (1 - lam) * np.exp(-s) + np.exp(-lam * s) / (lam * (1 - lam))
    return out if out.ndim else complex(out)


def normalized_quasipolynomial(lam: float) -> Quasipolynomial:
    _check_lambda(lam)
    return NormalizedSystem(
        lam=lam, a0_t=-(lam + 1) / lam, a1_t=1 / (lam * (1 - lam)), a2_t=-lam / (1 - lam)
    ).quasipolynomial()


def _multiplicity_matrix(delays: np.ndarray, s0: float) -> np.ndarray:
    """Row k holds the coefficient of a_i in Δ^(k)(s0), for k = 0..N."""
    n = delays.size
    k = np.arange(n + 1)[:, None]
    return -((-delays[None, :]) ** k) * np.exp(-s0 * delays[None, :])


def _rhs(a0: float, s0: float, n: int) -> np.ndarray:
    # Δ^(k)(s0) = [s0 + a0, 1, 0, ...]_k + Σ_i (row k)_i a_i
    b = np.zeros(n + 1)
    b[0] = -(s0 + a0)
    if n >= 1:
        b[1] = -1.0
    return b


def _check_delays(delays: Sequence[float]) -> np.ndarray:
    d = np.asarray(delays, dtype=float)
    if d.size == 0:
        raise InvalidSystemError("at least one delay is required")
    if np.any(d <= 0):
        raise InvalidSystemError("delays must be positive")
    if np.unique(d).size != d.size:
        raise InvalidSystemError("delays must be pairwise distinct")
    return d


def solve_multiplicity_system(
    a0: float, delays: Sequence[float], s0: float, residual_gate: float = 1e-9
) -> np.ndarray:
    """Gains making s0 a root of multiplicity N+1 of s + a0 - Σ a_i exp(-s τ_i).

    The N+1 conditions Δ^(k)(s0) = 0, k = 0..N, are solved for the N gains
    by least squares; an inconsistent (a0, s0) pair leaves a residual above
    ``residual_gate`` and is rejected.
    """
    d = _check_delays(delays)
    A = _multiplicity_matrix(d, s0)
    b = _rhs(a0, s0, d.size)
    gains, *_ = np.linalg.lstsq(A, b, rcond=None)
    if np.linalg.matrix_rank(A) < d.size:
        raise NumericalError("singular multiplicity system", delays=list(d))
    residual = float(np.linalg.norm(A @ gains - b))
    if residual > residual_gate:
        raise InvalidSystemError(
            f"s0={s0} is not reachable as a root of multiplicity {d.size + 1} with a0={a0} "
            f"(residual {residual:.3e})"
        )
    return gains


def maximal_multiplicity_coefficients(delays: Sequence[float], s0: float) -> tuple[float, np.ndarray]:
    """(a0, gains) making s0 a root of multiplicity N+1, with a0 left free."""
    d = _check_delays(delays)
    A = _multiplicity_matrix(d, s0)
    # unknowns (a0, a_1..a_N): a0 enters row 0 only
    M = np.hstack([np.eye(d.size + 1)[:, :1], A])
    b = _rhs(0.0, s0, d.size)
    try:
        x = np.linalg.solve(M, b)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("singular multiplicity system", delays=list(d)) from exc
    return float(x[0]), x[1:]


@dataclass(frozen=True)
class MultiplicityReport:
    s0: complex
    multiplicity: int
    derivative_moduli: tuple[float, ...]  # |Δ^(k)(s0)| for k = 0..m
    tolerances: tuple[float, ...]
    passed: bool

    def to_dict(self) -> dict:
        return {
            "s0": [self.s0.real, self.s0.imag],
            "multiplicity": self.multiplicity,
            "derivative_moduli": list(self.derivative_moduli),
            "tolerances": list(self.tolerances),
            "passed": self.passed,
        }


def verify_multiplicity(
    qp: Quasipolynomial, s0: complex, m: int, tol: float = 1e-9
) -> MultiplicityReport:
    """Check Δ^(k)(s0) ≈ 0 for k < m and Δ^(m)(s0) ≠ 0.

    Orders beyond the Pólya-Szegő limit (the degree) are rejected up front.
    """
    D = degree(qp)
    _, upper = polya_szego_bounds(qp, HorizontalStrip(0.0, 0.0))
    if m < 1 or m > D or m > upper:
        raise InvalidSystemError(f"multiplicity {m} exceeds the maximal multiplicity {D}")
    s0 = complex(s0)
    moduli, tols = [], []
    for k in range(m + 1):
        moduli.append(abs(evaluate(derivative(qp, k), s0)))
        tols.append(tol * (1.0 + abs(s0) ** k))
    passed = all(moduli[k] <= tols[k] for k in range(m)) and moduli[m] > tols[m]
    return MultiplicityReport(
        s0=s0, multiplicity=m, derivative_moduli=tuple(moduli), tolerances=tuple(tols), passed=passed
    )
