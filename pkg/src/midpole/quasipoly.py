"""Quasipolynomials  Δ(s) = Σ_j p_j(s) exp(-s τ_j).

The canonical closed-loop form used throughout the package is

    Δ(s) = s + a0 - Σ_i a_i exp(-s τ_i)

i.e. the delayed gains enter with a minus sign (feedback convention).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidSystemError

__all__ = [
    "Polynomial",
    "Quasipolynomial",
    "HorizontalStrip",
    "evaluate",
    "derivative",
    "degree",
    "polya_szego_bounds",
    "exclusion_strip_halfwidth",
    "from_two_delay_system",
    "from_feedback",
]


def _trim(coeffs: Iterable[float]) -> tuple[float, ...]:
    c = [float(x) for x in coeffs]
    while c and c[-1] == 0.0:
        c.pop()
    return tuple(c)


@dataclass(frozen=True)
class Polynomial:
    """Real polynomial, ``coefficients[k]`` multiplies s**k."""

    coefficients: tuple[float, ...]

    def __init__(self, coefficients: Iterable[float]):
        object.__setattr__(self, "coefficients", _trim(coefficients))

    @property
    def degree(self) -> int:
        # -1 for the zero polynomial
        return len(self.coefficients) - 1

    def is_zero(self) -> bool:
        return not self.coefficients

    def __call__(self, s):
        """Horner evaluation; accepts scalars or numpy arrays."""
        s = np.asarray(s)
        acc = np.zeros_like(s, dtype=complex if np.iscomplexobj(s) else float)
        for c in reversed(self.coefficients):
            acc = acc * s + c
        return acc if acc.ndim else acc[()]

    def deriv(self) -> "Polynomial":
        return Polynomial(k * c for k, c in enumerate(self.coefficients) if k > 0)

    def __add__(self, other: "Polynomial") -> "Polynomial":
        a, b = self.coefficients, other.coefficients
        n = max(len(a), len(b))
        return Polynomial(
            (a[k] if k < len(a) else 0.0) + (b[k] if k < len(b) else 0.0) for k in range(n)
        )

    def scale(self, factor: float) -> "Polynomial":
        return Polynomial(factor * c for c in self.coefficients)


@dataclass(frozen=True)
class HorizontalStrip:
    im_low: float
    im_high: float

    def __post_init__(self):
        if not self.im_low <= self.im_high:
            raise InvalidSystemError(f"strip needs im_low <= im_high, got {self.im_low} > {self.im_high}")

    @property
    def width(self) -> float:
        return self.im_high - self.im_low


@dataclass(frozen=True)
class Quasipolynomial:
    """Sum of (polynomial, delay) terms with strictly increasing delays.

    Zero polynomials are never stored. The empty term list is the zero
    function, which only arises from differentiating a pure constant.
    """

    terms: tuple[tuple[Polynomial, float], ...]

    def __init__(self, terms: Iterable[tuple[Polynomial | Sequence[float], float]]):
        cleaned = []
        for poly, delay in terms:
            if not isinstance(poly, Polynomial):
                poly = Polynomial(poly)
            delay = float(delay)
            if not math.isfinite(delay) or delay < 0:
                raise InvalidSystemError(f"delays must be finite and nonnegative, got {delay}")
            if poly.is_zero():
                continue
            cleaned.append((poly, delay))
        for (_, d0), (_, d1) in zip(cleaned, cleaned[1:]):
            if not d1 > d0:
                raise InvalidSystemError("delays must be strictly increasing")
        object.__setattr__(self, "terms", tuple(cleaned))

    @classmethod
    def from_terms(cls, terms: Iterable[tuple[Sequence[float], float]]) -> "Quasipolynomial":
        """Build from unordered terms, summing polynomials that share a delay."""
        merged: dict[float, Polynomial] = {}
        for coeffs, delay in terms:
            p = coeffs if isinstance(coeffs, Polynomial) else Polynomial(coeffs)
            d = float(delay)
            merged[d] = merged[d] + p if d in merged else p
        return cls(sorted(((p, d) for d, p in merged.items()), key=lambda t: t[1]))

    @property
    def delays(self) -> tuple[float, ...]:
        return tuple(d for _, d in self.terms)

    @property
    def polynomials(self) -> tuple[Polynomial, ...]:
        return tuple(p for p, _ in self.terms)

    def __call__(self, s):
        return evaluate(self, s)

    def derivative(self, order: int = 1) -> "Quasipolynomial":
        return derivative(self, order)

    @property
    def degree(self) -> int:
        return degree(self)

    def term_magnitude(self, s):
        """Σ_j |p_j(s)| |exp(-s τ_j)|, the natural scale for rounding error in Δ(s)."""
        s = np.asarray(s, dtype=complex)
        total = np.zeros(s.shape)
        for p, tau in self.terms:
            total = total + np.abs(p(s)) * np.exp(-s.real * tau)
        return total if total.ndim else float(total)

    # wire format: {"terms": [{"coeffs": [...], "delay": t}, ...]}
    def to_dict(self) -> dict:
        return {"terms": [{"coeffs": list(p.coefficients), "delay": d} for p, d in self.terms]}

    @classmethod
    def from_dict(cls, data: dict) -> "Quasipolynomial":
        try:
            terms = [(t["coeffs"], t["delay"]) for t in data["terms"]]
        except (KeyError, TypeError) as exc:
            raise InvalidSystemError(f"malformed quasipolynomial JSON: {exc}") from exc
        return cls(terms)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Quasipolynomial":
        return cls.from_dict(json.loads(text))


def evaluate(qp: Quasipolynomial, s):
    """Σ_j p_j(s) exp(-s τ_j); vectorized over ``s``."""
    s = np.asarray(s, dtype=complex)
    out = np.zeros(s.shape, dtype=complex)
    for p, tau in qp.terms:
        out = out + (p(s) * np.exp(-s * tau) if tau else p(s))
    return out if out.ndim else complex(out)


def derivative(qp: Quasipolynomial, order: int = 1) -> Quasipolynomial:
    """order-th derivative; each term (p, τ) maps to (p' - τ p, τ) per differentiation."""
    if order < 0:
        raise InvalidSystemError("derivative order must be nonnegative")
    terms = list(qp.terms)
    for _ in range(order):
        terms = [(p.deriv() + p.scale(-tau), tau) for p, tau in terms]
        terms = [(p, tau) for p, tau in terms if not p.is_zero()]
    return Quasipolynomial(terms)


def degree(qp: Quasipolynomial) -> int:
    """D = N + Σ d_j, with N + 1 the number of terms (-1 for the zero function)."""
    if not qp.terms:
        return -1
    return len(qp.terms) - 1 + sum(p.degree for p, _ in qp.terms)


def delay_spread(qp: Quasipolynomial) -> float:
    d = qp.delays
    return max(d) - min(d) if d else 0.0


def polya_szego_bounds(qp: Quasipolynomial, strip: HorizontalStrip) -> tuple[int, int]:
    """Integer bounds on the number of roots (with multiplicity) in the strip."""
    D = degree(qp)
    centre = delay_spread(qp) * strip.width / (2 * math.pi)
    return math.ceil(centre - D), math.floor(centre + D)


def exclusion_strip_halfwidth(qp: Quasipolynomial) -> float:
    """2π / r_δ: a root of multiplicity D is alone in |Im s - Im s0| < 2π/r_δ."""
    spread = delay_spread(qp)
    if spread <= 0:
        raise InvalidSystemError("no exclusion strip: quasipolynomial has a single exponential")
    return 2 * math.pi / spread


def from_feedback(
    a0: float,
    gains: Sequence[float],
    delays: Sequence[float],
    plus_convention: bool = False,
) -> Quasipolynomial:
    """Δ(s) = s + a0 - Σ gains[i] exp(-s delays[i]).

    With ``plus_convention`` the gains are read as coefficients of
    Δ(s) = s + a0 + Σ gains[i] exp(-s delays[i]) and negated on the way in.
    """
    if len(gains) != len(delays):
        raise InvalidSystemError("gains and delays must have the same length")
    if any(not (t > 0) for t in delays):
        raise InvalidSystemError("delays must be positive")
    if len(set(delays)) != len(delays):
        raise InvalidSystemError("delays must be pairwise distinct")
    sign = 1.0 if plus_convention else -1.0
    terms = [((a0, 1.0), 0.0)] + [((sign * g,), t) for g, t in zip(gains, delays)]
    return Quasipolynomial.from_terms(terms)


def from_two_delay_system(
    a0: float, a1: float, a2: float, tau1: float, tau2: float, plus_convention: bool = False
) -> Quasipolynomial:
    """Δ(s) = s + a0 - a1 exp(-s τ1) - a2 exp(-s τ2)."""
    return from_feedback(a0, (a1, a2), (tau1, tau2), plus_convention=plus_convention)
