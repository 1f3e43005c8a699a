"""Spectral-abscissa minimization for the integrator y' = u under |gains|_1 ≤ bound.

Three feedback families are compared: u = a y, u = a y(t - τ) and the
two-delay law u = a1 y(t - τ1) + a2 y(t - τ2) with gains fixed by the MID
design. A grid probe around the MID gains gathers evidence on whether free
gains can do better.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize, minimize_scalar
from scipy.special import lambertw

from .errors import InvalidSystemError, NumericalError
from .mid_design import design_two_delay
from .quasipoly import from_feedback
from .rootfinding import Rectangle, find_roots, spectral_abscissa

__all__ = [
    "GainBudget",
    "OptimizationResult",
    "optimize_no_delay",
    "optimize_one_delay",
    "optimize_two_delay_mid",
    "conjecture_scan",
    "CERTIFICATION_TOLERANCE",
]

CERTIFICATION_TOLERANCE = 1e-6
CERTIFICATION_WINDOW = Rectangle(-30.0, 2.0, -200.0, 200.0)

Progress = Callable[[dict], None]


@dataclass(frozen=True)
class GainBudget:
    bound: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.bound) and self.bound > 0):
            raise InvalidSystemError(f"gain budget must be positive, got {self.bound}")


@dataclass
class OptimizationResult:
    family: str  # no_delay, one_delay, two_delay_mid or free_gains_scan
    parameters: dict[str, float]
    abscissa: float
    feasible: bool
    evaluations: int
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def optimize_no_delay(budget: GainBudget) -> OptimizationResult:
    """u = a y: the closed loop s - a has its only root at a, best at a = -bound."""
    a = -budget.bound
    qp = from_feedback(-a, [], [])
    if abs(qp(a)) > 0:
        raise NumericalError("closed-form root check failed", a=a)
    return OptimizationResult("no_delay", {"a": a}, a, True, 1)


def _one_delay_abscissa(a: float, tau: float) -> float:
    # s = a e^{-sτ}  ⇔  sτ e^{sτ} = aτ; the principal branch is rightmost for real aτ
    return float(lambertw(a * tau, 0).real) / tau


def optimize_one_delay(budget: GainBudget, verify: bool = True) -> OptimizationResult:
    """u = a y(t - τ): double root -1/τ with a = -e^{-1}/τ, best at τ = 1/(e·bound).

    With ``verify`` the closed form is re-derived numerically: the rightmost
    root at a = -bound is minimized over τ by a grid and golden-section search,
    and the returned design is certified by rootfinding.
    """
    b = budget.bound
    tau = 1.0 / (math.e * b)
    a = -math.exp(-1.0) / tau
    gamma = -1.0 / tau
    details: dict = {}
    evaluations = 1
    if verify:
        grid = np.linspace(0.05, 3.0, 60) / b
        values = [_one_delay_abscissa(-b, t) for t in grid]
        k = int(np.argmin(values))
        lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
        res = minimize_scalar(
            lambda t: _one_delay_abscissa(-b, t), bracket=(lo, grid[k], hi), method="golden",
            options={"xtol": 1e-10},
        )
        evaluations += grid.size + int(res.nfev)
        certified = spectral_abscissa(from_feedback(0.0, [a], [tau]))
        evaluations += 1
        details = {
            "golden_tau": float(res.x),
            "golden_abscissa": float(res.fun),
            "certified_abscissa": float(certified),
        }
        if abs(certified - gamma) > CERTIFICATION_TOLERANCE:
            raise NumericalError("one-delay optimum failed certification", certified=certified, expected=gamma)
    return OptimizationResult("one_delay", {"a": a, "tau": tau}, gamma, abs(a) <= b * (1 + 1e-12), evaluations, details)


def _mid_gains(tau1: float, tau2: float) -> tuple[float, float, float]:
    d = design_two_delay(0.0, tau1, tau2)
    return d.s0, d.a1, d.a2


def _violation(tau1: float, tau2: float, bound: float) -> float:
    _, a1, a2 = _mid_gains(tau1, tau2)
    return abs(a1) + abs(a2) - bound


def _project(tau1: float, tau2: float, bound: float) -> tuple[float, float]:
    """Scale (τ1, τ2) up by bisection until the budget holds; gains shrink with scale."""
    if _violation(tau1, tau2, bound) <= 0:
        return tau1, tau2
    lo, hi = 1.0, 2.0
    while _violation(hi * tau1, hi * tau2, bound) > 0:
        hi *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _violation(mid * tau1, mid * tau2, bound) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    return hi * tau1, hi * tau2


def optimize_two_delay_mid(budget: GainBudget, progress: Progress | None = None) -> OptimizationResult:
    """Minimize s0 = -1/τ1 - 1/τ2 over 0 < τ1 < τ2 with MID gains inside the budget."""
    b = budget.bound
    evaluations = 0
    # deterministic coarse grid over (0.05, 3]^2 (scaled by 1/bound), τ1 < τ2
    axis = np.linspace(0.05, 3.0, 60) / b
    best = None
    for t1 in axis:
        for t2 in axis:
            if not t2 > t1:
                continue
            evaluations += 1
            s0, a1, a2 = _mid_gains(float(t1), float(t2))
            feasible = abs(a1) + abs(a2) <= b
            if progress is not None:
                progress({"stage": "grid", "tau1": float(t1), "tau2": float(t2), "s0": s0, "feasible": feasible})
            if feasible and (best is None or (s0, t1, t2) < best):
                best = (s0, float(t1), float(t2))
    if best is None:
        raise NumericalError("no feasible grid point", bound=b)

    def objective(x: np.ndarray, weight: float) -> float:
        t1, t2 = float(x[0]), float(x[1])
        if not (0 < t1 < t2):
            return 1e6
        return -1.0 / t1 - 1.0 / t2 + weight * max(0.0, _violation(t1, t2, b)) ** 2

    x = np.array(best[1:])
    weight = 10.0
    for _ in range(80):
        res = minimize(
            objective, x, args=(weight,), method="Nelder-Mead",
            options={"xatol": 1e-13, "fatol": 1e-15, "maxiter": 20000, "maxfev": 40000},
        )
        evaluations += int(res.nfev)
        x = res.x
        residual = max(0.0, _violation(float(x[0]), float(x[1]), b))
        if progress is not None:
            progress({"stage": "penalty", "weight": weight, "tau1": float(x[0]), "tau2": float(x[1]), "residual": residual})
        if residual < 1e-9:
            break
        weight *= 2
    tau1, tau2 = _project(float(x[0]), float(x[1]), b)
    s0, a1, a2 = _mid_gains(tau1, tau2)
    feasible = abs(a1) + abs(a2) <= b + 1e-9

    roots = find_roots(from_feedback(0.0, [a1, a2], [tau1, tau2]), CERTIFICATION_WINDOW)
    evaluations += 1
    lead = roots.roots[0]
    if lead.multiplicity != 3 or abs(lead.value - s0) > CERTIFICATION_TOLERANCE or roots.abscissa > s0 + CERTIFICATION_TOLERANCE:
        raise NumericalError("two-delay optimum failed certification", abscissa=roots.abscissa, s0=s0)
    return OptimizationResult(
        "two_delay_mid",
        {"a1": a1, "a2": a2, "tau1": tau1, "tau2": tau2},
        s0,
        feasible,
        evaluations,
        {"certified_abscissa": roots.abscissa, "gain_norm": abs(a1) + abs(a2)},
    )


def conjecture_scan(
    tau1: float,
    tau2: float,
    grid_halfwidth: float,
    grid_points: int,
    progress: Progress | None = None,
) -> OptimizationResult:
    """Spectral abscissa over an (a1, a2) grid centred on the MID gains (a0 = 0).

    Reports whether any grid point beats the MID value s0 by more than the
    certification tolerance. The outcome is evidence, not a proof.
    """
    if not 0 < tau1 < tau2:
        raise InvalidSystemError("need 0 < tau1 < tau2")
    if grid_points < 3 and grid_halfwidth > 0:
        raise InvalidSystemError("grid_points must be at least 3")
    if grid_halfwidth < 0:
        raise InvalidSystemError("grid_halfwidth must be nonnegative")
    mid = design_two_delay(0.0, tau1, tau2)
    if grid_halfwidth == 0:
        offsets = np.zeros(1)
    else:
        # k/(n-1) form keeps the centre offset exactly 0 for odd n
        offsets = grid_halfwidth * (2.0 * np.arange(grid_points) / (grid_points - 1) - 1.0)
    best = None
    beating = []
    evaluations = 0
    for d1 in offsets:
        for d2 in offsets:
            a1 = mid.a1 + float(d1)
            a2 = mid.a2 + float(d2)
            if d1 == 0 and d2 == 0:
                # the MID point itself is known in closed form
                value = mid.s0
            else:
                value = spectral_abscissa(from_feedback(0.0, [a1, a2], [tau1, tau2]))
            evaluations += 1
            if progress is not None:
                progress({"stage": "scan", "a1": a1, "a2": a2, "abscissa": value})
            if best is None or (value, a1, a2) < best:
                best = (value, a1, a2)
            if value < mid.s0 - CERTIFICATION_TOLERANCE:
                beating.append({"a1": a1, "a2": a2, "abscissa": value})
    value, a1, a2 = best
    return OptimizationResult(
        "free_gains_scan",
        {"a1": a1, "a2": a2, "tau1": tau1, "tau2": tau2},
        value,
        True,
        evaluations,
        {
            "mid_s0": mid.s0,
            "mid_a1": mid.a1,
            "mid_a2": mid.a2,
            "counterexample_found": bool(beating),
            "beating_points": beating,
        },
    )
