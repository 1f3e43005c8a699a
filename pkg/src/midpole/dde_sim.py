"""Method-of-steps integration of scalar two-delay equations.

The stepper is classical RK4 on a uniform grid. Delayed values are read from
cubic Hermite interpolation of the already computed samples and their
right-hand-side derivatives, which keeps the scheme fourth order once the
step is at most a tenth of the smallest delay.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import InsufficientDataError, InvalidSystemError
from .mid_design import design_two_delay
from .quasipoly import Quasipolynomial, from_two_delay_system

log = logging.getLogger(__name__)

__all__ = [
    "LinearTwoDelaySystem",
    "PlateletModel",
    "PlateletFeedback",
    "HistoryFunction",
    "Trajectory",
    "hill_g",
    "hill_g_prime",
    "equilibrium",
    "design_platelet_feedback",
    "linearize_platelet",
    "closed_loop_linearization",
    "simulate_linear",
    "simulate_platelet",
    "estimate_decay_rate",
    "REFERENCE_PLATELET_MODEL",
]


@dataclass(frozen=True)
class LinearTwoDelaySystem:
    """y'(t) = -a0 y(t) + a1 y(t - τ1) + a2 y(t - τ2)."""

    a0: float
    a1: float
    a2: float
    tau1: float
    tau2: float

    def __post_init__(self):
        if not (0 < self.tau1 < self.tau2):
            raise InvalidSystemError(f"need 0 < tau1 < tau2, got {self.tau1}, {self.tau2}")

    def quasipolynomial(self) -> Quasipolynomial:
        return from_two_delay_system(self.a0, self.a1, self.a2, self.tau1, self.tau2)


@dataclass(frozen=True)
class PlateletModel:
    n: float
    theta: float
    gamma: float
    g0: float
    tau1: float
    T: float

    def __post_init__(self):
        for name in ("n", "theta", "gamma", "g0", "tau1", "T"):
            if not getattr(self, name) > 0:
                raise InvalidSystemError(f"platelet parameter {name} must be positive")

    @property
    def tau2(self) -> float:
        return self.tau1 + self.T

    @property
    def survival(self) -> float:
        """e^{-γT}, the fraction of mature platelets reaching the age of death."""
        return math.exp(-self.gamma * self.T)


# maturation delay 9 and lifespan 10, so the age of death is 19
REFERENCE_PLATELET_MODEL = PlateletModel(n=2.2, theta=0.04, gamma=3.0, g0=4.0, tau1=9.0, T=10.0)


@dataclass(frozen=True)
class PlateletFeedback:
    """Feedback u = u0 + α1 y(t-τ1) + α2 y(t-τ2).

    ``a1`` and ``a2`` are the delayed coefficients of the closed-loop
    linearization. They equal α1 + g'(y*) and α2 - g'(y*)e^{-γT}, but the
    second difference cancels about fifteen digits and cannot be recovered
    from the rounded α2, so they are kept from the design step.
    """

    s0: float
    alpha1: float
    alpha2: float
    u0: float
    a1: float = math.nan
    a2: float = math.nan


class HistoryFunction:
    """Initial data on [-tau_max, 0], from a callable or from samples."""

    def __init__(self, func: Callable[[float], float], tau_max: float):
        self.func = func
        self.tau_max = float(tau_max)

    def __call__(self, t: float) -> float:
        return float(self.func(t))

    @classmethod
    def constant(cls, value: float, tau_max: float) -> "HistoryFunction":
        return cls(lambda t: value, tau_max)

    @classmethod
    def from_samples(cls, times: Sequence[float], values: Sequence[float]) -> "HistoryFunction":
        times = np.asarray(times, dtype=float)
        spline = CubicSpline(times, np.asarray(values, dtype=float))
        return cls(lambda t: float(spline(t)), -float(times.min()))


@dataclass
class Trajectory:
    times: np.ndarray
    values: np.ndarray
    dt: float
    left_domain: bool = False
    notes: list[str] = field(default_factory=list)
    # values - reference at full relative precision, when integrated that way
    reference: float = 0.0
    deviations: np.ndarray | None = None

    def deviation_from(self, target: float) -> np.ndarray:
        if self.deviations is not None and target == self.reference:
            return np.asarray(self.deviations, dtype=float)
        return np.asarray(self.values, dtype=float) - target

    def to_csv(self, stream=None) -> str:
        buf = stream if stream is not None else io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "y"])
        for t, y in zip(self.times, self.values):
            writer.writerow([repr(float(t)), repr(float(y))])
        return buf.getvalue() if stream is None else ""


def hill_g(model: PlateletModel, y: float) -> float:
    """g(y) = g0 θ^n y / (θ^n + y^n)."""
    if y < 0:
        raise InvalidSystemError("g is defined for y >= 0")
    tn = model.theta**model.n
    return model.g0 * tn * y / (tn + y**model.n)


def hill_g_prime(model: PlateletModel, y: float) -> float:
    if y <= 0:
        raise InvalidSystemError("g' is evaluated for y > 0")
    tn = model.theta**model.n
    yn = y**model.n
    return model.g0 * tn * (tn + (1 - model.n) * yn) / (tn + yn) ** 2


def equilibrium(model: PlateletModel) -> float:
    """The nonzero constant equilibrium of the uncontrolled model."""
    threshold = model.gamma / (1 - model.survival)
    if not model.g0 > threshold:
        raise InvalidSystemError(
            f"no nonzero equilibrium: g0={model.g0} must exceed γ/(1-e^(-γT))={threshold}"
        )
    return model.theta * (model.g0 * (1 - model.survival) / model.gamma - 1) ** (1 / model.n)


def design_platelet_feedback(model: PlateletModel, y_star: float) -> PlateletFeedback:
    """Feedback u = u0 + α1 y(t-τ1) + α2 y(t-τ2) placing a triple root of the linearization."""
    if not y_star > 0:
        raise InvalidSystemError("target concentration must be positive")
    gp = hill_g_prime(model, y_star)
    mid = design_two_delay(model.gamma, model.tau1, model.tau2)
    alpha1 = mid.a1 - gp
    alpha2 = mid.a2 + gp * model.survival
    u0 = (model.gamma - alpha1 - alpha2) * y_star - (1 - model.survival) * hill_g(model, y_star)
    return PlateletFeedback(s0=mid.s0, alpha1=alpha1, alpha2=alpha2, u0=u0, a1=mid.a1, a2=mid.a2)


def closed_loop_linearization(model: PlateletModel, feedback: PlateletFeedback) -> LinearTwoDelaySystem:
    """Linearization about the design target with the g' contributions cancelled exactly."""
    if math.isnan(feedback.a1) or math.isnan(feedback.a2):
        raise InvalidSystemError("feedback does not carry closed-loop gains; use linearize_platelet")
    return LinearTwoDelaySystem(
        a0=model.gamma, a1=feedback.a1, a2=feedback.a2, tau1=model.tau1, tau2=model.tau2
    )


def linearize_platelet(
    model: PlateletModel, y_star: float, alpha1: float, alpha2: float
) -> LinearTwoDelaySystem:
    """w' = -γ w + (α1 + g'(y*)) w(t-τ1) + (α2 - g'(y*) e^{-γT}) w(t-τ2)."""
    if not y_star > 0:
        raise InvalidSystemError("target concentration must be positive")
    gp = hill_g_prime(model, y_star)
    return LinearTwoDelaySystem(
        a0=model.gamma,
        a1=alpha1 + gp,
        a2=alpha2 - gp * model.survival,
        tau1=model.tau1,
        tau2=model.tau2,
    )


def _aligned_step(dt: float, tau1: float, tau2: float) -> float:
    """Shrink dt so that both delays are whole multiples of it, when their ratio is rational."""
    ratio = Fraction(tau2 / tau1).limit_denominator(1000)
    if abs(float(ratio) - tau2 / tau1) > 1e-9:
        return dt
    base = tau1 / ratio.denominator
    return base / math.ceil(base / dt - 1e-12)


def _integrate(
    rhs: Callable[[float, float, float, float], float],
    history: HistoryFunction,
    tau1: float,
    tau2: float,
    t_end: float,
    dt: float,
) -> tuple[np.ndarray, np.ndarray, float]:
    if not t_end > 0:
        raise InvalidSystemError("t_end must be positive")
    if not 0 < dt <= tau1 / 10 * (1 + 1e-12):
        raise InvalidSystemError(f"dt={dt} too large; need dt <= tau1/10 = {tau1 / 10}")
    if history.tau_max < tau2 * (1 - 1e-12):
        raise InvalidSystemError("history does not cover the largest delay")
    dt = _aligned_step(dt, tau1, tau2)
    n = int(math.ceil(t_end / dt - 1e-9))
    y = np.empty(n + 1)
    f = np.empty(n + 1)

    def past(s: float) -> float:
        if s <= 0.0:
            return history(s)
        k = int(s / dt)
        theta = s / dt - k
        if theta < 1e-12:
            return y[k]
        h00 = (1 + 2 * theta) * (1 - theta) ** 2
        h10 = theta * (1 - theta) ** 2
        h01 = theta**2 * (3 - 2 * theta)
        h11 = theta**2 * (theta - 1)
        return h00 * y[k] + h10 * dt * f[k] + h01 * y[k + 1] + h11 * dt * f[k + 1]

    def field_at(t: float, state: float) -> float:
        return rhs(t, state, past(t - tau1), past(t - tau2))

    y[0] = history(0.0)
    f[0] = field_at(0.0, y[0])
    for i in range(n):
        t = i * dt
        k1 = f[i]
        k2 = field_at(t + 0.5 * dt, y[i] + 0.5 * dt * k1)
        k3 = field_at(t + 0.5 * dt, y[i] + 0.5 * dt * k2)
        k4 = field_at(t + dt, y[i] + dt * k3)
        y[i + 1] = y[i] + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6
        f[i + 1] = field_at(t + dt, y[i + 1])
    return np.arange(n + 1) * dt, y, dt


def simulate_linear(
    sys: LinearTwoDelaySystem, history: HistoryFunction, t_end: float, dt: float
) -> Trajectory:
    a0, a1, a2 = sys.a0, sys.a1, sys.a2

    def rhs(t, y, y1, y2):
        return -a0 * y + a1 * y1 + a2 * y2

    times, values, step = _integrate(rhs, history, sys.tau1, sys.tau2, t_end, dt)
    return Trajectory(times=times, values=values, dt=step)


def _hill_increment(model: PlateletModel, base: float):
    """w ↦ g(base + w) - g(base), free of cancellation for small w."""
    tn, n, g0 = model.theta**model.n, model.n, model.g0
    bn = base**n
    g_base = g0 * tn * base / (tn + bn)

    def inc(w: float) -> float:
        a = base + w
        if a <= 0.0:
            return -g_base
        # a^(n-1) - b^(n-1) = b^(n-1) expm1((n-1) log1p(w/b))
        diff = base ** (n - 1) * math.expm1((n - 1) * math.log1p(w / base))
        an = a * base ** (n - 1) + a * diff
        return g0 * tn * (tn * w - a * base * diff) / ((tn + an) * (tn + bn))

    return inc


def simulate_platelet(
    model: PlateletModel,
    feedback: PlateletFeedback | tuple[float, float, float],
    history: HistoryFunction,
    t_end: float,
    dt: float,
    y_star: float | None = None,
    negative_tolerance: float = 1e-12,
) -> Trajectory:
    """y' = -γy + g(y(t-τ1)) - g(y(t-τ2))e^{-γT} + u0 + α1 y(t-τ1) + α2 y(t-τ2).

    With ``y_star`` the equation is integrated for w = y - y*, assuming u0
    makes y* an equilibrium; this keeps relative accuracy in w long after it
    drops below the rounding level of y. Negative delayed states are fed to
    g as 0 and the trajectory is flagged.
    """
    if isinstance(feedback, PlateletFeedback):
        u0, alpha1, alpha2 = feedback.u0, feedback.alpha1, feedback.alpha2
    else:
        u0, alpha1, alpha2 = feedback
    if history(0.0) < 0 or history(-model.tau2) < 0:
        raise InvalidSystemError("platelet history must be nonnegative")
    gamma, surv = model.gamma, model.survival
    flagged = []

    def note(v: float) -> None:
        if v < -negative_tolerance and not flagged:
            flagged.append(v)

    if y_star is None:
        tn, n_exp, g0 = model.theta**model.n, model.n, model.g0

        def g(v: float) -> float:
            if v < 0:
                note(v)
                return 0.0
            return g0 * tn * v / (tn + v**n_exp)

        def rhs(t, y, y1, y2):
            return -gamma * y + g(y1) - g(y2) * surv + u0 + alpha1 * y1 + alpha2 * y2

        hist = history
        reference = 0.0
    else:
        if not y_star > 0:
            raise InvalidSystemError("target concentration must be positive")
        inc = _hill_increment(model, y_star)

        def rhs(t, w, w1, w2):
            note(y_star + w1)
            note(y_star + w2)
            return -gamma * w + inc(w1) - inc(w2) * surv + alpha1 * w1 + alpha2 * w2

        hist = HistoryFunction(lambda t: history(t) - y_star, history.tau_max)
        reference = y_star

    times, values, step = _integrate(rhs, hist, model.tau1, model.tau2, t_end, dt)
    if y_star is None:
        traj = Trajectory(times=times, values=values, dt=step)
    else:
        traj = Trajectory(times=times, values=values + y_star, dt=step, reference=reference, deviations=values)
    if flagged or np.any(traj.values < -negative_tolerance):
        traj.left_domain = True
        traj.notes.append("state left the biological domain (y < 0); g was clamped at 0")
        log.warning("platelet trajectory left the domain y >= 0")
    return traj


def estimate_decay_rate(
    traj: Trajectory,
    target: float = 0.0,
    multiplicity: int = 1,
    method: str = "auto",
    window: tuple[float, float] | None = None,
) -> float:
    """Exponential rate of |y - target| by least squares on the last 60% of the data.

    With oscillating deviations the fit uses the local maxima; monotone decays
    are fitted pointwise. ``multiplicity`` m removes the t^(m-1) factor that a
    dominant root of multiplicity m puts in front of the exponential.
    ``window`` restricts the fit to a time interval instead of the last 60%.
    """
    if method not in ("auto", "extrema", "pointwise"):
        raise InvalidSystemError(f"unknown method {method!r}")
    if multiplicity < 1:
        raise InvalidSystemError("multiplicity must be positive")
    t = np.asarray(traj.times, dtype=float)
    dev = np.abs(traj.deviation_from(target))
    if traj.deviations is not None and target == traj.reference:
        floor = 1e-300
    else:
        # a nonzero target caps the absolute resolution of y - target
        floor = max(1e-300, 64 * np.finfo(float).eps * abs(target))
    # samples at the rounding floor carry no rate information
    below = np.nonzero(dev <= floor)[0]
    below = below[below > 0]
    cut = int(below[0]) if below.size else dev.size
    t, dev = t[:cut], dev[:cut]
    if window is not None:
        keep = (t >= window[0]) & (t <= window[1])
        t, dev = t[keep], dev[keep]
    else:
        start = int(0.4 * dev.size)
        t, dev = t[start:], dev[start:]
    if dev.size < 5:
        raise InsufficientDataError("too few samples above the rounding floor", samples=int(dev.size))
    interior = np.nonzero((dev[1:-1] >= dev[:-2]) & (dev[1:-1] > dev[2:]))[0] + 1
    if method == "extrema" or (method == "auto" and interior.size >= 5):
        if interior.size < 5:
            raise InsufficientDataError("fewer than 5 local extrema", extrema=int(interior.size))
        t, dev = t[interior], dev[interior]
    logs = np.log(np.maximum(dev, 1e-300))
    if multiplicity > 1:
        logs = logs - (multiplicity - 1) * np.log(np.maximum(t, 1e-300))
    slope, _ = np.polyfit(t, logs, 1)
    return float(slope)
