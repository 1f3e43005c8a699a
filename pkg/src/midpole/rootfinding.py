"""Certified root location for quasipolynomials in a rectangle.

Roots are counted with the argument principle, (1/2πi)∮ Δ'/Δ ds, using a
vectorized adaptive Gauss-Kronrod (7/15) rule on the rectangle edges. The
same pass integrates s·Δ'/Δ, which gives the centroid of the enclosed roots
and a starting point for Newton's method. Regions are split until each holds
one root cluster; a cluster of multiplicity m is refined as a simple root of
Δ^(m-1) and certified by a shrinking-disk count.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from .errors import (
    BoundaryRootError,
    EmptySpectrumError,
    InvalidSystemError,
    QuadratureError,
    RefinementError,
)
from .quasipoly import Quasipolynomial, degree, derivative, evaluate

__all__ = [
    "Rectangle",
    "RootCertificate",
    "SpectrumResult",
    "Tolerances",
    "count_roots",
    "count_roots_in_disk",
    "find_roots",
    "spectral_abscissa",
    "default_window",
    "abscissa_upper_bound",
    "spectrum_to_csv",
]

# Gauss-Kronrod 7/15 on [-1, 1] (QUADPACK qk15)
_XGK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_KW = np.concatenate([_WGK[:-1], _WGK[::-1]])
_GW = np.zeros(15)
_GW[1:15:2] = np.concatenate([_WG[:-1], _WG[::-1]])


@dataclass(frozen=True)
class Tolerances:
    """Engineering tolerances for counting and refinement (none come from the literature)."""

    boundary_threshold: float = 1e-10
    max_dilations: int = 5
    dilation_factor: float = 1e-6
    count_tolerance: float = 1e-3  # target absolute quadrature error on the root count
    max_intervals: int = 200_000
    residual_tolerance: float = 1e-10
    newton_step_tolerance: float = 1e-13
    newton_max_iter: int = 100
    cert_radius: float = 1e-2
    cert_max_shrinks: int = 20
    max_depth: int = 60

    @classmethod
    def from_env(cls) -> "Tolerances":
        """Defaults, with the residual tolerance overridable via MIDPOLE_RESIDUAL_TOL."""
        tol = cls()
        env = os.environ.get("MIDPOLE_RESIDUAL_TOL")
        if env:
            tol = replace(tol, residual_tolerance=float(env))
        return tol


DEFAULT_TOLERANCES = Tolerances()


@dataclass(frozen=True)
class Rectangle:
    re_low: float
    re_high: float
    im_low: float
    im_high: float

    def __post_init__(self):
        if not (self.re_low < self.re_high and self.im_low < self.im_high):
            raise InvalidSystemError(f"degenerate rectangle {self}")

    @property
    def width(self) -> float:
        return self.re_high - self.re_low

    @property
    def height(self) -> float:
        return self.im_high - self.im_low

    @property
    def diameter(self) -> float:
        return math.hypot(self.width, self.height)

    @property
    def center(self) -> complex:
        return complex(0.5 * (self.re_low + self.re_high), 0.5 * (self.im_low + self.im_high))

    def corners(self) -> tuple[complex, complex, complex, complex]:
        """Counter-clockwise from the lower-left corner."""
        return (
            complex(self.re_low, self.im_low),
            complex(self.re_high, self.im_low),
            complex(self.re_high, self.im_high),
            complex(self.re_low, self.im_high),
        )

    def contains(self, z: complex, slack: float = 0.0) -> bool:
        return (
            self.re_low - slack <= z.real <= self.re_high + slack
            and self.im_low - slack <= z.imag <= self.im_high + slack
        )

    def shrink(self, amount: float) -> "Rectangle":
        return Rectangle(
            self.re_low + amount, self.re_high - amount, self.im_low + amount, self.im_high - amount
        )

    def split(self, fx: float = 0.5, fy: float = 0.5) -> list["Rectangle"]:
        """Quadrisect, or bisect the long side of elongated rectangles."""
        xm = self.re_low + fx * self.width
        ym = self.im_low + fy * self.height
        if self.height > 2 * self.width:
            return [
                Rectangle(self.re_low, self.re_high, self.im_low, ym),
                Rectangle(self.re_low, self.re_high, ym, self.im_high),
            ]
        if self.width > 2 * self.height:
            return [
                Rectangle(self.re_low, xm, self.im_low, self.im_high),
                Rectangle(xm, self.re_high, self.im_low, self.im_high),
            ]
        return [
            Rectangle(self.re_low, xm, self.im_low, ym),
            Rectangle(xm, self.re_high, self.im_low, ym),
            Rectangle(self.re_low, xm, ym, self.im_high),
            Rectangle(xm, self.re_high, ym, self.im_high),
        ]


@dataclass(frozen=True)
class RootCertificate:
    value: complex
    multiplicity: int
    residual: float
    cluster_radius: float


@dataclass(frozen=True)
class SpectrumResult:
    roots: tuple[RootCertificate, ...]
    region: Rectangle
    total_count: int

    @property
    def values(self) -> np.ndarray:
        return np.array([r.value for r in self.roots], dtype=complex)

    @property
    def abscissa(self) -> float:
        if not self.roots:
            raise EmptySpectrumError("no roots in window", region=str(self.region))
        return max(r.value.real for r in self.roots)


def abscissa_upper_bound(qp: Quasipolynomial) -> float | None:
    """|a0| + Σ|a_i| for Δ(s) = s + a0 - Σ a_i exp(-s τ_i); None for other shapes."""
    terms = qp.terms
    if not terms:
        return None
    p0, d0 = terms[0]
    rest = terms[1:]
    if d0 != 0.0:
        p0, rest = None, terms
    if p0 is not None and (p0.degree != 1 or p0.coefficients[1] != 1.0):
        return None
    if p0 is None:
        return None
    if any(p.degree != 0 for p, _ in rest):
        return None
    return abs(p0.coefficients[0]) + sum(abs(p.coefficients[0]) for p, _ in rest)


def default_window(qp: Quasipolynomial) -> Rectangle:
    """[-(B + 3/min τ), B + 1] × [-50, 50] with B the a-priori abscissa bound."""
    bound = abscissa_upper_bound(qp)
    if bound is None:
        raise InvalidSystemError("default window needs a feedback-form quasipolynomial; pass a rectangle")
    positive = [d for d in qp.delays if d > 0]
    reach = 3.0 / min(positive) if positive else 3.0
    return Rectangle(-(bound + reach), bound + 1.0, -50.0, 50.0)


class _LogDerivative:
    """Vectorized Δ'/Δ with the derivative built once."""

    def __init__(self, qp: Quasipolynomial):
        self.qp = qp
        self.dqp = derivative(qp, 1)
        positive = [d for d in qp.delays if d > 0]
        self.tau_max = max(positive) if positive else 0.0

    def values(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return evaluate(self.qp, z), evaluate(self.dqp, z)

    def with_noise(self, z: np.ndarray):
        """Δ, Δ' and the relative rounding error expected in Δ'/Δ."""
        f, df = self.values(z)
        with np.errstate(all="ignore"):
            noise = _EPS * (self.qp.term_magnitude(z) / np.abs(f) + self.dqp.term_magnitude(z) / np.abs(df))
        return f, df, noise


_EPS = np.finfo(float).eps


def _initial_pieces(length: float, tau_max: float) -> int:
    h0 = min(1.0, 2.0 / tau_max) if tau_max > 0 else 1.0
    return max(4, int(math.ceil(length / h0)))


def _contour_integrals(ld: _LogDerivative, vertices: list[complex], tol: Tolerances, count_tol: float):
    """Adaptive GK15 of Δ'/Δ and z·Δ'/Δ over the closed polygon.

    Returns (∮Δ'/Δ, ∮zΔ'/Δ, min scaled |Δ| seen on the boundary).
    """
    starts, ends = [], []
    for a, b in zip(vertices, vertices[1:] + vertices[:1]):
        n = _initial_pieces(abs(b - a), ld.tau_max)
        t = np.linspace(0.0, 1.0, n + 1)
        seg = a + (b - a) * t
        starts.append(seg[:-1])
        ends.append(seg[1:])
    za = np.concatenate(starts)
    zb = np.concatenate(ends)
    perimeter = float(np.sum(np.abs(zb - za)))
    # error budget in units of the integral (2π per root)
    budget = 2 * math.pi * count_tol

    total0 = 0j
    total1 = 0j
    min_ratio = math.inf
    n_done = 0
    while za.size:
        half = 0.5 * (zb - za)
        mid = 0.5 * (zb + za)
        z = mid[:, None] + half[:, None] * _NODES[None, :]
        f, df, noise = ld.with_noise(z)
        scale = tol.boundary_threshold * (1.0 + np.abs(z))
        ratio = np.abs(f) / scale
        min_ratio = min(min_ratio, float(np.min(ratio)))
        if min_ratio < 1.0:
            raise BoundaryRootError("|Δ| below threshold on the contour", min_ratio=min_ratio)
        with np.errstate(all="ignore"):
            g = df / f
        if not np.all(np.isfinite(g)):
            raise BoundaryRootError("Δ vanishes on the contour", point=str(z[~np.isfinite(g)][0]))
        k0 = (g @ _KW) * half
        g0 = (g @ _GW) * half
        k1 = ((g * z) @ _KW) * half
        err = np.abs(k0 - g0)
        # rounding floor: the estimate cannot resolve below the noise in Δ'/Δ
        floor = 64.0 * np.abs(half) * np.max(np.abs(g) * np.nan_to_num(noise, nan=0.0, posinf=1.0), axis=1)
        local = budget * np.abs(zb - za) / perimeter + floor
        ok = err <= local
        total0 += k0[ok].sum()
        total1 += k1[ok].sum()
        n_done += int(ok.sum())
        bad = ~ok
        if not bad.any():
            break
        if n_done + 2 * int(bad.sum()) > tol.max_intervals:
            raise QuadratureError("contour quadrature did not converge", intervals=n_done)
        za_b, zb_b, mid_b = za[bad], zb[bad], mid[bad]
        za = np.concatenate([za_b, mid_b])
        zb = np.concatenate([mid_b, zb_b])
    return total0, total1, min_ratio


def _count_polygon(ld: _LogDerivative, vertices: list[complex], tol: Tolerances):
    """Integer root count and root-sum for a polygon, refining until the count rounds cleanly."""
    count_tol = tol.count_tolerance
    for _ in range(4):
        i0, i1, min_ratio = _contour_integrals(ld, vertices, tol, count_tol)
        if min_ratio < 1.0:
            raise BoundaryRootError("|Δ| below threshold on the contour", min_ratio=min_ratio)
        n_real = i0 / (2j * math.pi)
        n = int(round(n_real.real))
        if abs(n_real.real - n) < 0.25 and abs(n_real.imag) < 0.25 and n >= 0:
            return n, i1 / (2j * math.pi)
        count_tol *= 0.1
    raise QuadratureError("argument-principle count does not round to an integer", value=str(n_real))


def _count_rect_raw(ld: _LogDerivative, rect: Rectangle, tol: Tolerances):
    return _count_polygon(ld, list(rect.corners()), tol)


def _count_with_dilation(ld: _LogDerivative, rect: Rectangle, tol: Tolerances):
    """Count in ``rect``; on a suspected boundary root, pull the edges inward and retry.

    Moving the edges inward (never outward) keeps a root sitting just outside
    the requested window from being counted.
    """
    current = rect
    last: Exception | None = None
    for attempt in range(tol.max_dilations + 1):
        try:
            n, m1 = _count_rect_raw(ld, current, tol)
            return n, m1, current
        except (BoundaryRootError, QuadratureError) as exc:
            last = exc
            # geometric schedule: high-multiplicity roots need a wider berth
            current = rect.shrink(tol.dilation_factor * rect.diameter * 4.0**attempt)
    if isinstance(last, QuadratureError):
        raise last
    raise BoundaryRootError(
        "root suspected on the rectangle boundary after dilations", rect=str(rect)
    ) from last


def count_roots(qp: Quasipolynomial, rect: Rectangle, tol: Tolerances = DEFAULT_TOLERANCES) -> int:
    """Number of roots of qp inside rect, counted with multiplicity."""
    n, _, _ = _count_with_dilation(_LogDerivative(qp), rect, tol)
    return n


def _disk_count(ld: _LogDerivative, center: complex, radius: float, tol: Tolerances) -> int:
    """Argument principle on a circle with the periodic trapezoidal rule."""
    prev = None
    n_pts = 64
    for _ in range(8):
        theta = 2 * math.pi * np.arange(n_pts) / n_pts
        w = radius * np.exp(1j * theta)
        z = center + w
        f, df = ld.values(z)
        if np.min(np.abs(f) / (tol.boundary_threshold * (1 + np.abs(z)))) < 1.0:
            raise BoundaryRootError("|Δ| below threshold on certification circle", radius=radius)
        val = np.mean(df / f * w)  # (1/2πi)∮ = mean of f'/f · (z - c)
        if prev is not None and abs(val - prev) < 1e-6 and abs(val.real - round(val.real)) < 1e-3:
            return int(round(val.real))
        prev = val
        n_pts *= 2
    raise QuadratureError("disk count did not converge", center=str(center), radius=radius)


def count_roots_in_disk(
    qp: Quasipolynomial, center: complex, radius: float, tol: Tolerances = DEFAULT_TOLERANCES
) -> int:
    return _disk_count(_LogDerivative(qp), complex(center), float(radius), tol)


def _certify_cluster(ld: _LogDerivative, z: complex, tol: Tolerances) -> tuple[int, float]:
    """Shrink the disk until its count is stable over two consecutive radii.

    Near a high-multiplicity root |Δ| drops below the rounding level on small
    circles; when that happens the search turns around and grows the radius.
    """
    r = tol.cert_radius
    prev = None
    for _ in range(tol.cert_max_shrinks + 1):
        try:
            c = _disk_count(ld, z, r, tol)
        except BoundaryRootError:
            break
        if prev is not None and prev[0] == c:
            return c, prev[1]
        prev = (c, r)
        r *= 0.5
    r = 2.0 * tol.cert_radius
    prev = None
    for _ in range(6):
        try:
            c = _disk_count(ld, z, r, tol)
        except BoundaryRootError:
            prev = None
            r *= 2.0
            continue
        if prev is not None and prev[0] == c:
            return c, prev[1]
        prev = (c, r)
        r *= 2.0
    raise RefinementError("cluster count did not stabilize", value=str(z))


def _newton(qps: list[Quasipolynomial], z0: complex, tol: Tolerances, region: Rectangle) -> complex | None:
    """Newton on g = qps[0] with g' = qps[1]; secant step if g' vanishes."""
    # an iterate thrown far left overflows exp(); that is caught as a non-finite step
    with np.errstate(over="ignore", invalid="ignore"):
        return _newton_iterate(qps, z0, tol, region)


def _newton_iterate(qps: list[Quasipolynomial], z0: complex, tol: Tolerances, region: Rectangle) -> complex | None:
    g, dg = qps
    z = complex(z0)
    z_prev, g_prev = None, None
    limit = 4 * region.diameter + 1.0
    for _ in range(tol.newton_max_iter):
        gz = evaluate(g, z)
        dgz = evaluate(dg, z)
        if abs(dgz) > 1e-300 and math.isfinite(abs(dgz)):
            step = gz / dgz
        elif z_prev is not None and gz != g_prev:
            step = gz * (z - z_prev) / (gz - g_prev)
        else:
            return None
        if not (math.isfinite(step.real) and math.isfinite(step.imag)):
            return None
        z_prev, g_prev = z, gz
        z = z - step
        if abs(z - region.center) > limit:
            return None
        if abs(step) < tol.newton_step_tolerance * (1 + abs(z)):
            return z
    # stagnation at roundoff level still counts as converged if the last step is tiny
    if abs(step) < 1e-10 * (1 + abs(z)):
        return z
    return None


def _try_cluster(
    qp: Quasipolynomial, ld: _LogDerivative, region: Rectangle, n: int, centroid: complex, tol: Tolerances
) -> RootCertificate | None:
    g = derivative(qp, n - 1)
    dg = derivative(g, 1)
    start = centroid if region.contains(centroid) else region.center
    z = _newton([g, dg], start, tol, region)
    if z is None and start != region.center:
        z = _newton([g, dg], region.center, tol, region)
    if z is None or not region.contains(z, slack=1e-9 * region.diameter):
        return None
    for k in range(n):
        dk = derivative(qp, k)
        val = abs(evaluate(dk, z))
        if val > tol.residual_tolerance * max(1.0, dk.term_magnitude(z)):
            return None
    mult, radius = _certify_cluster(ld, z, tol)
    if mult != n:
        return None
    return RootCertificate(value=z, multiplicity=n, residual=abs(evaluate(qp, z)), cluster_radius=radius)


_SPLIT_OFFSETS = (0.5, 0.4472135955, 0.5527864045, 0.3819660113, 0.6180339887, 0.3, 0.7)


def _split_counts(ld: _LogDerivative, region: Rectangle, n: int, tol: Tolerances):
    last: Exception | None = None
    for f in _SPLIT_OFFSETS:
        children = region.split(f, f)
        try:
            counted = [(child, *_count_rect_raw(ld, child, tol)) for child in children]
        except (BoundaryRootError, QuadratureError) as exc:
            last = exc
            continue
        if sum(c[1] for c in counted) == n:
            return counted
    raise QuadratureError("subdivision counts inconsistent with parent", region=str(region)) from last


def find_roots(
    qp: Quasipolynomial, rect: Rectangle | None = None, tol: Tolerances = DEFAULT_TOLERANCES
) -> SpectrumResult:
    """All roots of qp in rect, each with multiplicity and a certificate."""
    if rect is None:
        rect = default_window(qp)
    if not qp.terms:
        raise InvalidSystemError("the zero function has no isolated roots")
    ld = _LogDerivative(qp)
    total, m1, region = _count_with_dilation(ld, rect, tol)
    max_mult = max(degree(qp), 1)
    certs: list[RootCertificate] = []
    stack = [(region, total, m1, 0)]
    while stack:
        reg, n, moment, depth = stack.pop()
        if n == 0:
            continue
        if n <= max_mult:
            cert = _try_cluster(qp, ld, reg, n, moment / n, tol)
            if cert is not None:
                certs.append(cert)
                continue
        if depth >= tol.max_depth or reg.diameter < 1e-12 * (1 + abs(reg.center)):
            raise RefinementError("could not isolate root cluster", region=str(reg), count=n)
        for child, cn, cm in _split_counts(ld, reg, n, tol):
            stack.append((child, cn, cm, depth + 1))
    if sum(c.multiplicity for c in certs) != total:
        raise RefinementError("certificates do not account for all counted roots")
    certs.sort(key=lambda c: (-c.value.real, c.value.imag))
    return SpectrumResult(roots=tuple(certs), region=region, total_count=total)


def spectral_abscissa(
    qp: Quasipolynomial, rect: Rectangle | None = None, tol: Tolerances = DEFAULT_TOLERANCES
) -> float:
    """Largest real part of the roots in rect.

    The rightmost band holding roots is located by bisection on counts, then
    refined with find_roots on that band only.
    """
    if rect is None:
        rect = default_window(qp)
    bound = abscissa_upper_bound(qp)
    if bound is not None and rect.re_high <= bound:
        raise InvalidSystemError(
            f"right edge {rect.re_high} does not clear the a-priori abscissa bound {bound}"
        )
    ld = _LogDerivative(qp)
    total, _, region = _count_with_dilation(ld, rect, tol)
    if total == 0:
        raise EmptySpectrumError("no roots in window", region=str(rect))
    lo, hi = region.re_low, region.re_high
    band_count = total
    while hi - lo > 0.5 and band_count > 1:
        mid = 0.5 * (lo + hi)
        for shift in (0.0, 1e-3, -1e-3, 7e-3, -7e-3):
            try:
                c, _ = _count_rect_raw(ld, Rectangle(mid + shift, region.re_high, region.im_low, region.im_high), tol)
                mid += shift
                break
            except (BoundaryRootError, QuadratureError):
                continue
        else:
            break
        if c > 0:
            lo, band_count = mid, c
        else:
            hi = mid
    band = Rectangle(lo, region.re_high, region.im_low, region.im_high)
    return find_roots(qp, band, tol).abscissa


def spectrum_to_csv(result: SpectrumResult | Iterable[RootCertificate], stream=None) -> str:
    """CSV with columns re, im, multiplicity, residual."""
    roots = result.roots if isinstance(result, SpectrumResult) else tuple(result)
    buf = stream if stream is not None else io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["re", "im", "multiplicity", "residual"])
    for r in roots:
        writer.writerow([repr(r.value.real), repr(r.value.imag), r.multiplicity, repr(r.residual)])
    return buf.getvalue() if stream is None else ""
