"""Double-well potentials, their critical structure and the velocity regimes.

A potential is described by the coefficients of its slope ``U'`` in ascending
degree.  ``U`` itself is only reconstructed for reporting (``U(0) = 0``).
"""
from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.optimize import brentq

from .errors import (
    Degenerate,
    DegenerateCurvature,
    DegenerateRoot,
    InternalConsistencyError,
    InvalidVelocities,
    NotDoubleWell,
)

#: relative distance of a tilt ``c`` to ``V`` or ``v`` below which it is degenerate
DEGENERACY_RTOL = 1e-9
#: absolute tolerance of polished roots
ROOT_ATOL = 1e-12


@dataclass(frozen=True)
class PotentialSpec:
    """Polynomial slope ``U'(x) = sum_k slope_coefficients[k] * x**k``."""

    slope_coefficients: tuple
    label: Optional[str] = None

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.slope_coefficients)
        if not coeffs:
            raise NotDoubleWell("slope_coefficients must be nonempty")
        if not all(math.isfinite(c) for c in coeffs):
            raise NotDoubleWell("slope_coefficients must be finite")
        while len(coeffs) > 1 and coeffs[-1] == 0.0:
            coeffs = coeffs[:-1]
        object.__setattr__(self, "slope_coefficients", coeffs)

    @classmethod
    def from_dict(cls, data: dict) -> "PotentialSpec":
        return cls(tuple(data["slope_coefficients"]), data.get("label"))

    def to_dict(self) -> dict:
        return {"slope_coefficients": list(self.slope_coefficients), "label": self.label}

    @property
    def degree(self) -> int:
        return len(self.slope_coefficients) - 1

    @property
    def coefficients(self) -> np.ndarray:
        return np.asarray(self.slope_coefficients, dtype=float)

    def slope(self, x):
        """U'(x)."""
        return P.polyval(x, self.coefficients)

    def curvature(self, x):
        """U''(x)."""
        return P.polyval(x, P.polyder(self.coefficients))

    def potential(self, x):
        """U(x) with the additive constant fixed by U(0) = 0."""
        return P.polyval(x, P.polyint(self.coefficients))

    def mirrored(self) -> "PotentialSpec":
        """Slope of the reflected potential ``x -> U(-x)``, i.e. ``-U'(-x)``."""
        coeffs = [(-1.0) ** (k + 1) * c for k, c in enumerate(self.slope_coefficients)]
        label = None if self.label is None else f"mirror({self.label})"
        return PotentialSpec(tuple(coeffs), label)


QUARTIC = PotentialSpec((0.0, -1.0, 0.0, 1.0), "quartic")


@dataclass(frozen=True)
class Landscape:
    x_minus: float
    x_zero: float
    x_plus: float
    v: float
    V: float
    inflection_points: tuple

    @property
    def minima(self) -> tuple:
        return (self.x_minus, self.x_plus)


@dataclass(frozen=True)
class VelocityPair:
    c0: float
    c1: float

    def __post_init__(self):
        c0, c1 = float(self.c0), float(self.c1)
        if not (math.isfinite(c0) and math.isfinite(c1)):
            raise InvalidVelocities("velocities must be finite")
        if not c0 > c1:
            raise InvalidVelocities(f"need c0 > c1, got c0={c0}, c1={c1}")
        object.__setattr__(self, "c0", c0)
        object.__setattr__(self, "c1", c1)

    def __getitem__(self, i: int) -> float:
        return (self.c0, self.c1)[i]

    def mirrored(self) -> "VelocityPair":
        return VelocityPair(-self.c1, -self.c0)


class RegimeTag(str, enum.Enum):
    CASE_A = "CaseA"
    CASE_B_UPPER = "CaseBUpper"
    CASE_B_LOWER = "CaseBLower"
    CASE_C = "CaseC"
    SINGLE_WELL_HIGH = "SingleWellHigh"
    SINGLE_WELL_LOW = "SingleWellLow"
    DEGENERATE = "Degenerate"


@dataclass(frozen=True)
class Regions:
    g_minus: Optional[tuple] = None
    g_plus: Optional[tuple] = None
    g_zero: Optional[tuple] = None
    g_merged: Optional[tuple] = None

    def attractors(self) -> dict:
        out = {}
        for name in ("g_minus", "g_plus", "g_merged"):
            val = getattr(self, name)
            if val is not None:
                out[name] = val
        return out


@dataclass(frozen=True)
class Regime:
    tag: RegimeTag
    wells0: tuple
    wells1: tuple
    regions: Regions
    landscape: Landscape = field(repr=False)
    velocities: VelocityPair = field(repr=False)

    def to_dict(self) -> dict:
        r = self.regions
        return {
            "tag": self.tag.value,
            "wells0": list(self.wells0),
            "wells1": list(self.wells1),
            "G_minus": None if r.g_minus is None else list(r.g_minus),
            "G_plus": None if r.g_plus is None else list(r.g_plus),
            "G0": None if r.g_zero is None else list(r.g_zero),
            "G": None if r.g_merged is None else list(r.g_merged),
            "V": self.landscape.V,
            "v": self.landscape.v,
        }


# ---------------------------------------------------------------------------
# real roots of polynomials

def _scale(coeffs: np.ndarray, x: float) -> float:
    return float(np.sum(np.abs(coeffs) * np.abs(x) ** np.arange(len(coeffs))))


def _polish(coeffs: np.ndarray, dcoeffs: np.ndarray, x: float, lo: float, hi: float) -> float:
    for _ in range(4):
        d = P.polyval(x, dcoeffs)
        if d == 0.0:
            break
        nx = x - P.polyval(x, coeffs) / d
        if not lo <= nx <= hi or nx == x:
            break
        if abs(P.polyval(nx, coeffs)) >= abs(P.polyval(x, coeffs)):
            break
        x = nx
    return x


def real_roots(coeffs: Sequence[float]) -> list:
    """Real roots of a polynomial (ascending coefficients) with multiplicity flags.

    The line is cut at the real critical points of the polynomial (found
    recursively); on each monotone piece a sign change is bracketed and solved
    by Brent's method, then polished by Newton.  A critical point at which the
    polynomial vanishes is reported once, flagged as a multiple root.

    Returns a sorted list of ``(root, is_simple)``.
    """
    c = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
    deg = len(c) - 1
    if deg <= 0:
        return []
    if deg == 1:
        return [(-c[0] / c[1], True)]
    dc = P.polyder(c)
    crit = [r for r, _ in real_roots(dc)]
    bound = 1.0 + float(np.max(np.abs(c[:-1] / c[-1])))
    pts = [-bound] + crit + [bound]
    vals = [P.polyval(p, c) for p in pts]
    zero = [abs(v) <= 1e-14 * max(_scale(c, p), 1.0) for p, v in zip(pts, vals)]
    roots = []
    for k in range(len(pts) - 1):
        lo, hi = pts[k], pts[k + 1]
        if zero[k] or zero[k + 1] or hi <= lo:
            continue
        if vals[k] * vals[k + 1] < 0.0:
            r = brentq(lambda x: P.polyval(x, c), lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
            roots.append((_polish(c, dc, r, lo, hi), True))
    for k in range(1, len(pts) - 1):
        if zero[k]:
            roots.append((pts[k], False))
    roots.sort()
    return roots


# ---------------------------------------------------------------------------
# operations

@functools.lru_cache(maxsize=256)
def validate_double_well(spec: PotentialSpec) -> Landscape:
    """Check the double-well shape of ``spec`` and return its landscape."""
    c = spec.coefficients
    deg = spec.degree
    if deg < 3 or deg % 2 == 0:
        raise NotDoubleWell(f"degree of U' must be odd and >= 3, got {deg}")
    if c[-1] <= 0:
        raise NotDoubleWell("leading coefficient of U' must be positive")
    roots = real_roots(c)
    if len(roots) != 3 or not all(simple for _, simple in roots):
        raise NotDoubleWell(
            f"U' must have exactly three simple real roots, found {[(round(r, 12), s) for r, s in roots]}"
        )
    xs = [r for r, _ in roots]
    dc = P.polyder(c)
    for r in xs:
        if abs(P.polyval(r, dc)) < DEGENERACY_RTOL * max(_scale(dc, r), 1.0):
            raise DegenerateCurvature(f"U''({r}) vanishes")
    infl = real_roots(dc)
    if len(infl) != 2 or not all(simple for _, simple in infl):
        raise NotDoubleWell("U' must have exactly one local maximum and one local minimum")
    left, right = infl[0][0], infl[1][0]
    V = float(P.polyval(left, c))
    v = float(P.polyval(right, c))
    return Landscape(float(xs[0]), float(xs[1]), float(xs[2]), v, V, (float(left), float(right)))


def _check_tilt(landscape: Landscape, c: float, exc=DegenerateRoot) -> None:
    tol = DEGENERACY_RTOL * max(1.0, abs(landscape.V), abs(landscape.v))
    if abs(c - landscape.V) < tol or abs(c - landscape.v) < tol:
        raise exc(f"tilt c={c} coincides with a slope extremum (V={landscape.V}, v={landscape.v})")


@functools.lru_cache(maxsize=1024)
def critical_points(spec: PotentialSpec, c: float) -> tuple:
    """Sorted simple real roots of ``U'(x) = c`` (critical points of ``U - c x``)."""
    landscape = validate_double_well(spec)
    _check_tilt(landscape, c)
    coeffs = spec.coefficients.copy()
    coeffs[0] -= c
    roots = real_roots(coeffs)
    if not all(simple for _, simple in roots):
        raise DegenerateRoot(f"U'(x) = {c} has a multiple root")
    return tuple(float(r) for r, _ in roots)


def classify_regime(spec: PotentialSpec, velocities: VelocityPair) -> Regime:
    """Classify ``(c0, c1)`` against the slope extrema ``(v, V)`` of ``U'``."""
    land = validate_double_well(spec)
    c0, c1 = velocities.c0, velocities.c1
    _check_tilt(land, c0, Degenerate)
    _check_tilt(land, c1, Degenerate)
    V, v = land.V, land.v
    b = critical_points(spec, c0)
    a = critical_points(spec, c1)
    if V > c0 and c1 > v:
        tag = RegimeTag.CASE_A
        regions = Regions(g_minus=(a[0], b[0]), g_plus=(a[2], b[2]), g_zero=(b[1], a[1]))
        if not a[0] < b[0] < b[1] < a[1] < a[2] < b[2]:
            raise InternalConsistencyError(f"case A ordering violated: a={a}, b={b}")
    elif c0 > V and V > c1 > v:
        tag = RegimeTag.CASE_B_UPPER
        regions = Regions(g_plus=(a[-1], b[-1]))
    elif V > c0 > v and v > c1:
        tag = RegimeTag.CASE_B_LOWER
        regions = Regions(g_minus=(a[0], b[0]))
    elif c0 > V and v > c1:
        tag = RegimeTag.CASE_C
        regions = Regions(g_merged=(a[0], b[-1]))
    elif c1 > V:
        tag = RegimeTag.SINGLE_WELL_HIGH
        regions = Regions(g_merged=(a[0], b[0]))
    elif v > c0:
        tag = RegimeTag.SINGLE_WELL_LOW
        regions = Regions(g_merged=(a[0], b[0]))
    else:  # pragma: no cover - inequalities above are exhaustive off the degenerate set
        raise Degenerate(f"unclassifiable velocities {velocities}")
    return Regime(tag, b, a, regions, land, velocities)
