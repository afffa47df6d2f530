"""Deterministic patterns of the two driven flows and the fields built from them.

For a tilt ``c`` the flow ``dy/dt = c - U'(y)`` is straightened by an
antiderivative ``Phi`` of ``1/(c - U')``: ``Phi(gamma(t, x)) = Phi(x) + t``.
``Phi`` is evaluated in closed form by partial fractions over all roots of
``c - U'`` (real roots give logarithms, conjugate pairs a log/arctan pair), so
any polynomial slope with simple roots is handled exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from numpy.polynomial import polynomial as P

from . import _kernels as K
from .errors import (
    InvalidVelocities,
    OutOfBranch,
    OutOfDomain,
    PoleAtCriticalPoint,
)
from .potential import (
    PotentialSpec,
    VelocityPair,
    classify_regime,
    critical_points,
    validate_double_well,
)
from .quadrature import Node

ATTRACTING = "attracting"
REPELLING = "repelling"
OPEN = "open"


@dataclass(frozen=True)
class RatePair:
    lambda0: float
    lambda1: float

    def __post_init__(self):
        l0, l1 = float(self.lambda0), float(self.lambda1)
        if not (math.isfinite(l0) and math.isfinite(l1) and l0 > 0 and l1 > 0):
            raise InvalidVelocities(f"switching rates must be positive and finite, got {l0}, {l1}")
        object.__setattr__(self, "lambda0", l0)
        object.__setattr__(self, "lambda1", l1)

    def __getitem__(self, i: int) -> float:
        return (self.lambda0, self.lambda1)[i]

    @property
    def total(self) -> float:
        return self.lambda0 + self.lambda1

    def mirrored(self) -> "RatePair":
        return RatePair(self.lambda1, self.lambda0)


@dataclass(frozen=True)
class Branch:
    velocity_index: int
    index: int
    lo: float
    hi: float
    direction: int
    lo_kind: str
    hi_kind: str

    def contains(self, y) -> bool:
        return self.lo < y < self.hi

    @property
    def attracting_end(self) -> float:
        return self.hi if self.direction > 0 else self.lo

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def default_reference(self, fraction: float = 0.5) -> float:
        """Point at ``fraction`` of a finite branch; ``2 * fraction`` off the finite end otherwise."""
        if math.isinf(self.lo) and math.isinf(self.hi):
            return 0.0
        if math.isinf(self.lo):
            return self.hi - 2.0 * fraction
        if math.isinf(self.hi):
            return self.lo + 2.0 * fraction
        return self.lo + fraction * (self.hi - self.lo)


class Flow:
    """Partial-fraction data and branches of ``dy/dt = c - U'(y)``."""

    def __init__(self, spec: PotentialSpec, c: float, velocity_index: int = 0):
        self.spec = spec
        self.c = float(c)
        self.velocity_index = velocity_index
        validate_double_well(spec)
        real = np.array(critical_points(spec, self.c))
        gap = -spec.coefficients.copy()
        gap[0] += self.c
        self.lead = float(spec.coefficients[-1])
        dgap = P.polyder(gap)
        self.real_roots = real
        self.real_residues = 1.0 / P.polyval(real, dgap)
        allr = P.polyroots(gap)
        n_complex = spec.degree - real.size
        cplx = sorted(allr, key=lambda z: -abs(z.imag))[:n_complex]
        cplx = [z for z in cplx if z.imag > 0]
        polished = []
        for z in cplx:
            for _ in range(3):
                d = P.polyval(z, dgap)
                if d == 0:
                    break
                z = z - P.polyval(z, gap) / d
            polished.append(z)
        self.complex_roots = np.array(polished, dtype=complex)
        self.complex_residues = 1.0 / P.polyval(self.complex_roots, dgap) if polished else np.zeros(0, complex)
        nr = real.size
        self.branches = []
        for k in range(nr + 1):
            lo = -math.inf if k == 0 else float(real[k - 1])
            hi = math.inf if k == nr else float(real[k])
            d = -1 if (nr - k) % 2 == 0 else 1
            lo_kind = OPEN if k == 0 else (REPELLING if d > 0 else ATTRACTING)
            hi_kind = OPEN if k == nr else (ATTRACTING if d > 0 else REPELLING)
            self.branches.append(Branch(velocity_index, k, lo, hi, d, lo_kind, hi_kind))

    # -- packing for the compiled kernels
    def table(self, width: int) -> tuple:
        F = np.zeros((7, width))
        nr, nc = self.real_roots.size, self.complex_roots.size
        F[0, :nr] = self.real_roots
        F[1, :nr] = self.real_residues
        F[2, :nc] = self.complex_roots.real
        F[3, :nc] = self.complex_roots.imag
        F[4, :nc] = self.complex_residues.real
        F[5, :nc] = self.complex_residues.imag
        F[6, 0] = self.lead
        F[6, 1] = self.c
        return F, (nr, nc)

    # -- vectorised evaluation
    def branch_index(self, y, offset=None) -> np.ndarray:
        """Branch of each position; positions exactly on a root get ``-1``."""
        y = np.asarray(y, dtype=float)
        left = np.searchsorted(self.real_roots, y, side="left")
        right = np.searchsorted(self.real_roots, y, side="right")
        if offset is None:
            return np.where(left == right, left, -1)
        offset = np.asarray(offset, dtype=float)
        k = np.where(offset < 0, left, right)
        return np.where((left != right) & (offset == 0), -1, k)

    def raw(self, anchor, offset=0.0) -> np.ndarray:
        """Partial-fraction antiderivative (no additive constant) at ``anchor + offset``."""
        anchor = np.asarray(anchor, dtype=float)
        offset = np.asarray(offset, dtype=float)
        s = np.zeros(np.broadcast(anchor, offset).shape)
        with np.errstate(divide="ignore"):
            for r, A in zip(self.real_roots, self.real_residues):
                s = s + A * np.log(np.abs((anchor - r) + offset))
        for r, A in zip(self.complex_roots, self.complex_residues):
            dx = (anchor - r.real) + offset
            s = s + A.real * np.log(dx * dx + r.imag ** 2) - 2.0 * A.imag * np.arctan2(-r.imag, dx)
        return s

    def gap(self, anchor, offset=0.0) -> np.ndarray:
        """``c - U'`` at ``anchor + offset`` in product form (exact near roots)."""
        anchor = np.asarray(anchor, dtype=float)
        offset = np.asarray(offset, dtype=float)
        p = np.full(np.broadcast(anchor, offset).shape, -self.lead)
        for r in self.real_roots:
            p = p * ((anchor - r) + offset)
        for r in self.complex_roots:
            dx = (anchor - r.real) + offset
            p = p * (dx * dx + r.imag ** 2)
        return p


@dataclass(frozen=True)
class FlowMap:
    """A branch with the additive constant of ``Phi`` fixed by ``Phi(reference_point) = 0``."""

    flow: Flow = field(repr=False)
    branch: Branch
    reference_point: float

    def __post_init__(self):
        if not self.branch.contains(self.reference_point):
            raise OutOfBranch("reference point must lie strictly inside the branch")
        object.__setattr__(self, "_const", float(self.flow.raw(self.reference_point)))

    @property
    def constant(self) -> float:
        return self._const

    def phi(self, y):
        y = np.asarray(y, dtype=float)
        if not np.all((self.branch.lo < y) & (y < self.branch.hi)):
            raise OutOfBranch(f"position outside branch ({self.branch.lo}, {self.branch.hi})")
        out = self.flow.raw(y) - self._const
        return float(out) if out.ndim == 0 else out

    def derivative(self, y):
        return 1.0 / self.flow.gap(y)


class InverseResult(NamedTuple):
    position: float
    saturated: int


class Dynamics:
    """Both flows of a velocity/rate configuration with fixed Phi conventions.

    ``reference_fraction`` moves the point at which every branch's ``Phi`` is
    zero (0.5: branch midpoints, or one unit off the finite end of unbounded
    branches).  Convention-invariant outputs do not depend on it.
    """

    def __init__(self, spec: PotentialSpec, velocities: VelocityPair, rates: RatePair,
                 reference_fraction: float = 0.5):
        if not 0.0 < reference_fraction < 1.0:
            raise ValueError("reference_fraction must lie in (0, 1)")
        self.spec = spec
        self.velocities = velocities
        self.rates = rates
        self.reference_fraction = float(reference_fraction)
        self.regime = classify_regime(spec, velocities)
        self.flows = (Flow(spec, velocities.c0, 0), Flow(spec, velocities.c1, 1))
        self.maps = tuple(
            tuple(FlowMap(f, b, b.default_reference(reference_fraction)) for b in f.branches)
            for f in self.flows
        )
        self._consts = tuple(np.array([m.constant for m in maps]) for maps in self.maps)
        width = max(2, spec.degree)
        tables = [f.table(width) for f in self.flows]
        self.F = np.ascontiguousarray(np.stack([t[0] for t in tables]))
        self.N = np.array([t[1] for t in tables], dtype=np.int64)
        self.rate_array = np.array([rates.lambda0, rates.lambda1])

    def with_reference_fraction(self, fraction: float) -> "Dynamics":
        return Dynamics(self.spec, self.velocities, self.rates, fraction)

    def mirrored(self) -> "Dynamics":
        """Configuration of ``-X``: reflected potential, swapped states."""
        return Dynamics(self.spec.mirrored(), self.velocities.mirrored(), self.rates.mirrored(),
                        1.0 - self.reference_fraction)

    # -- per-flow geometry
    def flow_map(self, i: int, y: float) -> FlowMap:
        k = int(self.flows[i].branch_index(y))
        if k < 0:
            raise OutOfBranch(f"{y} is a fixed point of flow {i}")
        return self.maps[i][k]

    def phi(self, i: int, anchor, offset=0.0, at_root: str = "raise") -> np.ndarray:
        """``Phi_i`` on the branch containing each position.

        At a fixed point ``at_root="raise"`` raises; ``"limit"`` returns the
        one-sided limit, ``+inf`` at an attracting and ``-inf`` at a repelling
        point (the same from both sides).
        """
        flow = self.flows[i]
        k = flow.branch_index(np.asarray(anchor) + np.asarray(offset), offset)
        on_root = k < 0
        if not np.any(on_root):
            return flow.raw(anchor, offset) - self._consts[i][k]
        if at_root != "limit":
            raise OutOfDomain(f"position is a fixed point of flow {i}")
        y = np.broadcast_to(np.asarray(anchor) + np.asarray(offset), k.shape)
        with np.errstate(invalid="ignore"):
            out = flow.raw(anchor, offset) - self._consts[i][np.where(on_root, 0, k)]
        j = np.clip(np.searchsorted(flow.real_roots, y), 0, max(len(flow.real_roots) - 1, 0))
        attracting = self.spec.curvature(flow.real_roots[j]) > 0
        return np.where(on_root, np.where(attracting, np.inf, -np.inf), out)

    def pattern(self, i: int, t: float, x: float) -> float:
        if t < 0:
            raise ValueError("t must be nonnegative")
        y, _ = K.advance(self.F, self.N, i, float(x), float(t))
        return y

    def pattern_node(self, i: int, t: float, x: float) -> Node:
        """``pattern`` as a nearest-end ``Node``.

        Within a few ulps of an attracting root a float position cannot
        resolve ``Phi``; the offset from the root keeps full relative precision.
        """
        if t < 0:
            raise ValueError("t must be nonnegative")
        x = float(x)
        k = int(K.branch_index(self.F, self.N, i, x))
        if k < 0 or t == 0:
            return Node.at(x)
        u0 = K.u_of_y(self.F, self.N, i, k, x)
        f0, _ = K.phi_u(self.F, self.N, i, k, u0)
        u, _ = K.solve_u(self.F, self.N, i, k, f0 + float(t), u0, f0)
        nr = int(self.N[i, 0])
        roots = self.flows[i].real_roots
        if k == 0:
            anchor, offset = roots[0], -math.exp(-u)
        elif k == nr:
            anchor, offset = roots[-1], math.exp(u)
        else:
            lo, hi = roots[k - 1], roots[k]
            if u >= 0.0:
                anchor, offset = hi, -(hi - lo) / (1.0 + math.exp(u))
            else:
                anchor, offset = lo, (hi - lo) / (1.0 + math.exp(-u))
        return Node(np.asarray(anchor, dtype=float), np.asarray(offset, dtype=float))

    def reach_time(self, i: int, x: float, y: float) -> float:
        return K.reach(self.F, self.N, i, float(x), float(y))

    def gap(self, i: int, anchor, offset=0.0) -> np.ndarray:
        return self.flows[i].gap(anchor, offset)

    # -- scalar fields
    def psi_small(self, x):
        x = np.asarray(x, dtype=float)
        g0, g1 = self.gap(0, x), self.gap(1, x)
        if np.any(g0 == 0) or np.any(g1 == 0):
            raise PoleAtCriticalPoint("psi has a pole at a critical point of a tilted potential")
        out = self.rates.lambda0 / g0 + self.rates.lambda1 / g1
        return float(out) if out.ndim == 0 else out

    def log_Psi(self, anchor, offset=0.0, at_root: str = "raise"):
        out = (self.rates.lambda0 * self.phi(0, anchor, offset, at_root)
               + self.rates.lambda1 * self.phi(1, anchor, offset, at_root))
        return float(out) if np.ndim(out) == 0 else out

    def log_Psi_node(self, node: Node) -> np.ndarray:
        return self.log_Psi(node.anchor, node.offset)

    def beta(self, x, y):
        """``Psi(x) / Psi(y)``; requires ``x`` and ``y`` in the same branches of both flows."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        for f in self.flows:
            if np.any(f.branch_index(x) != f.branch_index(y)):
                raise OutOfDomain("beta needs both points inside the same branch of each flow")
        out = np.exp(self.log_Psi(x) - self.log_Psi(y))
        return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# functional interface

def branches(spec: PotentialSpec, c: float, velocity_index: int = 0) -> list:
    return list(Flow(spec, c, velocity_index).branches)


def flow_map(spec: PotentialSpec, c: float, y_inside: float,
             reference_point: Optional[float] = None, velocity_index: int = 0) -> FlowMap:
    """The FlowMap of the branch containing ``y_inside``."""
    flow = Flow(spec, c, velocity_index)
    k = int(flow.branch_index(y_inside))
    if k < 0:
        raise OutOfBranch(f"{y_inside} is a fixed point")
    b = flow.branches[k]
    return FlowMap(flow, b, b.default_reference() if reference_point is None else reference_point)


def phi(fm: FlowMap, y):
    return fm.phi(y)


def phi_inverse(fm: FlowMap, s: float) -> InverseResult:
    """The branch point with ``Phi = s``, clamped near the ends (flag ``saturated``)."""
    if not math.isfinite(s):
        raise ValueError("s must be finite")
    dyn_F, nn = fm.flow.table(max(2, fm.flow.spec.degree))
    F = np.ascontiguousarray(dyn_F[None])
    N = np.array([nn], dtype=np.int64)
    u, sat = K.solve_u(F, N, 0, fm.branch.index, s + fm.constant, math.nan, math.nan)
    return InverseResult(K.y_of_u(F, N, 0, fm.branch.index, u), int(sat))


def pattern(dyn: Dynamics, i: int, t: float, x: float) -> float:
    return dyn.pattern(i, t, x)


def reach_time(dyn: Dynamics, i: int, x: float, y: float) -> float:
    return dyn.reach_time(i, x, y)


def psi_small(dyn: Dynamics, x):
    return dyn.psi_small(x)


def log_Psi(dyn: Dynamics, x):
    return dyn.log_Psi(x)


def beta(dyn: Dynamics, x, y):
    return dyn.beta(x, y)


def flow_table_rows(dyn: Dynamics, samples: int = 41) -> tuple:
    """Branch table and Phi samples for plotting."""
    branch_rows = []
    sample_rows = []
    for i, flow in enumerate(dyn.flows):
        for b, fm in zip(flow.branches, dyn.maps[i]):
            branch_rows.append((i, b.index, b.lo, b.hi, b.direction, b.lo_kind, b.hi_kind, fm.reference_point))
            lo = b.lo if math.isfinite(b.lo) else b.hi - 3.0
            hi = b.hi if math.isfinite(b.hi) else b.lo + 3.0
            for y in np.linspace(lo, hi, samples + 2)[1:-1]:
                sample_rows.append((i, b.index, float(y), float(fm.phi(y))))
    return branch_rows, sample_rows
