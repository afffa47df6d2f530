"""Closed-form exit probabilities and mean first-passage times.

All quantities are built from ``Psi = exp(lambda0 Phi0 + lambda1 Phi1)`` and
the gaps ``P_i = c_i - U'``.  Integrals are oriented (``int_x^y = -int_y^x``)
and evaluated by tanh-sinh quadrature with exact endpoint offsets.

Mean passage times on the half-line above the metastable interval are given
by three formula families, selected geometrically.  With ``A`` the attracting
root of flow 1 and ``B`` the attracting root of flow 0 (``A < B``):

``below``/``above``   ``x < y < A`` or ``x > y > B``::

    m0 = I0(x, y) + Lam J0(x, y),   m1 = I1(x, y) + Lam J1(x, y)

``rise``              ``x < y``, ``A <= y < B``::

    m0 = Lam int_x^y dz0/P0(z0) int_{z0}^A beta(z0, z1)/P1(z1) dz1
    m1 = m0 - (1 - Lam int_x^A beta(x, z)/P1(z) dz) / lambda0

``fall``              ``x > y``, ``A < y <= B``::

    m1 = Lam int_x^y dz1/P1(z1) int_{z1}^B beta(z1, z0)/P0(z0) dz0
    m0 = m1 - (1 - Lam int_x^B beta(x, z)/P0(z) dz) / lambda1

The ``printed`` variant instead uses ``(1 + lambda0/lambda1) I0 + Lam J0`` and
``1/lambda1 + Lam J1`` for ``rise`` and the same expressions frozen at ``y = B``
for ``fall``.  It agrees with ``derived`` for ``rise`` at ``y = A`` and nowhere
else; its ``fall`` values can even be negative.  The lower half-line is handled
by reflecting ``x -> -x``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    AmbiguousCase,
    ConfigError,
    InfiniteMean,
    InternalConsistencyError,
    OutOfDomain,
    OutOfInterval,
    WrongRegime,
)
from .flow import Dynamics
from .potential import RegimeTag
from .quadrature import (
    DEFAULT_TOL_1D,
    DEFAULT_TOL_2D,
    Integrand1D,
    Node,
    QuadratureResult,
    integrate_endpoint_singular,
    integrate_iterated,
    integrate_rows,
)

VARIANTS = ("derived", "printed")


def _dyn(config) -> Dynamics:
    return config if isinstance(config, Dynamics) else config.dynamics


# ---------------------------------------------------------------------------
# exit probabilities from the metastable interval

@dataclass(frozen=True)
class ExitProbabilities:
    x: np.ndarray
    p0: np.ndarray
    p1: np.ndarray
    B0: QuadratureResult
    B1: QuadratureResult
    err0: np.ndarray
    err1: np.ndarray


def _on_root(dyn: Dynamics, node: Node) -> np.ndarray:
    """Nodes sitting exactly on a fixed point (only reachable through offset underflow)."""
    return (dyn.gap(0, node.anchor, node.offset) == 0) | (dyn.gap(1, node.anchor, node.offset) == 0)


def _drop_root_nodes(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    if not np.any(mask):
        return values
    return np.where(mask, 0.0, values)


def _psi_gap(dyn: Dynamics, i: int, shift: float):
    def f(node: Node):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            v = np.exp(dyn.log_Psi(node.anchor, node.offset, "limit") - shift) / dyn.gap(i, node.anchor, node.offset)
        return _drop_root_nodes(v, _on_root(dyn, node))
    return f


def _log_psi_ref(dyn: Dynamics, lo: float, hi: float) -> float:
    grid = lo + (hi - lo) * np.linspace(0.02, 0.98, 49)
    return float(np.max(dyn.log_Psi(grid)))


def metastable_interval(dyn: Dynamics) -> tuple:
    if dyn.regime.tag is not RegimeTag.CASE_A:
        raise WrongRegime(f"exit probabilities need the two-attractor regime, got {dyn.regime.tag.value}")
    return dyn.regime.regions.g_zero


def exit_constants(config, tol: float = DEFAULT_TOL_1D) -> tuple:
    """``(B0, B1, shift)``: the normalising integrals scaled by ``exp(-shift)``."""
    dyn = _dyn(config)
    b0, a0 = metastable_interval(dyn)
    shift = _log_psi_ref(dyn, b0, a0)
    l0, l1 = dyn.rates.lambda0, dyn.rates.lambda1
    k_b0 = abs(float(dyn.spec.curvature(b0)))
    k_a0 = abs(float(dyn.spec.curvature(a0)))
    B0 = integrate_endpoint_singular(
        Integrand1D(_psi_gap(dyn, 0, shift), b0, a0, (l0 / k_b0 - 1.0, l1 / k_a0), node_aware=True), tol)
    B1 = integrate_endpoint_singular(
        Integrand1D(_psi_gap(dyn, 1, shift), b0, a0, (l0 / k_b0, l1 / k_a0 - 1.0), node_aware=True), tol)
    if not (B0.value > 0 and B1.value < 0):
        raise InternalConsistencyError(f"unexpected signs B0={B0.value}, B1={B1.value}")
    return B0, B1, shift


def _clip_probability(p: np.ndarray, err: np.ndarray) -> np.ndarray:
    excess = np.maximum(p - 1.0, 0.0) + np.maximum(-p, 0.0)
    if np.any(excess > err + 1e-14):
        raise InternalConsistencyError("probability outside [0, 1] beyond quadrature error")
    return np.clip(p, 0.0, 1.0)


def exit_prob_upper(config, x, tol: float = DEFAULT_TOL_1D) -> ExitProbabilities:
    """Probabilities ``(p0, p1)`` of leaving the metastable interval through its upper end."""
    dyn = _dyn(config)
    b0, a0 = metastable_interval(dyn)
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any((xs <= b0) | (xs >= a0)):
        raise OutOfInterval(f"x must lie strictly inside ({b0}, {a0})")
    B0, B1, shift = exit_constants(dyn, tol)
    n = xs.size
    up, up_err, _ = integrate_rows(_psi_gap(dyn, 0, shift), xs, np.full(n, a0), rtol=tol,
                                   atol=tol * abs(B0.value), rows=n)
    lo, lo_err, _ = integrate_rows(_psi_gap(dyn, 1, shift), np.full(n, b0), xs, rtol=tol,
                                   atol=tol * abs(B1.value), rows=n)
    p0 = 1.0 - up / B0.value
    p1 = lo / B1.value
    err0 = up_err / B0.value + np.abs(up / B0.value) * B0.error_estimate / B0.value
    err1 = lo_err / abs(B1.value) + np.abs(lo / B1.value) * B1.error_estimate / abs(B1.value)
    p0 = _clip_probability(p0, err0)
    p1 = _clip_probability(p1, err1)
    return ExitProbabilities(xs, p0, p1, B0, B1, err0, err1)


# ---------------------------------------------------------------------------
# building blocks I, J

def _check_no_root_between(dyn: Dynamics, x: float, y: float) -> None:
    lo, hi = min(x, y), max(x, y)
    for f in dyn.flows:
        if np.any((f.real_roots > lo) & (f.real_roots < hi)):
            raise OutOfDomain(f"({lo}, {hi}) contains a fixed point of a tilted flow")


def _log_psi_limit(dyn: Dynamics, y: float, side: float) -> float:
    """log Psi at ``y``, or its limit (``+-inf``) when ``y`` is a fixed point approached from ``side``."""
    for i, f in enumerate(dyn.flows):
        if np.any(f.real_roots == y):
            k = int(f.branch_index(side))
            b = f.branches[k]
            kind = b.lo_kind if b.lo == y else b.hi_kind
            return math.inf if kind == "attracting" else -math.inf
    return float(dyn.log_Psi(y))


def _beta_gap(dyn: Dynamics, i: int, log_end: float):
    def f(node: Node):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            v = np.exp(dyn.log_Psi(node.anchor, node.offset, "limit") - log_end) / dyn.gap(i, node.anchor, node.offset)
        return _drop_root_nodes(v, _on_root(dyn, node))
    return f


def I_integral(i: int, config, x: float, y: float, tol: float = DEFAULT_TOL_1D) -> QuadratureResult:
    """``int_x^y beta(z, y) / P_i(z) dz``."""
    dyn = _dyn(config)
    if x == y:
        return QuadratureResult(0.0, 0.0, 0)
    _check_no_root_between(dyn, x, y)
    log_end = _log_psi_limit(dyn, y, 0.5 * (x + y))
    if log_end == math.inf:
        return QuadratureResult(0.0, 0.0, 0)
    if log_end == -math.inf:
        raise OutOfDomain(f"I_{i} diverges at y={y}")
    val, err, n = integrate_rows(_beta_gap(dyn, i, log_end), [x], [y], rtol=tol, rows=1)
    return QuadratureResult(float(val[0]), float(err[0]), n)


def _pair_kernel(dyn: Dynamics, outer_state: int):
    """``beta(u, w) / P_inner(w)`` with ``u`` the outer variable."""
    inner_state = 1 - outer_state

    def inner(u: Node, w: Node):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            lu = dyn.log_Psi(u.anchor, u.offset, "limit")
            lw = dyn.log_Psi(w.anchor, w.offset, "limit")
            v = np.exp(lu - lw) / dyn.gap(inner_state, w.anchor, w.offset)
        return _drop_root_nodes(v, _on_root(dyn, w) | _on_root(dyn, u))

    def outer(u: Node):
        with np.errstate(divide="ignore"):
            v = 1.0 / dyn.gap(outer_state, u.anchor, u.offset)
        return _drop_root_nodes(v, _on_root(dyn, u))

    return outer, inner


def _iterated(dyn: Dynamics, outer_state: int, x: float, y: float, end: float, tol: float) -> QuadratureResult:
    """``int_x^y dz/P_s(z) int_z^end beta(z, w)/P_{1-s}(w) dw`` for outer state ``s``."""
    if x == y:
        return QuadratureResult(0.0, 0.0, 0)
    outer, inner = _pair_kernel(dyn, outer_state)
    return integrate_iterated(outer, inner, [x], [y], end, tol=tol, inner_tol=max(tol * 1e-2, 1e-14))


def J_integral(i: int, config, x: float, y: float, tol: float = DEFAULT_TOL_2D) -> QuadratureResult:
    """Triangle integral: ``J_i = int_x^y dz_i/P_i int_{z_i}^y beta(z_i, z_j)/P_j dz_j``."""
    dyn = _dyn(config)
    if x == y:
        return QuadratureResult(0.0, 0.0, 0)
    _check_no_root_between(dyn, x, y)
    return _iterated(dyn, i, x, y, y, tol)


def _inner_single(dyn: Dynamics, outer_state: int, x: float, end: float, tol: float) -> QuadratureResult:
    """``int_x^end beta(x, w)/P_{1-s}(w) dw``; at ``x == end`` its limit ``1/lambda_{1-s}``."""
    if x == end:
        return QuadratureResult(1.0 / dyn.rates[1 - outer_state], 0.0, 0)
    _, inner = _pair_kernel(dyn, outer_state)
    ux = Node(np.array([[x]]), np.array([[0.0]]))
    val, err, n = integrate_rows(lambda w: inner(ux, w), [x], [end], rtol=tol, rows=1)
    return QuadratureResult(float(val[0]), float(err[0]), n)


def _split_iterated(dyn: Dynamics, outer_state: int, x: float, y: float, end: float, tol: float) -> QuadratureResult:
    """Iterated integral with the outer range split at the inner endpoint."""
    lo, hi = min(x, y), max(x, y)
    if lo < end < hi:
        return _iterated(dyn, outer_state, x, end, end, tol) + _iterated(dyn, outer_state, end, y, end, tol)
    return _iterated(dyn, outer_state, x, y, end, tol)


# ---------------------------------------------------------------------------
# mean passage times

@dataclass(frozen=True)
class MeanPassage:
    x: float
    y: float
    m0: float
    m1: float
    case_tag: str
    variant: str
    components: dict = field(default_factory=dict)
    error0: float = 0.0
    error1: float = 0.0
    note: Optional[str] = None

    def as_tuple(self) -> tuple:
        return self.m0, self.m1


@dataclass(frozen=True)
class _Geometry:
    A: float
    B: float
    floor: float
    prefix: str


def upper_geometry(dyn: Dynamics) -> Optional[_Geometry]:
    reg = dyn.regime
    if reg.tag in (RegimeTag.CASE_A, RegimeTag.CASE_B_UPPER):
        return _Geometry(reg.wells1[-1], reg.wells0[-1], reg.wells1[1], "upper")
    if reg.tag in (RegimeTag.CASE_C, RegimeTag.SINGLE_WELL_HIGH, RegimeTag.SINGLE_WELL_LOW):
        return _Geometry(reg.wells1[0], reg.wells0[0], -math.inf, "merged")
    return None


def _upper(dyn: Dynamics, g: _Geometry, x: float, y: float, variant: str, tol: float) -> MeanPassage:
    lam0, lam1 = dyn.rates.lambda0, dyn.rates.lambda1
    Lam = lam0 + lam1
    A, B = g.A, g.B
    if x < y:
        if y < A:
            kind = "below"
        elif y < B:
            kind = "rise"
        else:
            raise InfiniteMean(f"level {y} above the attracting point {B} is never reached from {x}")
    else:
        if y > B:
            kind = "above"
        elif y > A:
            kind = "fall"
        else:
            raise InfiniteMean(f"level {y} at or below the attracting point {A} is never reached from {x}")
    tag = f"{g.prefix}:{kind}"
    note = None
    if kind in ("below", "above"):
        I0, I1 = I_integral(0, dyn, x, y, tol * 1e-2), I_integral(1, dyn, x, y, tol * 1e-2)
        J0, J1 = J_integral(0, dyn, x, y, tol), J_integral(1, dyn, x, y, tol)
        m0 = I0.value + Lam * J0.value
        m1 = I1.value + Lam * J1.value
        comps = {"I0": I0, "I1": I1, "J0": J0, "J1": J1}
        e0 = I0.error_estimate + Lam * J0.error_estimate
        e1 = I1.error_estimate + Lam * J1.error_estimate
    elif variant == "derived":
        if kind == "rise":
            R = _split_iterated(dyn, 0, x, y, A, tol)
            inner = _inner_single(dyn, 0, x, A, tol * 1e-2)
            m0 = Lam * R.value
            m1 = m0 - (1.0 - Lam * inner.value) / lam0
            e0 = Lam * R.error_estimate
            e1 = e0 + Lam * inner.error_estimate / lam0
        else:
            R = _split_iterated(dyn, 1, x, y, B, tol)
            inner = _inner_single(dyn, 1, x, B, tol * 1e-2)
            m1 = Lam * R.value
            m0 = m1 - (1.0 - Lam * inner.value) / lam1
            e1 = Lam * R.error_estimate
            e0 = e1 + Lam * inner.error_estimate / lam1
        comps = {"R": R, "inner": inner}
    else:
        if kind == "rise":
            if x < A < y:
                raise AmbiguousCase("printed rise formula is undefined when x < A < y")
            I0 = I_integral(0, dyn, x, y, tol * 1e-2)
            J0, J1 = J_integral(0, dyn, x, y, tol), J_integral(1, dyn, x, y, tol)
            m0 = (1.0 + lam0 / lam1) * I0.value + Lam * J0.value
            m1 = 1.0 / lam1 + Lam * J1.value
            comps = {"I0": I0, "J0": J0, "J1": J1}
            e0 = (1.0 + lam0 / lam1) * I0.error_estimate + Lam * J0.error_estimate
            e1 = Lam * J1.error_estimate
        else:
            if x > B:
                raise AmbiguousCase("printed fall formula is undefined when x > B")
            I1 = I_integral(1, dyn, x, B, tol * 1e-2)
            J0, J1 = J_integral(0, dyn, x, B, tol), J_integral(1, dyn, x, B, tol)
            m0 = 1.0 / lam0 + Lam * J0.value
            m1 = (1.0 + lam0 / lam1) * I1.value + Lam * J1.value
            comps = {"I1": I1, "J0": J0, "J1": J1}
            e0 = Lam * J0.error_estimate
            e1 = (1.0 + lam0 / lam1) * I1.error_estimate + Lam * J1.error_estimate
            if y != B:
                note = "printed fall formula evaluates at the attracting point B, not at y"
    negative = m0 < -e0 - 1e-12 or m1 < -e1 - 1e-12
    if negative and variant == "printed":
        # kept for comparison only; report the raw value rather than hide it
        extra = "printed formula gives a negative time"
        note = f"{note}; {extra}" if note else extra
        return MeanPassage(x, y, m0, m1, tag, variant, comps, e0, e1, note)
    if negative:
        raise InternalConsistencyError(f"negative mean passage time ({m0}, {m1}) in case {tag}")
    return MeanPassage(x, y, max(m0, 0.0), max(m1, 0.0), tag, variant, comps, e0, e1, note)


def mean_passage(config, x: float, y: float, variant: str = "derived",
                 tol: float = DEFAULT_TOL_2D) -> MeanPassage:
    """Mean first-passage times ``(m0, m1)`` from ``x`` to level ``y``."""
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    dyn = _dyn(config)
    x, y = float(x), float(y)
    if x == y:
        return MeanPassage(x, y, 0.0, 0.0, "trivial", variant)
    g = upper_geometry(dyn)
    if g is not None and x > g.floor and y > g.floor:
        return _upper(dyn, g, x, y, variant, tol)
    mirror = dyn.mirrored()
    gm = upper_geometry(mirror)
    if gm is not None and -x > gm.floor and -y > gm.floor:
        r = _upper(mirror, gm, -x, -y, variant, tol)
        comps = {f"mirror:{k}": v for k, v in r.components.items()}
        tag = r.case_tag.replace("upper:", "lower:")
        return MeanPassage(x, y, r.m1, r.m0, tag, variant, comps, r.error1, r.error0, r.note)
    raise AmbiguousCase(
        f"no closed form for x={x}, y={y} in regime {dyn.regime.tag.value}"
    )


# ---------------------------------------------------------------------------
# residual checks

def _richardson_derivative(fn, x: float, h: float):
    def central(step):
        return (np.asarray(fn(x + step)) - np.asarray(fn(x - step))) / (2.0 * step)
    d1, d2 = central(h), central(h / 2.0)
    return (4.0 * d2 - d1) / 3.0


def mean_passage_ode_residual(config, x: float, y: float, h: float = 1e-4,
                              variant: str = "derived", tol: float = 1e-12) -> tuple:
    """Both rows of ``(Lambda + L) m + 1`` at ``x`` by Richardson-extrapolated central differences."""
    dyn = _dyn(config)
    m = lambda z: np.array(mean_passage(dyn, z, y, variant, tol).as_tuple())
    dm = _richardson_derivative(m, x, h)
    m0, m1 = m(x)
    l0, l1 = dyn.rates.lambda0, dyn.rates.lambda1
    g0, g1 = float(dyn.gap(0, x)), float(dyn.gap(1, x))
    r0 = g0 * dm[0] - l0 * m0 + l0 * m1 + 1.0
    r1 = g1 * dm[1] + l1 * m0 - l1 * m1 + 1.0
    return float(r0), float(r1)


def mean_passage_v_residual(config, x: float, y: float, h: float = 1e-3,
                            variant: str = "derived", tol: float = 1e-12) -> float:
    """Residual of ``v0' = psi v0 + Lam / P1`` with ``v0 = P0 dm0/dx`` from finite differences."""
    dyn = _dyn(config)
    Lam = dyn.rates.total

    def v0(z):
        d = _richardson_derivative(lambda s: mean_passage(dyn, s, y, variant, tol).m0, z, h / 4.0)
        return float(dyn.gap(0, z)) * float(d)

    dv = _richardson_derivative(v0, x, h)
    return float(dv - dyn.psi_small(x) * v0(x) - Lam / float(dyn.gap(1, x)))


def exit_prob_residual(config, x: float, h: float = 1e-4, tol: float = 1e-13) -> tuple:
    """Both rows of ``(Lambda + L) p`` at ``x`` (target 0)."""
    dyn = _dyn(config)
    xs = np.array([x - h, x + h, x - h / 2, x + h / 2, x])
    res = exit_prob_upper(dyn, xs, tol)
    P = np.stack([res.p0, res.p1], axis=1)
    d1 = (P[1] - P[0]) / (2 * h)
    d2 = (P[3] - P[2]) / h
    dp = (4.0 * d2 - d1) / 3.0
    p0, p1 = P[4]
    l0, l1 = dyn.rates.lambda0, dyn.rates.lambda1
    r0 = float(dyn.gap(0, x)) * dp[0] - l0 * p0 + l0 * p1
    r1 = float(dyn.gap(1, x)) * dp[1] + l1 * p0 - l1 * p1
    return float(r0), float(r1)


# ---------------------------------------------------------------------------
# batch interface

def batch_rows(config, request: dict) -> list:
    """Rows ``(x, q0, q1, err0, err1, case_tag)`` for a request ``{xs, y, quantity}``."""
    dyn = _dyn(config)
    if not isinstance(request, dict) or not isinstance(request.get("xs"), list) or not request["xs"]:
        raise ConfigError("batch request needs a nonempty list 'xs'")
    quantity = request.get("quantity", "exit_prob")
    try:
        xs = [float(v) for v in request["xs"]]
    except (TypeError, ValueError):
        raise ConfigError("'xs' must hold numbers") from None
    if quantity == "mfpt" and not isinstance(request.get("y"), (int, float)):
        raise ConfigError("mfpt batch request needs a numeric 'y'")
    rows = []
    if quantity == "exit_prob":
        res = exit_prob_upper(dyn, xs)
        for k, xv in enumerate(xs):
            rows.append((xv, float(res.p0[k]), float(res.p1[k]), float(res.err0[k]), float(res.err1[k]), "G0"))
    elif quantity == "mfpt":
        y = float(request["y"])
        variant = request.get("variant", "derived")
        for xv in xs:
            r = mean_passage(dyn, xv, y, variant)
            rows.append((xv, r.m0, r.m1, r.error0, r.error1, r.case_tag))
    else:
        raise ConfigError(f"unknown quantity {quantity!r}")
    return rows
