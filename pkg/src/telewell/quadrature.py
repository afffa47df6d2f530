"""Double-exponential (tanh-sinh) quadrature for endpoint-singular integrands.

Abscissae are handed to integrands as :class:`Node` objects, i.e. as an exact
``anchor`` (an interval endpoint) plus a small ``offset``.  Integrands that
need the distance to an endpoint, like ``log|y - root|`` near a root, read it
from the offset without cancellation, even when ``anchor + offset`` rounds to
the endpoint itself.

Everything is vectorised over a batch of intervals ("rows") sharing one
tanh-sinh grid, which makes iterated (triangle) integrals cheap: the inner
integrals for all outer abscissae of a level are done in one batch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import InternalConsistencyError, NonConvergent

T_MAX = 5.5
MIN_LEVELS = 3
MAX_LEVELS = 12
DEFAULT_TOL_1D = 1e-10
DEFAULT_TOL_2D = 1e-8


@dataclass(frozen=True)
class Node:
    """Positions ``anchor + offset`` with the offset kept separately."""

    anchor: np.ndarray
    offset: np.ndarray

    @classmethod
    def at(cls, x) -> "Node":
        x = np.asarray(x, dtype=float)
        return cls(x, np.zeros_like(x))

    @property
    def value(self) -> np.ndarray:
        return self.anchor + self.offset

    @property
    def shape(self):
        return np.broadcast(self.anchor, self.offset).shape

    def reshape(self, *shape) -> "Node":
        a, o = np.broadcast_arrays(self.anchor, self.offset)
        return Node(a.reshape(*shape), o.reshape(*shape))


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    error_estimate: float
    evaluations: int

    def __post_init__(self):
        if not self.error_estimate >= 0:
            raise InternalConsistencyError("negative error estimate")

    def __add__(self, other: "QuadratureResult") -> "QuadratureResult":
        return QuadratureResult(
            self.value + other.value,
            self.error_estimate + other.error_estimate,
            self.evaluations + other.evaluations,
        )

    def scaled(self, k: float) -> "QuadratureResult":
        return QuadratureResult(k * self.value, abs(k) * self.error_estimate, self.evaluations)


@dataclass(frozen=True)
class Integrand1D:
    """An integrand on ``(a, b)`` with optional declared endpoint exponents.

    ``endpoint_behavior`` is either ``"regular"`` or a pair ``(alpha_a,
    alpha_b)`` meaning ``f ~ dist**alpha`` near each end (``None`` for an end
    without a claim).  With ``node_aware`` the evaluator receives a
    :class:`Node`; otherwise a plain array of positions.
    """

    evaluator: Callable
    a: float
    b: float
    endpoint_behavior: Union[str, tuple] = "regular"
    node_aware: bool = False

    def __call__(self, node: Node) -> np.ndarray:
        if self.node_aware:
            return np.asarray(self.evaluator(node), dtype=float)
        return np.asarray(self.evaluator(node.value), dtype=float)


# ---------------------------------------------------------------------------
# grid

def _level_t(level: int) -> np.ndarray:
    """Abscissae in ``t`` first used at ``level`` (step ``2**-level``)."""
    h = 2.0 ** -level
    n = int(math.floor(T_MAX / h))
    j = np.arange(-n, n + 1)
    if level > 0:
        j = j[j % 2 != 0]
    return j * h


def _abscissae(t: np.ndarray):
    """Fraction ``q`` of the interval between node and nearest end, and weight.

    The weight is per unit interval length and per unit ``t`` step.
    """
    s = 0.5 * math.pi * np.sinh(np.abs(t))
    e = np.exp(-2.0 * s)
    q = e / (1.0 + e)
    w = 0.5 * math.pi * np.cosh(t) * 4.0 * e / (1.0 + e) ** 2 * 0.5
    return q, w


_GRID_CACHE: dict = {}


def _grid(level: int):
    if level not in _GRID_CACHE:
        t = _level_t(level)
        q, w = _abscissae(t)
        _GRID_CACHE[level] = (t, q, w)
    return _GRID_CACHE[level]


def _nodes(left: Node, right: Node, length: np.ndarray, t, q):
    """Nodes for each row (leading axis) at tanh-sinh parameters ``t``."""
    right_side = t[None, :] >= 0.0
    la, lo = left.anchor[:, None], left.offset[:, None]
    ra, ro = right.anchor[:, None], right.offset[:, None]
    d = length[:, None] * q[None, :]
    anchor = np.where(right_side, ra, la)
    offset = np.where(right_side, ro - d, lo + d)
    return Node(anchor, offset)


def _as_node(x, rows: int) -> Node:
    if isinstance(x, Node):
        a, o = np.broadcast_arrays(np.asarray(x.anchor, float), np.asarray(x.offset, float))
        a, o = a.reshape(-1), o.reshape(-1)
    else:
        a = np.asarray(x, dtype=float).reshape(-1)
        o = np.zeros_like(a)
    if a.size == 1 and rows > 1:
        a, o = np.full(rows, a[0]), np.full(rows, o[0])
    return Node(a, o)


def _interval_length(left: Node, right: Node) -> np.ndarray:
    same = left.anchor == right.anchor
    return np.where(same, right.offset - left.offset,
                    (right.anchor - left.anchor) + (right.offset - left.offset))


def _finite_sum(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Row sums of ``values * weights``; non-finite values at vanishing weight are dropped."""
    prod = values * weights
    bad = ~np.isfinite(prod)
    if bad.any():
        negligible = weights < 1e-300
        if np.any(bad & ~np.broadcast_to(negligible, prod.shape)):
            raise NonConvergent("integrand is not finite at an interior quadrature node")
        prod = np.where(bad, 0.0, prod)
    return prod.sum(axis=-1)


def integrate_rows(f: Callable, left, right, rtol: float = DEFAULT_TOL_1D, atol: float = 0.0,
                   min_levels: int = MIN_LEVELS, max_levels: int = MAX_LEVELS,
                   rows: Optional[int] = None, raise_on_failure: bool = True):
    """Integrate ``f`` over a batch of oriented intervals ``(left[r], right[r])``.

    ``f(node)`` receives a :class:`Node` of shape ``(rows, m)`` and returns values
    of the same shape.  Returns ``(values, errors, evaluations)``.
    """
    if rows is None:
        rows = max(np.size(getattr(left, "anchor", left)), np.size(getattr(right, "anchor", right)))
    left, right = _as_node(left, rows), _as_node(right, rows)
    length = _interval_length(left, right)
    scale = np.abs(length)
    total = np.zeros(rows)
    prev = None
    err = np.full(rows, np.inf)
    evals = 0
    empty = length == 0.0
    for level in range(max_levels + 1):
        t, q, w = _grid(level)
        node = _nodes(left, right, length, t, q)
        vals = np.asarray(f(node), dtype=float).reshape(rows, t.size)
        evals += vals.size
        weights = np.broadcast_to(w[None, :], vals.shape)
        total = total + _finite_sum(vals, weights)
        h = 2.0 ** -level
        est = total * h * length
        if prev is not None:
            err = np.abs(est - prev)
        prev = est
        if level + 1 >= min_levels:
            ok = (err <= np.maximum(rtol * np.abs(est), atol)) | empty
            if ok.all():
                break
    est = np.where(empty, 0.0, est)
    err = np.where(empty, 0.0, err)
    if raise_on_failure:
        bad = err > np.maximum(rtol * np.abs(est), atol)
        if bad.any():
            raise NonConvergent(
                f"tanh-sinh did not converge in {max_levels} levels "
                f"(worst error {float(np.max(err[bad])):.3g}, value {float(est[bad][0]):.6g})"
            )
    return est, err, evals


def _loglog_slope(integrand: Integrand1D, end: str) -> float:
    a, b = integrand.a, integrand.b
    L = b - a
    d = np.array([1e-7, 1e-9]) * abs(L)
    if end == "a":
        node = Node(np.full(2, a), d)
    else:
        node = Node(np.full(2, b), -d)
    v = np.abs(integrand(node))
    if not np.all(np.isfinite(v)) or np.any(v == 0.0):
        return math.nan
    return float(np.log(v[0] / v[1]) / np.log(d[0] / d[1]))


def check_endpoint_exponents(integrand: Integrand1D, tolerance: float = 0.2) -> None:
    """Compare declared endpoint exponents with a log-log slope estimate."""
    if integrand.endpoint_behavior == "regular":
        return
    for end, alpha in zip(("a", "b"), integrand.endpoint_behavior):
        if alpha is None:
            continue
        if alpha <= -1:
            raise InternalConsistencyError(f"non-integrable exponent {alpha} declared at end {end}")
        slope = _loglog_slope(integrand, end)
        if math.isfinite(slope) and abs(slope - alpha) > tolerance:
            raise InternalConsistencyError(
                f"declared exponent {alpha} at end {end} but observed slope {slope:.3f}"
            )


def integrate_endpoint_singular(integrand: Integrand1D, tol: float = DEFAULT_TOL_1D,
                                atol: float = 0.0) -> QuadratureResult:
    """Integral of ``integrand`` over its open interval to relative tolerance ``tol``."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    check_endpoint_exponents(integrand)
    if integrand.a == integrand.b:
        return QuadratureResult(0.0, 0.0, 0)
    est, err, n = integrate_rows(lambda node: integrand(node), [integrand.a], [integrand.b],
                                 rtol=tol, atol=atol, rows=1)
    return QuadratureResult(float(est[0]), float(err[0]), n)


def integrate_iterated(outer: Callable, inner: Callable, x, y, inner_end,
                       tol: float = DEFAULT_TOL_2D, atol: float = 0.0,
                       inner_tol: Optional[float] = None) -> QuadratureResult:
    """Oriented iterated integral ``int_x^y outer(u) int_u^E inner(u, w) dw du``.

    ``inner_end`` is ``E`` (a float or a scalar :class:`Node`); the inner
    interval is oriented from ``u`` to ``E``.  ``outer(node)`` and
    ``inner(u_node, w_node)`` take :class:`Node` arguments, the latter with
    ``u_node`` of shape ``(rows, 1)``.
    """
    inner_tol = tol * 1e-2 if inner_tol is None else inner_tol
    end = _as_node(inner_end, 1)
    counter = [0]

    def outer_integrand(u: Node):
        shape = u.shape
        uf = u.reshape(-1)
        rows = uf.anchor.size
        vals, _, n = integrate_rows(
            lambda w: inner(Node(uf.anchor[:, None], uf.offset[:, None]), w),
            uf, Node(np.full(rows, end.anchor[0]), np.full(rows, end.offset[0])),
            rtol=inner_tol, atol=atol * 1e-3, rows=rows,
        )
        counter[0] += n
        g = np.asarray(outer(u), dtype=float).reshape(-1)
        prod = np.where((g == 0.0) | (vals == 0.0), 0.0, g * vals)
        return prod.reshape(shape)

    est, err, n = integrate_rows(outer_integrand, x, y, rtol=tol, atol=atol, rows=1)
    value = float(est[0])
    # every inner integral is accurate to inner_tol relative, which bounds
    # their contribution to the outer error
    total_err = float(err[0]) + inner_tol * abs(value)
    return QuadratureResult(value, total_err, n + counter[0])


def integrate_triangle(kernel: Callable, x: float, y: float, orientation: str = "delta0",
                       tol: float = DEFAULT_TOL_2D, node_aware: bool = False) -> QuadratureResult:
    """Integral of ``kernel(z0, z1)`` over a triangle below the anti-diagonal corner ``y``.

    ``delta0``: ``x < z0 < y, z0 < z1 < y`` (outer ``z0``).
    ``delta1``: ``x < z1 < y, z1 < z0 < y`` (outer ``z1``).
    For ``x > y`` the same iterated integral is taken with oriented limits.
    """
    orientation = orientation.lower().replace("δ", "delta").replace("Δ", "delta")
    if orientation not in ("delta0", "delta1"):
        raise ValueError("orientation must be 'delta0' or 'delta1'")
    if x == y:
        return QuadratureResult(0.0, 0.0, 0)

    def k(z0: Node, z1: Node):
        if node_aware:
            return kernel(z0, z1)
        return kernel(z0.value, z1.value)

    if orientation == "delta0":
        inner = lambda u, w: k(u, w)
    else:
        inner = lambda u, w: k(w, u)
    return integrate_iterated(lambda u: np.ones(u.shape), inner, [x], [y], y, tol=tol)


def integrate_square(kernel: Callable, x0: float, x1: float, y0: float, y1: float,
                     tol: float = DEFAULT_TOL_2D) -> QuadratureResult:
    """Plain product-rule double integral of ``kernel(z0, z1)`` over a rectangle."""

    def outer(u: Node):
        shape = u.shape
        uf = u.value.reshape(-1)
        vals, _, _ = integrate_rows(lambda w: kernel(uf[:, None], w.value), np.full(uf.size, y0),
                                    np.full(uf.size, y1), rtol=tol * 1e-2, rows=uf.size)
        return vals.reshape(shape)

    est, err, n = integrate_rows(outer, [x0], [x1], rtol=tol, rows=1)
    return QuadratureResult(float(est[0]), float(err[0]), n)
