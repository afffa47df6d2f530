"""Stationary densities on an invariant attractor ``G = (a, b)``.

    pi0 = C0 / (Psi (c0 - U')),     pi1 = C1 / (Psi (U' - c1))

with ``C0``, ``C1`` fixed separately by the state masses ``lambda1/Lam`` and
``lambda0/Lam``.  Zero net flux, ``(c0 - U') pi0 + (c1 - U') pi1 = 0``, then
holds only if ``C0 = C1``, which is checked rather than imposed.

``Psi`` is only defined up to a constant factor, so the normalisers are
reported in log form too; the densities themselves do not depend on it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import GeometryError, InternalConsistencyError, WrongRegime
from .flow import Dynamics
from .passage import exit_prob_upper
from .potential import RegimeTag
from .quadrature import DEFAULT_TOL_1D, Integrand1D, Node, QuadratureResult, integrate_endpoint_singular, integrate_rows


def _dyn(config) -> Dynamics:
    return config if isinstance(config, Dynamics) else config.dynamics


@dataclass(frozen=True)
class Normalizers:
    C0: float
    C1: float
    log_C0: float
    log_C1: float
    shift: float  # log Psi reference used for scaling
    integral0: QuadratureResult  # int exp(shift - log Psi) / (c0 - U')
    integral1: QuadratureResult  # int exp(shift - log Psi) / (U' - c1)

    @property
    def zero_flux_mismatch(self) -> float:
        """Relative difference of C0 and C1 (0 for an exactly stationary pair)."""
        return abs(math.expm1(self.log_C0 - self.log_C1))


@dataclass(frozen=True)
class InvariantDensity:
    interval: tuple
    grid: np.ndarray
    pi0: np.ndarray
    pi1: np.ndarray
    normalizers: Normalizers

    @property
    def C0(self) -> float:
        return self.normalizers.C0

    @property
    def C1(self) -> float:
        return self.normalizers.C1


def resolve_attractor(config, G=None) -> tuple:
    """The attractor ``(a, b)`` named by ``G`` (a region name or an interval)."""
    dyn = _dyn(config)
    attractors = dyn.regime.regions.attractors()
    if not attractors:
        raise WrongRegime(f"regime {dyn.regime.tag.value} has no invariant attractor")
    if G is None:
        if len(attractors) > 1:
            return attractors["g_plus"]
        return next(iter(attractors.values()))
    if isinstance(G, str):
        key = {"G+": "g_plus", "G-": "g_minus", "G": "g_merged"}.get(G, G)
        if key not in attractors:
            raise WrongRegime(f"{G} is not an attractor of regime {dyn.regime.tag.value}")
        return attractors[key]
    a, b = float(G[0]), float(G[1])
    for iv in attractors.values():
        if abs(iv[0] - a) <= 1e-9 * max(1.0, abs(a)) and abs(iv[1] - b) <= 1e-9 * max(1.0, abs(b)):
            return iv
    raise WrongRegime(f"({a}, {b}) is not an invariant attractor of regime {dyn.regime.tag.value}")


def _edge_exponents(dyn: Dynamics, a: float, b: float) -> tuple:
    ka = abs(float(dyn.spec.curvature(a)))
    kb = abs(float(dyn.spec.curvature(b)))
    l0, l1 = dyn.rates.lambda0, dyn.rates.lambda1
    # pi0 vanishes at a and blows up (integrably) at b; pi1 the other way round
    return (l1 / ka, l0 / kb - 1.0), (l1 / ka - 1.0, l0 / kb)


def _log_scaled_inv_psi(dyn: Dynamics, node: Node, shift: float) -> np.ndarray:
    return shift - dyn.log_Psi(node.anchor, node.offset)


def normalizers(config, G=None, tol: float = DEFAULT_TOL_1D) -> Normalizers:
    dyn = _dyn(config)
    a, b = resolve_attractor(dyn, G)
    l0, l1 = dyn.rates.lambda0, dyn.rates.lambda1
    Lam = l0 + l1
    grid = a + (b - a) * np.linspace(0.02, 0.98, 49)
    shift = float(np.min(dyn.log_Psi(grid)))
    e0, e1 = _edge_exponents(dyn, a, b)

    def f0(node):
        return np.exp(_log_scaled_inv_psi(dyn, node, shift)) / dyn.gap(0, node.anchor, node.offset)

    def f1(node):
        return -np.exp(_log_scaled_inv_psi(dyn, node, shift)) / dyn.gap(1, node.anchor, node.offset)

    q0 = integrate_endpoint_singular(Integrand1D(f0, a, b, e0, node_aware=True), tol)
    q1 = integrate_endpoint_singular(Integrand1D(f1, a, b, e1, node_aware=True), tol)
    if not (q0.value > 0 and q1.value > 0):
        raise InternalConsistencyError("normalising integrals must be positive")
    log_C0 = math.log(l1 / Lam) - math.log(q0.value) + shift
    log_C1 = math.log(l0 / Lam) - math.log(q1.value) + shift
    C0 = math.exp(log_C0) if log_C0 < 700 else math.inf
    C1 = math.exp(log_C1) if log_C1 < 700 else math.inf
    return Normalizers(C0, C1, log_C0, log_C1, shift, q0, q1)


def logit_grid(a: float, b: float, n: int = 400, span: float = 12.0) -> np.ndarray:
    """``n`` points ``a + (b - a) sigmoid(u)`` with ``u`` uniform on ``[-span, span]``."""
    u = np.linspace(-span, span, n)
    L = b - a
    return np.where(u < 0, a + L / (1.0 + np.exp(-u)), b - L / (1.0 + np.exp(u)))


def chebyshev_grid(a: float, b: float, n: int = 400) -> np.ndarray:
    k = np.arange(1, n + 1)
    return 0.5 * (a + b) - 0.5 * (b - a) * np.cos((2 * k - 1) * np.pi / (2 * n))


def _densities(dyn: Dynamics, norm: Normalizers, anchor, offset=0.0):
    lp = dyn.log_Psi(anchor, offset)
    pi0 = np.exp(norm.log_C0 - lp) / dyn.gap(0, anchor, offset)
    pi1 = -np.exp(norm.log_C1 - lp) / dyn.gap(1, anchor, offset)
    return pi0, pi1


def stationary_density(config, G=None, grid=None, n: int = 400,
                       tol: float = DEFAULT_TOL_1D) -> InvariantDensity:
    """Densities ``pi0``, ``pi1`` on ``grid`` (default: a 400-point logit grid)."""
    dyn = _dyn(config)
    a, b = resolve_attractor(dyn, G)
    grid = logit_grid(a, b, n) if grid is None else np.asarray(grid, dtype=float)
    if np.any((grid <= a) | (grid >= b)):
        raise GeometryError("grid must lie strictly inside the attractor")
    norm = normalizers(dyn, (a, b), tol)
    pi0, pi1 = _densities(dyn, norm, grid)
    return InvariantDensity((a, b), grid, pi0, pi1, norm)


def density_at(config, density_or_norm, x):
    """Evaluate ``(pi0, pi1)`` at arbitrary interior points."""
    dyn = _dyn(config)
    norm = density_or_norm.normalizers if isinstance(density_or_norm, InvariantDensity) else density_or_norm
    return _densities(dyn, norm, np.asarray(x, dtype=float))


def flux_identity_residual(config, density: InvariantDensity) -> float:
    """``max |(c0 - U') pi0 + (c1 - U') pi1| / max(pi0, pi1)``."""
    dyn = _dyn(config)
    g = density.grid
    flux = dyn.gap(0, g) * density.pi0 + dyn.gap(1, g) * density.pi1
    return float(np.max(np.abs(flux)) / max(density.pi0.max(), density.pi1.max()))


def _central(fvals: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Three-point derivative on a possibly nonuniform grid (interior points)."""
    h1 = s[1:-1] - s[:-2]
    h2 = s[2:] - s[1:-1]
    return (h1 ** 2 * fvals[2:] - h2 ** 2 * fvals[:-2] + (h2 ** 2 - h1 ** 2) * fvals[1:-1]) / (h1 * h2 * (h1 + h2))


def fokker_planck_residual(config, density: InvariantDensity, coordinate: str = "logit",
                           C0_factor: float = 1.0) -> tuple:
    """Max absolute residuals of both stationary Fokker-Planck rows on the interior grid.

    The fluxes ``F_i = (c_i - U') pi_i`` are differentiated by central
    differences.  With ``coordinate="logit"`` (default) the difference is taken
    of ``log |F_i|`` in ``u = log((x - a)/(b - x))``, where the power-law ends
    of the densities become straight lines; ``"x"`` differences ``F_i``
    directly in ``x``.  ``C0_factor`` rescales ``pi0`` (sensitivity probe).
    """
    dyn = _dyn(config)
    a, b = density.interval
    x = density.grid
    pi0 = density.pi0 * C0_factor
    pi1 = density.pi1
    F0 = dyn.gap(0, x) * pi0
    F1 = dyn.gap(1, x) * pi1
    l0, l1 = dyn.rates.lambda0, dyn.rates.lambda1
    if coordinate == "logit":
        u = np.log(x - a) - np.log(b - x)
        dudx = (b - a) / ((x - a) * (b - x))
        dF0 = F0[1:-1] * _central(np.log(np.abs(F0)), u) * dudx[1:-1]
        dF1 = F1[1:-1] * _central(np.log(np.abs(F1)), u) * dudx[1:-1]
    elif coordinate == "x":
        dF0 = _central(F0, x)
        dF1 = _central(F1, x)
    else:
        raise ValueError("coordinate must be 'logit' or 'x'")
    p0, p1 = pi0[1:-1], pi1[1:-1]
    r0 = -dF0 - l0 * p0 + l1 * p1
    r1 = -dF1 + l0 * p0 - l1 * p1
    return float(np.max(np.abs(r0))), float(np.max(np.abs(r1)))


def bin_masses(config, G, edges, tol: float = DEFAULT_TOL_1D) -> np.ndarray:
    """Probability of each bin per state, shape ``(2, len(edges) - 1)``."""
    dyn = _dyn(config)
    a, b = resolve_attractor(dyn, G)
    edges = np.asarray(edges, dtype=float)
    norm = normalizers(dyn, (a, b), tol)
    n = edges.size - 1
    out = np.empty((2, n))
    for i in range(2):
        f = lambda node, i=i: _densities(dyn, norm, node.anchor, node.offset)[i]
        vals, _, _ = integrate_rows(f, edges[:-1], edges[1:], rtol=tol, atol=1e-15, rows=n)
        out[i] = vals
    return out


def long_run_mixture(config, x: float, i: int) -> dict:
    """Weights of the two attractor measures for a start in the metastable interval.

    A derived diagnostic: the path settles in ``G+`` with the exit probability
    through the upper end and in ``G-`` otherwise.
    """
    dyn = _dyn(config)
    if dyn.regime.tag is not RegimeTag.CASE_A:
        raise WrongRegime("the mixture diagnostic needs the two-attractor regime")
    p = exit_prob_upper(dyn, x)
    w = float(p.p0[0] if i == 0 else p.p1[0])
    return {"g_plus": w, "g_minus": 1.0 - w}
