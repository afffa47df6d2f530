"""Independent numerical routes used as oracles by the tests.

None of these touch the rectifying map or the tanh-sinh rule: the switching
weight is obtained by integrating ``psi = lambda0/P0 + lambda1/P1`` directly,
and integrals go through scipy or plain composite rules.
"""
import math

import numpy as np
from numpy.polynomial import Chebyshev
from scipy.integrate import quad, simpson

from telewell.invariant import normalizers, resolve_attractor


def gaps(cfg):
    c0, c1 = cfg.velocities.c0, cfg.velocities.c1
    return lambda z: c0 - (z ** 3 - z), lambda z: c1 - (z ** 3 - z)


def beta_oracle(cfg, poles=()):
    """beta(z, y) = exp(-int_z^y psi) with psi integrated directly by scipy.

    ``poles`` lists ``(state, root)`` pairs where a gap vanishes near the
    integration range; their simple-pole parts are integrated analytically.
    """
    P0, P1 = gaps(cfg)
    rates = (cfg.rates.lambda0, cfg.rates.lambda1)
    # P_i'(root) = -U''(root)
    parts = [(rates[i] / -(3 * r * r - 1), r) for i, r in poles]
    psi = lambda z: rates[0] / P0(z) + rates[1] / P1(z)
    smooth = lambda z: psi(z) - sum(k / (z - r) for k, r in parts)

    def beta(z, y):
        logs = sum(k * math.log((y - r) / (z - r)) for k, r in parts)
        return math.exp(-quad(smooth, z, y, epsabs=1e-15, epsrel=1e-12)[0] - logs)

    return beta


def end_substituted_quad(f, a, b, alpha, beta):
    """int_a^b f for f ~ (x - a)^alpha (b - x)^beta.

    Near each end the substitution dist = u^(1/(1 + exponent)) makes the
    integrand smooth; ``f(end, offset)`` takes the exact distance.
    """
    m = 0.5 * (a + b)
    total = 0.0
    for end, sign, e in ((a, 1.0, alpha), (b, -1.0, beta)):
        p = 1.0 / (1.0 + e)
        g = lambda u: f(end, sign * u ** p) * p * u ** (p - 1.0) if u > 0 else 0.0
        total += quad(g, 0.0, abs(m - end) ** (1.0 / p), epsabs=1e-14, epsrel=1e-12, limit=400)[0]
    return total


def masses_by_quad(cfg, G=None):
    """State masses from scipy quad, independent of the tanh-sinh rule."""
    dyn = cfg.dynamics
    a, b = resolve_attractor(cfg, G)
    norm = normalizers(cfg, (a, b))
    ka, kb = abs(3 * a * a - 1), abs(3 * b * b - 1)
    l0, l1 = cfg.rates.lambda0, cfg.rates.lambda1
    powers = ((l1 / ka, l0 / kb - 1), (l1 / ka - 1, l0 / kb))
    logs = (norm.log_C0, norm.log_C1)
    out = []
    for i, (al, be) in enumerate(powers):
        def f(anchor, offset, i=i):
            lp = float(dyn.log_Psi(anchor, offset))
            return math.exp(logs[i] - lp) / abs(float(dyn.gap(i, anchor, offset)))
        out.append(end_substituted_quad(f, a, b, al, be))
    return out


def log_weight_antiderivative(cfg, lo, hi, degree=80):
    """Chebyshev antiderivative ``G`` of ``-psi`` on ``[lo, hi]``: beta(z0, z1) = exp(G(z1) - G(z0))."""
    P0, P1 = gaps(cfg)
    l0, l1 = cfg.rates.lambda0, cfg.rates.lambda1
    psi = Chebyshev.interpolate(lambda z: l0 / P0(z) + l1 / P1(z), degree, domain=[lo, hi])
    return (-psi).integ()


def dense_grid_J(cfg, i, x, y, n=2001):
    """``J_i(x, y)`` by composite Simpson on an ``n x n`` grid of the mapped triangle.

    The triangle ``x < z_i < z_j < y`` is mapped to the unit square by
    ``z_i = x + (y - x) s`` and ``z_j = z_i + (y - z_i) r``.
    """
    P = gaps(cfg)
    Pi, Pj = P[i], P[1 - i]
    G = log_weight_antiderivative(cfg, min(x, y), max(x, y))
    s = np.linspace(0.0, 1.0, n)
    zi = x + (y - x) * s[:, None]
    zj = zi + (y - zi) * s[None, :]
    f = np.exp(G(zj) - G(zi)) / (Pi(zi) * Pj(zj)) * (y - x) * (y - zi)
    return float(simpson(simpson(f, x=s, axis=1), x=s))


def dense_grid_I(cfg, i, x, y, n=2001):
    P = gaps(cfg)
    G = log_weight_antiderivative(cfg, min(x, y), max(x, y))
    z = np.linspace(x, y, n)
    return float(simpson(np.exp(G(y) - G(z)) / P[i](z), x=z))
