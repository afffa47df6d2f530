"""Compiled inner loops: rectifying maps, their inverses and the path simulators.

A flow ``dy/dt = c - U'(y)`` is packed into a float table ``F[i]`` of shape
``(7, m)`` and an int table ``N[i] = (n_real, n_complex)``:

    row 0  real roots of c - U'          row 1  their residues 1/(c - U')'
    row 2  Re of complex roots (Im > 0)  row 3  Im of those roots
    row 4  Re of their residues          row 5  Im of their residues
    row 6  [leading coefficient of U', c, ...]

The "raw" map is the partial-fraction antiderivative of ``1/(c - U')`` without
any additive constant.  It grows by exactly ``t`` along the flow.

Branch ``k`` of a flow is the interval between real roots ``k-1`` and ``k``
(``-inf``/``+inf`` at the ends).  Inside a branch the position is encoded by a
coordinate ``u`` in which the distances to the finite endpoints are exact:

    finite          y = lo + L * sigmoid(u)
    (lo, +inf)      y = lo + exp(u)
    (-inf, hi)      y = hi - exp(-u)
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

#: relative distance to an attracting point at which positions are clamped
EPS_ATTRACT = 1e-13
#: far cut-off (distance from the finite end) on unbounded branches
FAR_DISTANCE = 1e8

_U_CLAMP = math.log((1.0 - EPS_ATTRACT) / EPS_ATTRACT)
_LOG_EPS = math.log(EPS_ATTRACT)
_LOG_FAR = math.log(FAR_DISTANCE)

OUTCOME_RUNNING = 0
OUTCOME_HIT_LOW = 1
OUTCOME_HIT_HIGH = 2
OUTCOME_CENSORED = 3


@njit(cache=True, nogil=True)
def _log_sigmoid(u):
    if u >= 0.0:
        return -math.log1p(math.exp(-u))
    return u - math.log1p(math.exp(u))


@njit(cache=True, nogil=True)
def branch_index(F, N, i, y):
    """Branch containing ``y``; ``-1`` if ``y`` is exactly a real root."""
    nr = N[i, 0]
    k = 0
    while k < nr and F[i, 0, k] < y:
        k += 1
    if k < nr and F[i, 0, k] == y:
        return -1
    return k


@njit(cache=True, nogil=True)
def direction(N, i, k):
    return -1 if (N[i, 0] - k) % 2 == 0 else 1


@njit(cache=True, nogil=True)
def raw_phi(F, N, i, y):
    nr = N[i, 0]
    nc = N[i, 1]
    s = 0.0
    for j in range(nr):
        s += F[i, 1, j] * math.log(abs(y - F[i, 0, j]))
    for j in range(nc):
        dx = y - F[i, 2, j]
        b = F[i, 3, j]
        s += F[i, 4, j] * math.log(dx * dx + b * b) - 2.0 * F[i, 5, j] * math.atan2(-b, dx)
    return s


@njit(cache=True, nogil=True)
def _rest(F, N, i, y, skip_lo, skip_hi):
    """Raw-map terms and the product of gaps for all roots except the branch ends."""
    nr = N[i, 0]
    nc = N[i, 1]
    s = 0.0
    prod = 1.0
    for j in range(nr):
        if j == skip_lo or j == skip_hi:
            continue
        d = y - F[i, 0, j]
        s += F[i, 1, j] * math.log(abs(d))
        prod *= d
    for j in range(nc):
        dx = y - F[i, 2, j]
        b = F[i, 3, j]
        q = dx * dx + b * b
        s += F[i, 4, j] * math.log(q) - 2.0 * F[i, 5, j] * math.atan2(-b, dx)
        prod *= q
    return s, prod


@njit(cache=True, nogil=True)
def y_of_u(F, N, i, k, u):
    nr = N[i, 0]
    if k == 0:
        return F[i, 0, 0] - math.exp(-u)
    if k == nr:
        return F[i, 0, nr - 1] + math.exp(u)
    lo = F[i, 0, k - 1]
    hi = F[i, 0, k]
    L = hi - lo
    if u >= 0.0:
        return hi - L / (1.0 + math.exp(u))
    return lo + L / (1.0 + math.exp(-u))


@njit(cache=True, nogil=True)
def u_of_y(F, N, i, k, y):
    nr = N[i, 0]
    if k == 0:
        return -math.log(F[i, 0, 0] - y)
    if k == nr:
        return math.log(y - F[i, 0, nr - 1])
    lo = F[i, 0, k - 1]
    hi = F[i, 0, k]
    return math.log(y - lo) - math.log(hi - y)


@njit(cache=True, nogil=True)
def phi_u(F, N, i, k, u):
    """Raw map and its ``u``-derivative at coordinate ``u`` of branch ``k``."""
    nr = N[i, 0]
    lead = F[i, 6, 0]
    y = y_of_u(F, N, i, k, u)
    if k == 0:
        s, prod = _rest(F, N, i, y, -1, 0)
        return s + F[i, 1, 0] * (-u), 1.0 / (lead * prod)
    if k == nr:
        s, prod = _rest(F, N, i, y, nr - 1, -1)
        return s + F[i, 1, nr - 1] * u, -1.0 / (lead * prod)
    lo = F[i, 0, k - 1]
    hi = F[i, 0, k]
    L = hi - lo
    logL = math.log(L)
    s, prod = _rest(F, N, i, y, k - 1, k)
    s += F[i, 1, k - 1] * (logL + _log_sigmoid(u)) + F[i, 1, k] * (logL + _log_sigmoid(-u))
    return s, 1.0 / (L * lead * prod)


@njit(cache=True, nogil=True)
def u_bounds(N, i, k):
    """(attracting-end bound, repelling/far-end bound) in ``u``."""
    nr = N[i, 0]
    if k == 0:
        return -_LOG_EPS, -_LOG_FAR
    if k == nr:
        return _LOG_EPS, _LOG_FAR
    d = direction(N, i, k)
    return d * _U_CLAMP, -d * _U_CLAMP


@njit(cache=True, nogil=True)
def solve_u(F, N, i, k, target, u0, f0):
    """Coordinate ``u`` in branch ``k`` with raw map equal to ``target``.

    ``u0`` is a point with raw value ``f0 <= target`` (pass ``nan`` to start from
    the repelling bound).  Returns ``(u, saturated)`` where ``saturated`` is
    ``1`` at the attracting clamp and ``-1`` at the far/repelling bound.
    """
    ua, ur = u_bounds(N, i, k)
    fa, _ = phi_u(F, N, i, k, ua)
    if target >= fa:
        return ua, 1
    if math.isnan(u0):
        u0 = ur
        f0, _ = phi_u(F, N, i, k, ur)
        if target <= f0:
            return ur, -1
    # bracket [lo, hi] in u with g(lo) <= 0 <= g(hi) in the sense of raw - target
    # growing toward the attracting bound
    if ua > u0:
        a, b = u0, ua
        ga, gb = f0 - target, fa - target
    else:
        a, b = ua, u0
        ga, gb = fa - target, f0 - target
    u = u0
    g, dg = phi_u(F, N, i, k, u)
    g -= target
    for _ in range(200):
        if g == 0.0:
            break
        # keep the bracket tight
        if (g < 0.0) == (ga < 0.0):
            a, ga = u, g
        else:
            b, gb = u, g
        step_ok = dg != 0.0 and math.isfinite(dg)
        if step_ok:
            un = u - g / dg
            if not (min(a, b) < un < max(a, b)):
                step_ok = False
        if not step_ok:
            un = 0.5 * (a + b)
        if abs(un - u) <= 4e-16 * max(1.0, abs(u)):
            u = un
            break
        u = un
        g, dg = phi_u(F, N, i, k, u)
        g -= target
        if abs(b - a) <= 4e-16 * max(1.0, abs(u)):
            break
    return u, 0


@njit(cache=True, nogil=True)
def advance(F, N, i, y, t):
    """Position after time ``t`` on flow ``i`` from ``y``; also the saturation flag."""
    if t <= 0.0:
        return y, 0
    k = branch_index(F, N, i, y)
    if k < 0:
        return y, 0
    u0 = u_of_y(F, N, i, k, y)
    f0, _ = phi_u(F, N, i, k, u0)
    u, sat = solve_u(F, N, i, k, f0 + t, u0, f0)
    ynew = y_of_u(F, N, i, k, u)
    # never step backwards because of rounding
    d = direction(N, i, k)
    if (ynew - y) * d < 0.0:
        ynew = y
    return ynew, sat


@njit(cache=True, nogil=True)
def reach(F, N, i, x, y):
    """Time to go from ``x`` to ``y`` along flow ``i`` (``inf`` if never)."""
    if x == y:
        return 0.0
    k = branch_index(F, N, i, x)
    if k < 0:
        return math.inf
    ky = branch_index(F, N, i, y)
    if ky != k:
        return math.inf
    d = direction(N, i, k)
    if (y - x) * d < 0.0:
        return math.inf
    fx, _ = phi_u(F, N, i, k, u_of_y(F, N, i, k, x))
    fy, _ = phi_u(F, N, i, k, u_of_y(F, N, i, k, y))
    return max(fy - fx, 0.0)


# ---------------------------------------------------------------------------
# lane simulators; every lane owns one row of the exponential matrix ``E`` and
# stops (unfinished) when the row runs out, so callers can refill and resume

@njit(cache=True, nogil=True)
def first_exit_lanes(F, N, rates, E, lanes, pos, st, time, outcome, lo_target, hi_target, t_max):
    """Run lanes until the path leaves ``(lo_target, hi_target)`` or ``t_max``.

    ``outcome`` becomes 1/2 for a hit of the low/high target (``time`` is the
    exact hitting time) and 3 for censoring.  Lanes left at 0 need more draws.
    """
    K = E.shape[1]
    for r in range(lanes.shape[0]):
        j = lanes[r]
        y = pos[j]
        i = st[j]
        t = time[j]
        for m in range(K):
            tau = E[r, m] / rates[i]
            remaining = t_max - t
            k = branch_index(F, N, i, y)
            dt = min(tau, remaining)
            if k >= 0:
                d = direction(N, i, k)
                target = hi_target if d > 0 else lo_target
                rt = reach(F, N, i, y, target)
                if rt <= dt:
                    t += rt
                    y = target
                    outcome[j] = OUTCOME_HIT_HIGH if d > 0 else OUTCOME_HIT_LOW
                    break
            if tau >= remaining:
                y, _ = advance(F, N, i, y, remaining)
                t = t_max
                outcome[j] = OUTCOME_CENSORED
                break
            y, _ = advance(F, N, i, y, tau)
            t += tau
            i = 1 - i
        pos[j] = y
        st[j] = i
        time[j] = t


@njit(cache=True, nogil=True)
def horizon_lanes(F, N, rates, E, lanes, pos, st, time, done, ymin, ymax, nswitch,
                  horizon, shortcut_pos):
    """Run lanes up to ``horizon`` tracking the range of positions and switches.

    If ``shortcut_pos`` is finite it must be the no-switch endpoint from the
    common starting point; lanes whose first holding time exceeds the horizon
    take it without solving.
    """
    K = E.shape[1]
    use_short = math.isfinite(shortcut_pos)
    for r in range(lanes.shape[0]):
        j = lanes[r]
        y = pos[j]
        i = st[j]
        t = time[j]
        lo = ymin[j]
        hi = ymax[j]
        for m in range(K):
            tau = E[r, m] / rates[i]
            remaining = horizon - t
            if tau >= remaining:
                if use_short and t == 0.0:
                    y = shortcut_pos
                else:
                    y, _ = advance(F, N, i, y, remaining)
                t = horizon
                done[j] = True
            else:
                y, _ = advance(F, N, i, y, tau)
                t += tau
                i = 1 - i
                nswitch[j] += 1
            lo = min(lo, y)
            hi = max(hi, y)
            if done[j]:
                break
        pos[j] = y
        st[j] = i
        time[j] = t
        ymin[j] = lo
        ymax[j] = hi


@njit(cache=True, nogil=True)
def _deposit(hist, edge_raw, i, f0, tau, d):
    """Add the time spent in each bin by a segment of raw start ``f0``, length ``tau``."""
    nb = hist.shape[1]
    for b in range(nb):
        if d > 0:
            ta = edge_raw[i, b] - f0
            tb = edge_raw[i, b + 1] - f0
        else:
            ta = edge_raw[i, b + 1] - f0
            tb = edge_raw[i, b] - f0
        ta = min(max(ta, 0.0), tau)
        tb = min(max(tb, 0.0), tau)
        if tb > ta:
            hist[i, b] += tb - ta


@njit(cache=True, nogil=True)
def occupation_lane(F, N, rates, E, state, hist, edges, edge_raw, burn_in, horizon):
    """Exact time-in-bin accumulation for a single path.

    ``state = [position, chain state, time, done]``.  The bins (``edges``) must
    lie inside the branches visited, with ``edge_raw[i]`` the raw map of flow
    ``i`` at the edges (``+inf`` at an attracting edge, ``-inf`` at a repelling
    one).
    """
    y = state[0]
    i = int(state[1])
    t = state[2]
    for m in range(E.shape[0]):
        tau = E[m] / rates[i]
        end = min(t + tau, horizon)
        if end > burn_in:
            if t < burn_in:
                y, _ = advance(F, N, i, y, burn_in - t)
                t = burn_in
            k = branch_index(F, N, i, y)
            if k < 0:
                # resting on a fixed point of this flow
                b = np.searchsorted(edges, y) - 1
                b = min(max(b, 0), hist.shape[1] - 1)
                hist[i, b] += end - t
            else:
                f0, _ = phi_u(F, N, i, k, u_of_y(F, N, i, k, y))
                _deposit(hist, edge_raw, i, f0, end - t, direction(N, i, k))
        y, _ = advance(F, N, i, y, end - t)
        t = end
        if t >= horizon:
            state[3] = 1.0
            break
        i = 1 - i
    state[0] = y
    state[1] = i
    state[2] = t


@njit(cache=True, nogil=True)
def record_path(F, N, rates, E, y, i, horizon, out):
    """Segments ``(t_start, x_start, state, duration)`` of one path into ``out``.

    Returns the number of rows written, or ``-1`` if ``E`` ran out first.
    """
    t = 0.0
    n = 0
    for m in range(E.shape[0]):
        if n >= out.shape[0]:
            return -1
        tau = E[m] / rates[i]
        dur = min(tau, horizon - t)
        out[n, 0] = t
        out[n, 1] = y
        out[n, 2] = i
        out[n, 3] = dur
        n += 1
        y, _ = advance(F, N, i, y, dur)
        t += dur
        if t >= horizon:
            return n
        i = 1 - i
    return -1
