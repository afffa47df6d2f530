import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from telewell import QUARTIC, Dynamics, OutOfBranch, OutOfDomain, PoleAtCriticalPoint, RatePair, VelocityPair
from telewell.flow import (
    ATTRACTING,
    OPEN,
    REPELLING,
    branches,
    beta,
    flow_map,
    flow_table_rows,
    log_Psi,
    pattern,
    phi,
    phi_inverse,
    psi_small,
    reach_time,
)


def ode_position(c, x, t):
    """High-accuracy solution of dy/dt = c - U'(y)."""
    sol = solve_ivp(lambda _, y: c - (y ** 3 - y), (0.0, t), [x], method="DOP853", rtol=1e-13, atol=1e-15)
    return float(sol.y[0, -1])


def ode_hitting_time(c, x, y):
    event = lambda _, z: z[0] - y
    event.terminal = True
    sol = solve_ivp(lambda _, z: c - (z ** 3 - z), (0.0, 100.0), [x], method="DOP853",
                    rtol=1e-13, atol=1e-15, events=event)
    return float(sol.t_events[0][0])


def derivative(f, x, h):
    """Five-point central difference, O(h^4)."""
    return (f(x - 2 * h) - 8 * f(x - h) + 8 * f(x + h) - f(x + 2 * h)) / (12 * h)


@pytest.fixture(scope="module")
def dyn():
    return Dynamics(QUARTIC, VelocityPair(0.3, -0.3), RatePair(1.0, 1.0))


def test_branch_layout_three_roots():
    bs = branches(QUARTIC, 0.3)
    assert len(bs) == 4
    b_m, b_0, b_p = bs[1].lo, bs[2].lo, bs[3].lo
    mid = bs[2]
    assert (mid.lo, mid.hi) == (b_0, b_p)
    assert mid.direction == 1 and mid.lo_kind == REPELLING and mid.hi_kind == ATTRACTING
    top = bs[3]
    assert top.direction == -1 and top.lo_kind == ATTRACTING and top.hi_kind == OPEN
    assert math.isinf(top.hi)
    for b in bs:
        lo = b.lo if math.isfinite(b.lo) else b.hi - 2
        hi = b.hi if math.isfinite(b.hi) else b.lo + 2
        ys = np.linspace(lo, hi, 50)[1:-1]
        assert np.all(np.sign(0.3 - QUARTIC.slope(ys)) == b.direction)


def test_branch_layout_single_root():
    bs = branches(QUARTIC, 0.5)
    assert len(bs) == 2
    assert bs[0].direction == 1 and bs[0].hi_kind == ATTRACTING
    assert bs[1].direction == -1 and bs[1].lo_kind == ATTRACTING


def test_phi_closed_form_zero_tilt():
    fm = flow_map(QUARTIC, 0.0, 0.5, reference_point=0.5)
    exact = lambda y: (math.log(y) - 0.5 * math.log(1 - y * y)) - (math.log(0.5) - 0.5 * math.log(0.75))
    for y in (0.01, 0.2, 0.5, 0.77, 0.999):
        assert phi(fm, y) == pytest.approx(exact(y), rel=1e-12, abs=1e-13)


@pytest.mark.parametrize("c, y", [(0.3, 0.1), (0.3, 1.5), (0.3, -0.5), (-0.3, 0.95), (0.5, 0.3), (0.5, 2.0), (-0.5, -3.0)])
def test_phi_reference_and_derivative(c, y):
    fm = flow_map(QUARTIC, c, y)
    assert phi(fm, fm.reference_point) == 0.0
    fd = derivative(lambda z: phi(fm, z), y, 1e-4)
    assert fd * (c - QUARTIC.slope(y)) == pytest.approx(1.0, abs=1e-10)


def test_phi_rejects_points_outside_branch():
    fm = flow_map(QUARTIC, 0.3, 0.5)
    with pytest.raises(OutOfBranch):
        phi(fm, 1.2)


@pytest.mark.parametrize("frac", [0.25, 0.5, 0.75])
def test_phi_inverse_round_trip(frac):
    fm = flow_map(QUARTIC, 0.3, 0.5)
    y = fm.branch.lo + frac * fm.branch.length
    inv = phi_inverse(fm, phi(fm, y))
    assert inv.position == pytest.approx(y, abs=1e-12)
    assert inv.saturated == 0


def test_phi_inverse_saturates_at_attracting_end():
    fm = flow_map(QUARTIC, 0.3, 0.5)
    inv = phi_inverse(fm, 1e6)
    assert inv.saturated == 1
    assert fm.branch.hi - 1e-10 < inv.position < fm.branch.hi


def test_phi_inverse_matches_ode():
    fm = flow_map(QUARTIC, 0.3, 0.5)
    x0 = fm.reference_point
    assert phi_inverse(fm, 1.0).position == pytest.approx(ode_position(0.3, x0, 1.0), abs=1e-10)


def test_pattern_basics(dyn):
    a_plus = dyn.regime.wells1[-1]
    assert pattern(dyn, 0, 0.0, 0.4) == 0.4
    for t in (0.0, 1.0, 100.0):
        assert pattern(dyn, 1, t, a_plus) == a_plus
    assert pattern(dyn, 0, 5.0, 0.5) == pytest.approx(ode_position(0.3, 0.5, 5.0), abs=1e-10)
    assert pattern(dyn, 1, 2.0, -2.0) == pytest.approx(ode_position(-0.3, -2.0, 2.0), abs=1e-10)
    with pytest.raises(ValueError):
        pattern(dyn, 0, -1.0, 0.4)


def test_pattern_complex_root_branch():
    d = Dynamics(QUARTIC, VelocityPair(0.5, -0.5), RatePair(1.0, 1.0))
    for x, t in [(0.0, 0.7), (-1.5, 3.0), (2.5, 0.4)]:
        assert pattern(d, 0, t, x) == pytest.approx(ode_position(0.5, x, t), abs=1e-10)


def offset_ode(c, root, start, t):
    """dy/dt = c - U'(y) written for the offset from a root, factored so it stays exact."""
    cubic = lambda s: -(s ** 2 + 3 * root * s + 3 * root ** 2 - 1)
    sol = solve_ivp(lambda _, s: s * cubic(s), (0.0, t), [start - root], method="DOP853",
                    rtol=1e-13, atol=1e-300)
    return float(sol.y[0, -1])


def test_pattern_node_near_attracting_root(dyn):
    b_plus = dyn.flows[0].real_roots[-1]
    for x, t in [(1.0, 8.0), (1.1209, 4.876), (2.0, 9.0)]:
        node = dyn.pattern_node(0, t, x)
        assert float(node.anchor) == b_plus
        assert float(node.anchor + node.offset) == pattern(dyn, 0, t, x)
        assert float(node.offset) == pytest.approx(offset_ode(0.3, b_plus, x, t), rel=1e-8)
        assert float(dyn.phi(0, node.anchor, node.offset)) - phi_at(dyn, 0, x) == pytest.approx(t, abs=1e-12)


def phi_at(d, i, x):
    return float(d.phi(i, x))


def test_pattern_node_other_branches(dyn):
    for i, x, t in [(0, 0.5, 0.5), (0, -2.0, 1.0), (1, -0.5, 2.0), (1, 1.5, 0.3)]:
        node = dyn.pattern_node(i, t, x)
        assert float(node.anchor + node.offset) == pattern(dyn, i, t, x)
        assert float(dyn.phi(i, node.anchor, node.offset)) - phi_at(dyn, i, x) == pytest.approx(t, abs=1e-12)
    assert float(dyn.pattern_node(0, 0.0, 0.4).value) == 0.4
    with pytest.raises(ValueError):
        dyn.pattern_node(0, -1.0, 0.4)


def test_reach_time(dyn):
    assert reach_time(dyn, 0, 0.3, 0.3) == 0.0
    b_plus = dyn.regime.wells0[-1]
    assert reach_time(dyn, 0, b_plus + 0.1, b_plus - 0.1) == math.inf
    assert reach_time(dyn, 0, 0.3, 0.0) == math.inf
    t = reach_time(dyn, 0, 0.0, 0.3)
    assert t == pytest.approx(ode_hitting_time(0.3, 0.0, 0.3), abs=1e-9)
    assert t == pytest.approx(dyn.phi(0, 0.3) - dyn.phi(0, 0.0), abs=1e-14)


def test_psi_small(dyn):
    assert psi_small(dyn, 0.0) == pytest.approx(0.0, abs=1e-14)
    assert psi_small(dyn, 0.2) == pytest.approx(1 / 0.492 - 1 / 0.108, rel=1e-12)
    assert round(psi_small(dyn, 0.2), 3) == -7.227
    for x in (-0.2, 0.1, 0.25):
        fd = derivative(lambda z: log_Psi(dyn, z), x, 1e-4)
        assert fd == pytest.approx(psi_small(dyn, x), abs=1e-8)
    with pytest.raises(PoleAtCriticalPoint):
        psi_small(dyn, dyn.regime.wells0[1])


def test_beta_properties(dyn):
    assert beta(dyn, 0.1, 0.1) == 1.0
    x, y, z = -0.2, 0.05, 0.3
    assert beta(dyn, x, y) * beta(dyn, y, z) == pytest.approx(beta(dyn, x, z), rel=1e-12)
    shifted = dyn.with_reference_fraction(0.13)
    assert beta(shifted, x, z) == pytest.approx(beta(dyn, x, z), rel=1e-12)
    assert log_Psi(shifted, x) != pytest.approx(log_Psi(dyn, x))
    with pytest.raises(OutOfDomain):
        beta(dyn, 0.0, 0.9)


def test_flow_table_rows(dyn):
    rows, samples = flow_table_rows(dyn, samples=5)
    assert len(rows) == 8
    assert len(samples) == 8 * 5


def _branch_point(dyn, i, k, frac):
    b = dyn.flows[i].branches[k]
    lo = b.lo if math.isfinite(b.lo) else b.hi - 3.0
    hi = b.hi if math.isfinite(b.hi) else b.lo + 3.0
    return lo + (hi - lo) * frac


branch_points = st.tuples(st.integers(0, 1), st.integers(0, 3), st.floats(0.02, 0.98))


@settings(max_examples=150, deadline=None)
@given(branch_points, st.floats(0.0, 2.0), st.floats(0.0, 2.0))
def test_pattern_semigroup(dyn, bp, s, t):
    i, k, frac = bp
    x = _branch_point(dyn, i, k, frac)
    once = dyn.pattern(i, s + t, x)
    twice = dyn.pattern(i, t, dyn.pattern(i, s, x))
    assert once == pytest.approx(twice, abs=1e-9)


@settings(max_examples=150, deadline=None)
@given(branch_points, st.floats(0.0, 5.0))
def test_phi_identity(dyn, bp, t):
    i, k, frac = bp
    x = _branch_point(dyn, i, k, frac)
    y = dyn.pattern(i, t, x)
    assert dyn.phi(i, y) - dyn.phi(i, x) == pytest.approx(t, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.02, 0.98), st.floats(0.01, 3.0), st.floats(0.01, 3.0))
def test_monotone_attraction(dyn, frac, s, t):
    b = dyn.flows[0].branches[2]  # (b0, b+), attracting upper end
    x = b.lo + frac * b.length
    y1 = dyn.pattern(0, s, x)
    y2 = dyn.pattern(0, s + t, x)
    assert x < y1 <= y2 < b.hi
    assert y1 < y2 or y2 > b.hi - 1e-9


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.02, 0.98), min_size=3, max_size=3, unique=True))
def test_reach_time_additivity(dyn, fracs):
    b = dyn.flows[0].branches[2]
    x, y, z = sorted(b.lo + f * b.length for f in fracs)
    total = dyn.reach_time(0, x, z)
    assert total == pytest.approx(dyn.reach_time(0, x, y) + dyn.reach_time(0, y, z), abs=1e-9)
