import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import dblquad, quad

from telewell import (
    AmbiguousCase,
    ConfigError,
    I_integral,
    InfiniteMean,
    J_integral,
    OutOfDomain,
    OutOfInterval,
    WrongRegime,
    estimate_exit_prob,
    estimate_mfpt,
    exit_prob_upper,
    mean_passage,
)
from telewell.passage import (
    batch_rows,
    exit_prob_residual,
    mean_passage_ode_residual,
    mean_passage_v_residual,
    upper_geometry,
)

from oracles import beta_oracle, gaps


def within(closed, est, k=4.0):
    return abs(closed - est.mean) <= k * est.std_error


# ---------------------------------------------------------------------------
# exit probabilities

def test_exit_probability_limits_and_signs(reference):
    b0, a0 = reference.regime.regions.g_zero
    res = exit_prob_upper(reference, [b0 + 1e-9, 0.0, a0 - 1e-9])
    assert res.B0.value > 0 > res.B1.value
    assert res.p0[-1] == pytest.approx(1.0, abs=1e-6)
    assert res.p1[0] == pytest.approx(0.0, abs=1e-6)
    assert res.p0[1] + res.p1[1] == pytest.approx(1.0, abs=1e-10)


def test_exit_probability_monotone(asymmetric):
    b0, a0 = asymmetric.regime.regions.g_zero
    res = exit_prob_upper(asymmetric, np.linspace(b0, a0, 52)[1:-1])
    assert np.all(np.diff(res.p0) >= 0) and np.all(np.diff(res.p1) >= 0)
    assert np.all(res.p0 >= res.p1)


def test_exit_probability_against_quad_oracle(asymmetric):
    dyn = asymmetric.dynamics
    b0, a0 = asymmetric.regime.regions.g_zero
    beta = beta_oracle(asymmetric, poles=[(0, b0), (1, a0)])
    P0, P1 = gaps(asymmetric)
    mid = 0.5 * (b0 + a0)
    w0 = lambda z: beta(z, mid) / P0(z)
    w1 = lambda z: beta(z, mid) / P1(z)
    B0 = quad(w0, b0, a0, epsabs=0, epsrel=1e-12, limit=200)[0]
    B1 = quad(w1, b0, a0, epsabs=0, epsrel=1e-12, limit=200)[0]
    xs = [b0 + 0.2 * (a0 - b0), mid, b0 + 0.9 * (a0 - b0)]
    res = exit_prob_upper(asymmetric, xs)
    for k, x in enumerate(xs):
        p0 = 1.0 - quad(w0, x, a0, epsabs=0, epsrel=1e-12, limit=200)[0] / B0
        p1 = quad(w1, b0, x, epsabs=0, epsrel=1e-12, limit=200)[0] / B1
        assert res.p0[k] == pytest.approx(p0, abs=1e-9)
        assert res.p1[k] == pytest.approx(p1, abs=1e-9)
    assert dyn is asymmetric.dynamics


def test_exit_probability_mirror_symmetry(reference):
    xs = np.array([-0.3, -0.1, 0.05, 0.2])
    res = exit_prob_upper(reference, xs)
    mir = exit_prob_upper(reference, -xs)
    assert np.allclose(res.p0, 1.0 - mir.p1, atol=1e-10)


def test_exit_probability_against_monte_carlo(asymmetric):
    res = exit_prob_upper(asymmetric, [0.0])
    for i, p in ((0, res.p0[0]), (1, res.p1[0])):
        est = estimate_exit_prob(asymmetric, 0.0, i, 20000)
        assert within(p, est), (i, p, est)


def test_exit_probability_residual(asymmetric):
    for x in (-0.2, 0.0, 0.15):
        r0, r1 = exit_prob_residual(asymmetric, x)
        assert abs(r0) < 1e-6 and abs(r1) < 1e-6


def test_exit_probability_domain(reference, merged):
    with pytest.raises(OutOfInterval):
        exit_prob_upper(reference, 0.5)
    with pytest.raises(WrongRegime):
        exit_prob_upper(merged, 0.0)


# ---------------------------------------------------------------------------
# building blocks

def test_I_J_against_scipy_oracle(reference):
    beta = beta_oracle(reference)
    P = gaps(reference)
    x, y = 0.5, 0.7
    for i in (0, 1):
        Pi, Pj = P[i], P[1 - i]
        I_ref = quad(lambda z: beta(z, y) / Pi(z), x, y, epsabs=0, epsrel=1e-12)[0]
        J_ref = dblquad(lambda w, z: beta(z, w) / Pj(w) / Pi(z), x, y, lambda z: z, lambda z: y,
                        epsabs=0, epsrel=1e-11)[0]
        assert I_integral(i, reference, x, y).value == pytest.approx(I_ref, rel=1e-10)
        assert J_integral(i, reference, x, y).value == pytest.approx(J_ref, rel=1e-9)


def test_I_J_vanish_on_the_diagonal(reference):
    for i in (0, 1):
        assert I_integral(i, reference, 0.6, 0.6).value == 0.0
        assert J_integral(i, reference, 0.6, 0.6).value == 0.0


def test_I_short_interval_expansion(reference):
    P = gaps(reference)
    y = 0.6
    for i in (0, 1):
        for d in (1e-3, 1e-4):
            approx = d / P[i](y)
            assert I_integral(i, reference, y - d, y).value == pytest.approx(approx, rel=20 * d)


def test_I_rejects_fixed_point_between(reference):
    with pytest.raises(OutOfDomain):
        I_integral(0, reference, 0.0, 0.6)


# ---------------------------------------------------------------------------
# mean passage times; reference values confirmed by Monte Carlo at n >= 1e5

REFERENCE_TIMES = [
    ((0.5, 0.7), "upper:below", (0.4578454139979025, 1.2032966269456646)),
    ((0.85, 1.0), "upper:rise", (0.8527165541006845, 1.9682770796224327)),
    ((0.5, 1.0), "upper:rise", (1.8875500248581467, 2.6828315407973413)),
    ((1.1, 0.9), "upper:fall", (3.2117728071289045, 2.1438137948603457)),
    ((1.3, 0.9), "upper:fall", (3.3459886125955056, 2.618895043375167)),
    ((1.3, 1.2), "upper:above", (0.24462848600807055, 0.10894140014097689)),
]


@pytest.mark.parametrize("xy, tag, expected", REFERENCE_TIMES)
def test_mean_passage_reference_values(reference, xy, tag, expected):
    r = mean_passage(reference, *xy)
    assert r.case_tag == tag
    assert r.as_tuple() == pytest.approx(expected, rel=1e-7)
    assert r.error0 < 1e-6 and r.error1 < 1e-6


@pytest.mark.parametrize("xy, tag, expected", REFERENCE_TIMES[:4])
def test_lower_half_line_mirrors(reference, xy, tag, expected):
    r = mean_passage(reference, -xy[0], -xy[1])
    assert r.case_tag == tag.replace("upper", "lower")
    assert r.as_tuple() == pytest.approx(expected[::-1], rel=1e-7)


def test_below_matches_building_blocks(reference):
    x, y = 0.5, 0.7
    r = mean_passage(reference, x, y)
    Lam = reference.rates.lambda0 + reference.rates.lambda1
    assert r.m0 == pytest.approx(I_integral(0, reference, x, y).value + Lam * J_integral(0, reference, x, y).value, rel=1e-12)


def test_trivial_and_unreachable(reference):
    A = reference.regime.wells1[-1]
    B = reference.regime.wells0[-1]
    assert mean_passage(reference, 0.7, 0.7).as_tuple() == (0.0, 0.0)
    with pytest.raises(InfiniteMean):
        mean_passage(reference, 0.9, B)
    with pytest.raises(InfiniteMean):
        mean_passage(reference, 0.85, A)
    with pytest.raises(AmbiguousCase):
        mean_passage(reference, 0.0, 0.9)
    with pytest.raises(ValueError):
        mean_passage(reference, 0.5, 0.7, variant="other")


def test_boundary_limits(reference):
    A = reference.regime.wells1[-1]
    lam1 = reference.rates.lambda1
    rows = [mean_passage(reference, A - d, A).as_tuple() for d in (1e-2, 1e-3, 1e-4)]
    m0s, m1s = zip(*rows)
    assert m0s[0] > m0s[1] > m0s[2] >= 0 and m0s[2] < 1e-3
    gaps_to_limit = [abs(m - 1 / lam1) for m in m1s]
    assert gaps_to_limit[0] > gaps_to_limit[1] > gaps_to_limit[2]
    assert m1s[2] == pytest.approx(1 / lam1, rel=0.02)


def test_continuity_across_attracting_point(reference):
    A = reference.regime.wells1[-1]
    below = mean_passage(reference, 0.5, A - 1e-6)
    above = mean_passage(reference, 0.5, A + 1e-6)
    at = mean_passage(reference, 0.5, A)
    assert below.case_tag == "upper:below" and above.case_tag == "upper:rise"
    assert below.as_tuple() == pytest.approx(at.as_tuple(), abs=1e-4)
    assert above.as_tuple() == pytest.approx(at.as_tuple(), abs=1e-4)


def test_printed_variant(reference):
    A = reference.regime.wells1[-1]
    p = mean_passage(reference, 0.85, 1.0, "printed")
    assert p.as_tuple() == pytest.approx((0.5597558471656163, 0.32767736410315684), rel=1e-7)
    # the two variants coincide when the target is the attracting point itself
    assert mean_passage(reference, 0.5, A, "printed").as_tuple() == pytest.approx(
        mean_passage(reference, 0.5, A).as_tuple(), rel=1e-9)
    fall = mean_passage(reference, 1.1, 1.0, "printed")
    assert fall.m1 < 0 and "negative" in fall.note
    with pytest.raises(AmbiguousCase):
        mean_passage(reference, 0.5, 1.0, "printed")
    with pytest.raises(AmbiguousCase):
        mean_passage(reference, 1.3, 0.9, "printed")


def test_merged_regime_geometry(merged):
    g = upper_geometry(merged.dynamics)
    assert g.prefix == "merged" and math.isinf(g.floor)
    r = mean_passage(merged, -0.5, 0.5)
    assert r.case_tag == "merged:rise"
    back = mean_passage(merged, 0.5, -0.5)
    assert back.as_tuple() == pytest.approx(r.as_tuple()[::-1], rel=1e-8)


@pytest.mark.parametrize("fixture, x, y, i", [
    ("reference", 0.5, 0.7, 0),
    ("reference", 0.85, 1.0, 1),
    ("reference", 1.1, 0.9, 0),
    ("reference", -1.1, -0.9, 1),
    ("asymmetric", 0.85, 1.0, 0),
    ("asymmetric", 1.3, 0.9, 1),
    ("merged", 0.5, 1.0, 0),
])
def test_mean_passage_against_monte_carlo(request, fixture, x, y, i):
    cfg = request.getfixturevalue(fixture)
    closed = mean_passage(cfg, x, y).as_tuple()[i]
    est = estimate_mfpt(cfg, x, y, i, 20000, t_max=1e4)
    assert est.censored_fraction < 1e-3
    assert within(closed, est), (closed, est)


@pytest.mark.parametrize("x, y", [(0.5, 0.7), (0.85, 1.0), (0.5, 1.0), (1.1, 0.9), (1.3, 1.2)])
def test_mean_passage_solves_backward_equation(asymmetric, x, y):
    r0, r1 = mean_passage_ode_residual(asymmetric, x, y)
    assert abs(r0) < 1e-4 and abs(r1) < 1e-4


def test_first_order_reduction_residual(reference):
    assert abs(mean_passage_v_residual(reference, 0.5, 0.7)) < 1e-6


# ---------------------------------------------------------------------------
# batch interface

def test_batch_rows(reference):
    rows = batch_rows(reference, {"xs": [0.0, 0.1], "quantity": "exit_prob"})
    assert [r[0] for r in rows] == [0.0, 0.1] and rows[0][-1] == "G0"
    rows = batch_rows(reference, {"xs": [0.5], "y": 0.7, "quantity": "mfpt"})
    assert rows[0][1:3] == pytest.approx(REFERENCE_TIMES[0][2], rel=1e-7)
    for bad in ({}, {"xs": []}, {"xs": ["a"]}, {"xs": [0.5], "quantity": "mfpt"},
                {"xs": [0.1], "quantity": "nope"}):
        with pytest.raises(ConfigError):
            batch_rows(reference, bad)


# ---------------------------------------------------------------------------
# properties

levels = st.lists(st.floats(0.45, 0.78), min_size=3, max_size=3, unique=True).filter(
    lambda v: min(abs(a - b) for a in v for b in v if a != b) > 1e-3)


@settings(max_examples=10, deadline=None)
@given(levels)
def test_mean_passage_nonnegative_and_monotone(reference, v):
    x, z, y = sorted(v)
    far = mean_passage(reference, x, y)
    assert far.m0 >= 0 and far.m1 >= 0
    # a higher target is reached after the lower one; a higher start arrives sooner
    near = mean_passage(reference, x, z)
    late = mean_passage(reference, z, y)
    for k in (0, 1):
        assert near.as_tuple()[k] < far.as_tuple()[k]
        assert late.as_tuple()[k] < far.as_tuple()[k]


@settings(max_examples=15, deadline=None)
@given(st.floats(0.001, 0.999), st.floats(0.001, 0.999))
def test_exit_probability_monotone_property(asymmetric, u, v):
    b0, a0 = asymmetric.regime.regions.g_zero
    lo, hi = (b0 + f * (a0 - b0) for f in sorted((u, v)))
    res = exit_prob_upper(asymmetric, [lo, hi])
    assert res.p0[0] <= res.p0[1] + 1e-12 and res.p1[0] <= res.p1[1] + 1e-12
