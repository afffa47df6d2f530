"""Closed-form versus Monte Carlo battery.

Each check compares an analytic quantity with an independent simulation and
reports a z-score; a check passes when ``|z| <= sigmas`` (or, for the
occupation histogram, when its L1 distance is below ``l1_tolerance``).

``closed_form_rates`` replaces the switching rates on the analytic side only,
which is how fault injection is exercised.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import GeometryError
from .flow import RatePair
from .invariant import bin_masses, resolve_attractor
from .passage import exit_prob_upper, mean_passage, upper_geometry
from .potential import RegimeTag
from .telegraph import (
    FunctionPair,
    ProcessConfig,
    estimate_exit_prob,
    estimate_mfpt,
    occupation_histogram,
    semigroup_derivative_check,
)

L1_TOLERANCE = 0.02


@dataclass
class Check:
    name: str
    passed: bool
    z: Optional[float] = None
    detail: dict = field(default_factory=dict)


@dataclass
class Verdict:
    checks: list
    skipped: dict

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": [asdict(c) for c in self.checks], "skipped": self.skipped}


def _z(closed: float, mc: float, se: float) -> float:
    if se > 0:
        return (closed - mc) / se
    return 0.0 if math.isclose(closed, mc, rel_tol=1e-12, abs_tol=1e-15) else math.inf


def default_pairs(config: ProcessConfig) -> list:
    """Five ``(x, y)`` pairs covering the finite-mean cases above the repelling floor."""
    g = upper_geometry(config.dynamics)
    if g is None:
        raise GeometryError("no closed-form mean passage geometry for this regime")
    A, B = g.A, g.B
    w = B - A
    floor = g.floor if math.isfinite(g.floor) else A - w
    return [
        (floor + 0.3 * (A - floor), floor + 0.7 * (A - floor)),
        (floor + 0.5 * (A - floor), A),
        (A + 0.2 * w, A + 0.6 * w),
        (A + 0.8 * w, A + 0.3 * w),
        (B + w, B + 0.4 * w),
    ]


def exit_probability_checks(config, closed, n, sigmas, t_max=None, xs=None) -> list:
    b0, a0 = config.regime.regions.g_zero
    xs = list(b0 + (a0 - b0) * np.array([0.15, 0.3, 0.5, 0.7, 0.85])) if xs is None else xs
    p = exit_prob_upper(closed, xs)
    out = []
    for k, x in enumerate(xs):
        for i in (0, 1):
            closed_val = float((p.p0, p.p1)[i][k])
            e = estimate_exit_prob(config, float(x), i, n, t_max)
            z = _z(closed_val, e.mean, e.std_error)
            out.append(Check(f"exit_prob[x={x:.4g},i={i}]", abs(z) <= sigmas, z,
                             {"closed": closed_val, "mc": e.mean, "std_error": e.std_error,
                              "censored_fraction": e.censored_fraction}))
    return out


def mean_passage_checks(config, closed, n, sigmas, t_max=None, pairs=None, variant="derived") -> list:
    pairs = default_pairs(config) if pairs is None else pairs
    t_max = config.default_t_max if t_max is None else t_max
    out = []
    for x, y in pairs:
        m = mean_passage(closed, x, y, variant=variant)
        for i in (0, 1):
            closed_val = m.m0 if i == 0 else m.m1
            e = estimate_mfpt(config, x, y, i, n, t_max)
            z = _z(closed_val, e.mean, e.std_error)
            ok = abs(z) <= sigmas and e.censored_fraction < 1e-3
            out.append(Check(f"mfpt[x={x:.4g},y={y:.4g},i={i}]", ok, z,
                             {"closed": closed_val, "mc": e.mean, "std_error": e.std_error,
                              "case": m.case_tag, "censored_fraction": e.censored_fraction}))
    return out


def occupation_checks(config, closed, sigmas, bins=200, burn_in=1e3, horizon=1e5,
                      attractor=None, replicas=10, l1_tolerance=L1_TOLERANCE) -> list:
    a, b = resolve_attractor(config, attractor)
    x0 = 0.5 * (a + b)
    span = horizon / replicas
    hists = [occupation_histogram(config, x0, 0, burn_in, burn_in + span, bins, replica=r)
             for r in range(replicas)]
    mass = sum(h.mass for h in hists)
    mc = mass / mass.sum()
    exact = bin_masses(closed, (a, b), hists[0].edges)
    l1 = float(np.abs(mc - exact).sum())
    fractions = np.array([h.state_fractions[0] for h in hists])
    se = float(fractions.std(ddof=1) / math.sqrt(replicas))
    want = closed.rates.lambda1 / closed.rates.total
    z = _z(want, float(mc[0].sum()), se)
    return [
        Check("occupation_l1", l1 < l1_tolerance, None, {"l1": l1, "tolerance": l1_tolerance}),
        Check("occupation_state_mass", abs(z) <= sigmas, z,
              {"closed": want, "mc": float(mc[0].sum()), "std_error": se}),
    ]


def semigroup_checks(config, h=1e-3, n=1_000_000, sigmas=3.0, points=None) -> list:
    f = FunctionPair.polynomial([0.0, 1.0], [0.0, 0.0, 1.0])
    points = [-1.0, -0.5, 0.0, 0.5, 1.0] if points is None else points
    out = []
    for x in points:
        for i in (0, 1):
            r = semigroup_derivative_check(config, f, float(x), i, h, n, sigmas)
            out.append(Check(f"semigroup[x={x:.4g},i={i}]", r.passed, r.z,
                             {"difference_quotient": r.difference_quotient, "generator": r.generator,
                              "allowance": r.allowance, "std_error": r.std_error}))
    return out


def validate(config: ProcessConfig, n: int = 100_000, sigmas: float = 3.0, t_max=None,
             bins: int = 200, burn_in: float = 1e3, occupation_horizon: float = 1e5,
             semigroup_h: float = 1e-3, semigroup_n: int = 1_000_000, attractor=None,
             closed_form_rates: Optional[RatePair] = None, variant: str = "derived") -> Verdict:
    closed = config if closed_form_rates is None else config.replace(rates=closed_form_rates)
    tag = config.regime.tag
    checks, skipped = [], {}
    if tag is RegimeTag.CASE_A:
        checks += exit_probability_checks(config, closed, n, sigmas, t_max)
    else:
        skipped["exit_prob"] = f"no metastable interval in regime {tag.value}"
    try:
        checks += mean_passage_checks(config, closed, n, sigmas, t_max, variant=variant)
    except GeometryError as exc:
        skipped["mfpt"] = str(exc)
    if config.regime.regions.attractors():
        checks += occupation_checks(config, closed, sigmas, bins, burn_in, occupation_horizon, attractor)
    else:
        skipped["occupation"] = f"no invariant attractor in regime {tag.value}"
    checks += semigroup_checks(config, semigroup_h, semigroup_n, sigmas)
    return Verdict(checks, skipped)
