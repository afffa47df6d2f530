"""Exact event-driven simulation of the telegraph process and Monte Carlo estimators.

Between switches the position follows a deterministic pattern, which is
advanced exactly through the rectifying map, so the only error left in the
estimators is statistical.

Randomness: paths are grouped into blocks; block ``b`` of an estimator draws
from ``Philox(SeedSequence(seed, spawn_key=(stream, b)))`` where ``stream`` is
a stable hash of the estimator name and its arguments.  Results are therefore
a deterministic function of the arguments and independent of thread count.
"""
from __future__ import annotations

import functools
import math
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _kernels as K
from .errors import OutOfInterval, WrongRegime
from .flow import Dynamics, RatePair
from .potential import PotentialSpec, RegimeTag, VelocityPair

DEFAULT_BLOCK = 8192


@dataclass(frozen=True)
class ProcessConfig:
    spec: PotentialSpec
    velocities: VelocityPair
    rates: RatePair
    seed: int = 0
    reference_fraction: float = 0.5

    def __post_init__(self):
        seed = int(self.seed)
        if not 0 <= seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "seed", seed)

    @functools.cached_property
    def dynamics(self) -> Dynamics:
        return Dynamics(self.spec, self.velocities, self.rates, self.reference_fraction)

    @property
    def regime(self):
        return self.dynamics.regime

    @property
    def default_t_max(self) -> float:
        return 1e4 / min(self.rates.lambda0, self.rates.lambda1)

    def replace(self, **changes) -> "ProcessConfig":
        data = dict(spec=self.spec, velocities=self.velocities, rates=self.rates,
                    seed=self.seed, reference_fraction=self.reference_fraction)
        data.update(changes)
        return ProcessConfig(**data)

    def mirrored(self) -> "ProcessConfig":
        return self.replace(spec=self.spec.mirrored(), velocities=self.velocities.mirrored(),
                            rates=self.rates.mirrored())


@dataclass(frozen=True)
class Trajectory:
    segments: np.ndarray  # rows (t_start, x_start, state, duration)
    final_time: float
    final_position: float
    final_state: int

    @property
    def n_switches(self) -> int:
        return max(len(self.segments) - 1, 0)


@dataclass(frozen=True)
class FptSample:
    hit: bool
    time: float
    censored_at: Optional[float] = None


@dataclass(frozen=True)
class Estimate:
    mean: float
    std_error: float
    n: int
    censored_fraction: float = 0.0
    seed: Optional[int] = None
    upper_bound: Optional[float] = None

    @property
    def converged(self) -> bool:
        return self.censored_fraction == 0.0 and math.isfinite(self.mean)

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_samples(cls, values: np.ndarray, censored: int = 0, total: Optional[int] = None,
                     seed: Optional[int] = None) -> "Estimate":
        values = np.asarray(values, dtype=float)
        n = values.size
        total = n + censored if total is None else total
        frac = censored / total if total else 0.0
        if n == 0:
            return cls(math.inf, math.inf, 0, frac, seed)
        se = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
        return cls(float(values.mean()), se, n, frac, seed)


# ---------------------------------------------------------------------------
# randomness and block driver

def stream_id(*key) -> int:
    """Stable 32-bit id for an estimator call."""
    return zlib.crc32(repr(key).encode())


def block_generator(seed: int, stream: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(stream, block))
    return np.random.Generator(np.random.Philox(ss))


def _threads(threads: Optional[int]) -> int:
    if threads is None:
        threads = int(os.environ.get("TELEWELL_THREADS", "1") or 1)
    return max(1, int(threads))


def _run_blocks(n: int, seed: int, stream: int, init: Callable, step: Callable, draws: int,
                block_size: int = DEFAULT_BLOCK, threads: Optional[int] = None) -> list:
    """Run ``n`` lanes in blocks; ``step(E, lanes, state)`` returns the unfinished lanes."""

    def one(b: int):
        m = min(block_size, n - b * block_size)
        state = init(m)
        gen = block_generator(seed, stream, b)
        lanes = np.arange(m)
        while lanes.size:
            E = gen.standard_exponential((lanes.size, draws))
            lanes = step(E, lanes, state)
        return state

    nblocks = (n + block_size - 1) // block_size
    workers = _threads(threads)
    if workers == 1 or nblocks == 1:
        return [one(b) for b in range(nblocks)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(nblocks)))


def _concat(states: list, key: str) -> np.ndarray:
    return np.concatenate([s[key] for s in states])


# ---------------------------------------------------------------------------
# path sampling

def sample_path(config: ProcessConfig, x0: float, i0: int, horizon: float, index: int = 0) -> Trajectory:
    """One exact trajectory on ``[0, horizon]``."""
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    dyn = config.dynamics
    lam = min(config.rates.lambda0, config.rates.lambda1)
    size = int(max(64, 2 * horizon * max(config.rates.lambda0, config.rates.lambda1) + 64))
    stream = stream_id("path", float(x0), int(i0), float(horizon))
    while True:
        E = block_generator(config.seed, stream, index).standard_exponential(size)
        out = np.empty((size, 4))
        n = K.record_path(dyn.F, dyn.N, dyn.rate_array, E, float(x0), int(i0), float(horizon), out)
        if n >= 0:
            break
        size *= 2
    seg = out[:n].copy()
    last = seg[-1]
    yf = dyn.pattern(int(last[2]), last[3], last[1])
    return Trajectory(seg, float(horizon), yf, int(last[2]))


def first_exit(config: ProcessConfig, x: float, lower: float, upper: float, i0: int, n: int,
               t_max: Optional[float] = None, stream: Optional[int] = None,
               block_size: int = DEFAULT_BLOCK, threads: Optional[int] = None) -> dict:
    """First exit times from ``(lower, upper)`` for ``n`` paths started at ``(x, i0)``.

    Returns arrays ``time`` and ``outcome`` (1 low hit, 2 high hit, 3 censored).
    """
    dyn = config.dynamics
    t_max = config.default_t_max if t_max is None else float(t_max)
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    if stream is None:
        stream = stream_id("exit", float(x), float(lower), float(upper), int(i0), t_max)
    if x <= lower or x >= upper:
        side = K.OUTCOME_HIT_LOW if x <= lower else K.OUTCOME_HIT_HIGH
        return {"time": np.zeros(n), "outcome": np.full(n, side)}
    mean_switches = t_max * max(config.rates.lambda0, config.rates.lambda1)
    draws = int(min(64, max(8, mean_switches)))

    def init(m):
        return {"pos": np.full(m, float(x)), "st": np.full(m, int(i0), dtype=np.int64),
                "time": np.zeros(m), "outcome": np.zeros(m, dtype=np.int64)}

    def step(E, lanes, s):
        K.first_exit_lanes(dyn.F, dyn.N, dyn.rate_array, E, lanes, s["pos"], s["st"], s["time"],
                           s["outcome"], float(lower), float(upper), t_max)
        return lanes[s["outcome"][lanes] == K.OUTCOME_RUNNING]

    states = _run_blocks(n, config.seed, stream, init, step, draws, block_size, threads)
    return {"time": _concat(states, "time"), "outcome": _concat(states, "outcome")}


def _targets(x: float, y: float):
    return (-math.inf, y) if y > x else (y, math.inf)


def sample_first_passage(config: ProcessConfig, x: float, y: float, i0: int,
                         t_max: Optional[float] = None, index: int = 0) -> FptSample:
    t_max = config.default_t_max if t_max is None else float(t_max)
    if x == y:
        return FptSample(True, 0.0)
    lo, hi = _targets(x, y)
    res = first_exit(config, x, lo, hi, i0, 1, t_max,
                     stream=stream_id("fpt-single", float(x), float(y), int(i0), t_max, int(index)))
    if res["outcome"][0] == K.OUTCOME_CENSORED:
        return FptSample(False, math.nan, t_max)
    return FptSample(True, float(res["time"][0]))


def first_passage_times(config: ProcessConfig, x: float, y: float, i0: int, n: int,
                        t_max: Optional[float] = None, **kw) -> tuple:
    """``(times, hit_mask)`` of ``n`` first passages from ``x`` to level ``y``."""
    t_max = config.default_t_max if t_max is None else float(t_max)
    if x == y:
        return np.zeros(n), np.ones(n, dtype=bool)
    lo, hi = _targets(x, y)
    kw.setdefault("stream", stream_id("fpt", float(x), float(y), int(i0), t_max))
    res = first_exit(config, x, lo, hi, i0, n, t_max, **kw)
    return res["time"], res["outcome"] != K.OUTCOME_CENSORED


# ---------------------------------------------------------------------------
# estimators

def _metastable_interval(config: ProcessConfig):
    reg = config.regime
    if reg.tag is not RegimeTag.CASE_A:
        raise WrongRegime(f"exit probabilities need the two-attractor regime, got {reg.tag.value}")
    return reg.regions.g_zero


def estimate_exit_prob(config: ProcessConfig, x: float, i0: int, n: int,
                       t_max: Optional[float] = None, **kw) -> Estimate:
    """Probability of leaving the metastable interval through its upper end."""
    b0, a0 = _metastable_interval(config)
    if not b0 < x < a0:
        raise OutOfInterval(f"x={x} is not inside ({b0}, {a0})")
    res = first_exit(config, x, b0, a0, i0, n, t_max, **kw)
    decided = res["outcome"] != K.OUTCOME_CENSORED
    up = (res["outcome"][decided] == K.OUTCOME_HIT_HIGH).astype(float)
    return Estimate.from_samples(up, censored=int(n - decided.sum()), total=n, seed=config.seed)


def estimate_mfpt(config: ProcessConfig, x: float, y: float, i0: int, n: int,
                  t_max: Optional[float] = None, **kw) -> Estimate:
    """Mean first-passage time from ``(x, i0)`` to level ``y``.

    Censored paths are excluded from the mean and reported through
    ``censored_fraction``; if every path is censored the mean is infinite.
    """
    times, hit = first_passage_times(config, x, y, i0, n, t_max, **kw)
    return Estimate.from_samples(times[hit], censored=int((~hit).sum()), total=n, seed=config.seed)


def estimate_mgf(config: ProcessConfig, q: float, x: float, y: float, i0: int, n: int,
                 t_max: Optional[float] = None, **kw) -> Estimate:
    """``E[exp(-q T); T < t_max]``; ``upper_bound`` adds ``exp(-q t_max)`` per censored path."""
    if q < 0:
        raise ValueError("q must be nonnegative")
    t_max = config.default_t_max if t_max is None else float(t_max)
    times, hit = first_passage_times(config, x, y, i0, n, t_max, **kw)
    vals = np.where(hit, np.exp(-q * np.where(hit, times, 0.0)), 0.0)
    est = Estimate.from_samples(vals, seed=config.seed)
    frac = float((~hit).mean())
    return Estimate(est.mean, est.std_error, n, frac, config.seed, est.mean + frac * math.exp(-q * t_max))


def run_to_horizon(config: ProcessConfig, x: float, i0: int, horizon: float, n: int,
                   stream: Optional[int] = None, shortcut: bool = True,
                   block_size: int = 65536, threads: Optional[int] = None) -> dict:
    """Positions, states, position ranges and switch counts at ``horizon``."""
    dyn = config.dynamics
    if stream is None:
        stream = stream_id("horizon", float(x), int(i0), float(horizon))
    short = dyn.pattern(i0, horizon, x) if shortcut else math.nan
    draws = int(min(64, max(4, 2 * horizon * max(config.rates.lambda0, config.rates.lambda1) + 4)))

    def init(m):
        return {"pos": np.full(m, float(x)), "st": np.full(m, int(i0), dtype=np.int64),
                "time": np.zeros(m), "done": np.zeros(m, dtype=np.bool_),
                "ymin": np.full(m, float(x)), "ymax": np.full(m, float(x)),
                "nswitch": np.zeros(m, dtype=np.int64)}

    def step(E, lanes, s):
        K.horizon_lanes(dyn.F, dyn.N, dyn.rate_array, E, lanes, s["pos"], s["st"], s["time"],
                        s["done"], s["ymin"], s["ymax"], s["nswitch"], float(horizon), short)
        return lanes[~s["done"][lanes]]

    states = _run_blocks(n, config.seed, stream, init, step, draws, block_size, threads)
    return {k: _concat(states, k) for k in ("pos", "st", "ymin", "ymax", "nswitch")}


@dataclass(frozen=True)
class OccupationHistogram:
    edges: np.ndarray
    mass: np.ndarray  # (2, bins) time spent per state and bin
    burn_in: float
    horizon: float

    @property
    def total(self) -> float:
        return float(self.mass.sum())

    @property
    def state_fractions(self) -> np.ndarray:
        return self.mass.sum(axis=1) / self.total

    def normalized(self) -> np.ndarray:
        return self.mass / self.total


def attractor_containing(config: ProcessConfig, x: float) -> tuple:
    regions = config.regime.regions
    for iv in regions.attractors().values():
        if iv[0] <= x <= iv[1]:
            return iv
    raise WrongRegime(f"{x} does not lie in an invariant attractor ({config.regime.tag.value})")


def _edge_raw(dyn: Dynamics, edges: np.ndarray) -> np.ndarray:
    out = np.empty((2, edges.size))
    for i, flow in enumerate(dyn.flows):
        for j, e in enumerate(edges):
            hit = np.nonzero(flow.real_roots == e)[0]
            if hit.size:
                # the bins sit on the side of the root where the attractor is
                side = edges[1] if j == 0 else edges[-2]
                k = int(flow.branch_index(side))
                b = flow.branches[k]
                kind = b.lo_kind if e == b.lo else b.hi_kind
                out[i, j] = math.inf if kind == "attracting" else -math.inf
            else:
                out[i, j] = float(flow.raw(e))
    return out


def occupation_histogram(config: ProcessConfig, x0: float, i0: int, burn_in: float,
                         horizon: float, bins: int, replica: int = 0) -> OccupationHistogram:
    """Exact time-weighted occupation of ``bins`` equal cells of the attractor containing ``x0``."""
    if not 0 <= burn_in < horizon:
        raise ValueError("need 0 <= burn_in < horizon")
    dyn = config.dynamics
    a, b = attractor_containing(config, x0)
    edges = np.linspace(a, b, bins + 1)
    edges[0], edges[-1] = a, b
    edge_raw = _edge_raw(dyn, edges)
    hist = np.zeros((2, bins))
    state = np.array([float(x0), float(i0), 0.0, 0.0])
    gen = block_generator(config.seed, stream_id("occupation", float(x0), int(i0), float(burn_in),
                                                 float(horizon), int(bins)), replica)
    chunk = 65536
    while state[3] == 0.0:
        E = gen.standard_exponential(chunk)
        K.occupation_lane(dyn.F, dyn.N, dyn.rate_array, E, state, hist, edges, edge_raw,
                          float(burn_in), float(horizon))
    return OccupationHistogram(edges, hist, float(burn_in), float(horizon))


# ---------------------------------------------------------------------------
# generator and semigroup

@dataclass(frozen=True)
class FunctionPair:
    """Test functions ``(f0, f1)`` with their derivatives (vectorised callables)."""

    f0: Callable
    df0: Callable
    f1: Callable
    df1: Callable

    def value(self, i, x):
        return np.where(np.asarray(i) == 0, self.f0(x), self.f1(x))

    @classmethod
    def polynomial(cls, c0, c1) -> "FunctionPair":
        from numpy.polynomial import polynomial as P
        c0, c1 = np.asarray(c0, float), np.asarray(c1, float)
        return cls(lambda x: P.polyval(x, c0), lambda x: P.polyval(x, P.polyder(c0)),
                   lambda x: P.polyval(x, c1), lambda x: P.polyval(x, P.polyder(c1)))


def generator_apply(dyn: Dynamics, f: FunctionPair, x) -> tuple:
    """Rows of the generator applied to ``f`` at ``x``."""
    l0, l1 = dyn.rates.lambda0, dyn.rates.lambda1
    g0 = dyn.velocities.c0 - dyn.spec.slope(x)
    g1 = dyn.velocities.c1 - dyn.spec.slope(x)
    v0, v1 = f.f0(x), f.f1(x)
    return g0 * f.df0(x) - l0 * v0 + l0 * v1, g1 * f.df1(x) + l1 * v0 - l1 * v1


@dataclass(frozen=True)
class SemigroupCheck:
    h: float
    difference_quotient: float
    std_error: float
    half_step_quotient: float
    half_step_std_error: float
    generator: float
    residual: float
    bias_allowance: float
    allowance: float

    @property
    def passed(self) -> bool:
        return self.residual <= self.allowance

    @property
    def z(self) -> float:
        return self.residual / self.std_error if self.std_error > 0 else math.inf


def _difference_quotient(config, f, x, i, h, n, stream):
    res = run_to_horizon(config, x, i, h, n, stream=stream)
    vals = (f.value(res["st"], res["pos"]) - f.value(i, x)) / h
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n))


def semigroup_derivative_check(config: ProcessConfig, f: FunctionPair, x: float, i: int, h: float,
                               n: int, sigmas: float = 3.0) -> SemigroupCheck:
    """Compare ``(E f(Xi(h)) - f_i(x)) / h`` with the generator row ``i``.

    The allowance is ``sigmas`` joint standard errors plus the bias bound
    ``C h`` with ``C = |D(h) - D(h/2)| / (h/2)`` estimated by step halving.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    # both step sizes draw from one stream (common random numbers), so the
    # halving difference that estimates the bias is not swamped by noise
    stream = stream_id("semigroup", float(x), int(i))
    d1, s1 = _difference_quotient(config, f, x, i, h, n, stream)
    d2, s2 = _difference_quotient(config, f, x, i, h / 2, n, stream)
    g = float(generator_apply(config.dynamics, f, x)[i])
    joint = math.hypot(s1, s2)
    C = abs(d1 - d2) / (h / 2)
    bias = C * h
    return SemigroupCheck(h, d1, s1, d2, s2, g, abs(d1 - g), bias, sigmas * joint + bias)
