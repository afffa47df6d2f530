"""Telegraph processes in double-well potentials.

A particle moves with velocity ``c_xi - U'(x)`` where ``xi`` is a two-state
Markov chain.  The package simulates such paths exactly, evaluates exit
probabilities, mean first-passage times and stationary densities in closed
form, and cross-checks the two.
"""
from .errors import (
    AmbiguousCase,
    ConfigError,
    Degenerate,
    DegenerateCurvature,
    DegenerateRoot,
    GeometryError,
    InfiniteMean,
    InternalConsistencyError,
    InvalidVelocities,
    NonConvergent,
    NotDoubleWell,
    OutOfBranch,
    OutOfDomain,
    OutOfInterval,
    PoleAtCriticalPoint,
    TelewellError,
    WrongRegime,
)
from .flow import Dynamics, FlowMap, RatePair
from .invariant import (
    InvariantDensity,
    bin_masses,
    fokker_planck_residual,
    normalizers,
    stationary_density,
)
from .passage import (
    ExitProbabilities,
    MeanPassage,
    I_integral,
    J_integral,
    exit_prob_upper,
    mean_passage,
)
from .potential import (
    QUARTIC,
    PotentialSpec,
    Regime,
    RegimeTag,
    VelocityPair,
    classify_regime,
    critical_points,
    validate_double_well,
)
from .telegraph import (
    Estimate,
    ProcessConfig,
    estimate_exit_prob,
    estimate_mfpt,
    estimate_mgf,
    occupation_histogram,
    sample_path,
)

__all__ = [name for name in dir() if not name.startswith("_")]
