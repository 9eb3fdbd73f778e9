"""Functional Itô calculus via regularization, with Monte Carlo solvers for
path-dependent Kolmogorov equations."""

from .errors import (
    AlignmentError,
    ConfigError,
    DomainError,
    PathitoError,
    RankDeficiencyError,
    SimulationError,
    UnsupportedCandidateError,
)
from .paths import Grid, SegmentedPath, Trajectory, bump_present, extend, shift_past, window_at
from .regcalc import (
    EpsSchedule,
    MeasureOnInterval,
    RegIntegralResult,
    backward_integral,
    backward_integral_measure,
    covariation,
    forward_integral,
    quadratic_variation,
    stieltjes_integral,
)
from .sde import McConfig, McEstimate, SdeProblem, simulate

__version__ = "0.1.0"
