"""Exception types raised across the package."""


class PathitoError(Exception):
    """Base class for all package errors."""


class AlignmentError(PathitoError, ValueError):
    """A time, shift or interval endpoint does not sit on the grid."""


class DomainError(PathitoError, ValueError):
    """A requested time or point lies outside the represented domain."""


class SimulationError(PathitoError, RuntimeError):
    """A coefficient produced a non-finite value during simulation."""

    def __init__(self, message, path_index=None, step=None):
        super().__init__(message)
        self.path_index = path_index
        self.step = step


class RankDeficiencyError(PathitoError, ArithmeticError):
    """Regression normal equations are (numerically) singular."""

    def __init__(self, message, step=None, condition=None, basis=None):
        super().__init__(message)
        self.step = step
        self.condition = condition
        self.basis = basis


class UnsupportedCandidateError(PathitoError, TypeError):
    """A functional lacks the derivative hooks an operation needs."""


class ConfigError(PathitoError, ValueError):
    """Invalid experiment configuration or unknown registry name."""
