"""Exception hierarchy shared by the simulation modules and the CLI.

Each error carries the process exit code the CLI reports for it.
"""


class HierglassError(Exception):
    """Base class for every error raised on purpose by hierglass."""

    exit_code: int = 4


class ConfigError(HierglassError):
    """Invalid experiment configuration or command-line usage."""

    exit_code = 1


class CapacityError(HierglassError):
    """A requested enumeration or cache does not fit the configured budget."""

    exit_code = 2


class VerificationError(HierglassError):
    """At least one verification row failed."""

    exit_code = 3


class IntegrityError(HierglassError):
    """Internal consistency violated, e.g. Monte Carlo energy drift."""

    exit_code = 4


class SolverError(HierglassError):
    """Root bracketing failed where a sign change is guaranteed."""

    exit_code = 4


class KeyRangeError(HierglassError, ValueError):
    """A disorder key component lies outside its range for the model."""

    exit_code = 1


class DimensionError(HierglassError, ValueError):
    """A spin configuration has the wrong length for the model."""

    exit_code = 1


class DomainError(HierglassError, ValueError):
    """A parameter lies outside the domain of an analytic quantity."""

    exit_code = 1
