"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: input/config problems exit 2,
non-convergence exits 3, numerical failures exit 4.
"""


class MsvarError(Exception):
    """Base class for package errors."""


class IngestionError(MsvarError):
    """Malformed or inconsistent input data; names the offending row when known."""


class ConfigError(MsvarError):
    """Invalid configuration or argument combination."""


class InsufficientDataError(MsvarError):
    """Series too short for the requested model."""


class NumericalError(MsvarError):
    """Underflow, non-positive-definite covariance, or overflow during estimation."""


class SimulationError(MsvarError):
    """Synthetic data generation diverged."""
