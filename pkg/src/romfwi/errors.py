"""Exception hierarchy.

Configuration problems (bad geometry, insufficient coverage, invalid
parameters) derive from :class:`ConfigurationError`; failures of the
numerics on otherwise valid input derive from :class:`NumericalError`.
The CLI maps the two families to distinct exit codes.
"""


class ConfigurationError(ValueError):
    """Inputs are inconsistent or outside the supported range."""


class NumericalError(RuntimeError):
    """A numerical procedure failed on valid input."""


class StabilityError(ConfigurationError):
    """Time step violates the CFL bound of the explicit scheme."""


class CoverageError(ConfigurationError):
    """Recorded time window does not cover what the transform needs."""


class NotPositiveDefiniteError(NumericalError):
    """A matrix that must be SPD has a non-positive pivot."""


class LanczosBreakdown(NumericalError):
    """Block-Lanczos produced a rank-deficient block."""
