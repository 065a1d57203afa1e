"""Exception hierarchy.

Configuration problems derive from :class:`ConfigError` (a ``ValueError``);
numerical failures derive from :class:`NumericalError` (an
``ArithmeticError``). The CLI maps the two families to distinct exit codes.
"""


class OTFPFError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(OTFPFError, ValueError):
    """Invalid configuration or inconsistent input dimensions.

    Parameters
    ----------
    message : str
        Human-readable description.
    key : str, optional
        Dotted key path of the offending configuration entry.
    """

    def __init__(self, message, key=None):
        self.key = key
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)


class NumericalError(OTFPFError, ArithmeticError):
    """Base class for numerical failures."""


class SingularCovariance(NumericalError):
    """A covariance that must be positive definite is (numerically) singular."""


class InconsistentSingularSystem(NumericalError):
    """The kernel-kernel block of a singular gain equation does not vanish.

    Signals a rank-estimation failure: analytically the block is zero.
    """


class NumericalBlowup(NumericalError):
    """Particles or covariances left the admissible set (non-finite or not PSD)."""


class AREDivergence(NumericalError):
    """Riccati integration did not reach a steady state within the step cap."""

