"""Exception taxonomy shared across the package.

Exit-code mapping used by the CLI: config problems -> 2, numerical
failures -> 3, root finding came up empty -> 4.
"""


class HatsimError(Exception):
    """Base class for all package errors."""


class DomainError(HatsimError):
    """Argument outside the mathematical domain of an operation."""


class ConfigError(HatsimError):
    """A HatConfig or derived object violates an invariant."""


class ParseError(ConfigError):
    """Malformed config file; message carries the line number."""


class ValidationError(ConfigError):
    """Config parsed but a required key is missing or a value is invalid."""


class SingularityError(HatsimError):
    """Integration ran into the r=0 coordinate singularity."""


class ToleranceError(HatsimError):
    """Adaptive step control could not meet the requested tolerance."""


class ResonanceError(HatsimError):
    """The interior problem is (numerically) resonant at this energy."""


class NoRootError(HatsimError):
    """No sign change found in the scan bracket."""


class QuadratureError(HatsimError):
    """Adaptive quadrature failed to converge."""


class InfeasibleError(HatsimError):
    """Layer-ratio system has no solution in [0, 1]^4."""


class ConvergenceError(HatsimError):
    """Iterative search left its admissible neighborhood."""


class TruncationWarning(UserWarning):
    """Harmonic truncation left a non-negligible tail."""
