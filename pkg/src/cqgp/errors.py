"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when inputs (configs, laws, channel files, operators) fail validation."""


class NumericalInvariantError(RuntimeError):
    """Raised when a computed object violates a numerical invariant beyond tolerance.

    Examples: a decoding POVM whose elements fail positivity, or measurement
    probabilities that do not sum to one within tolerance.
    """
