"""Exception taxonomy.

Input-side problems subclass ValueError so generic callers can catch them
broadly; numerical failures subclass ArithmeticError.  Everything shares the
AreamixError base so the command line can map exceptions to exit categories.
"""


class AreamixError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(AreamixError, ValueError):
    """A run configuration is missing, malformed, or inconsistent."""


class SchemaError(AreamixError, ValueError):
    """A delimited input file does not have the required structure."""


class DuplicateKeyError(AreamixError, ValueError):
    """The same key (for example an (area, cell) pair) appears twice."""


class DomainError(AreamixError, ValueError):
    """A value lies outside its mathematical domain."""


class ShapeError(AreamixError, ValueError):
    """Array dimensions do not conform."""


class UnknownAreaError(AreamixError, ValueError):
    """An area identifier is not present in the reference table."""


class InsufficientDataError(AreamixError, ValueError):
    """Too few usable observations for the requested computation."""


class RankError(AreamixError, ValueError):
    """A design matrix is rank deficient."""


class EmptyBasisError(AreamixError, ValueError):
    """No positive eigenvalues survive, so the requested basis is empty."""


class DegenerateChainError(AreamixError, ValueError):
    """A chain has no variability where a diagnostic requires some."""


class DefinitenessError(AreamixError, ArithmeticError):
    """A matrix that must be positive definite is not."""


class DivergenceError(AreamixError, ArithmeticError):
    """A sampler produced a non-finite draw."""

    def __init__(self, message: str, iteration: int | None = None):
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)
        self.iteration = iteration
