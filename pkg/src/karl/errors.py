"""Exception types shared across the package."""


class KarlError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(KarlError, ValueError):
    pass


class SingularSystem(KarlError, ArithmeticError):
    """Normal equations are numerically singular and no ridge was given."""


class NonFiniteState(KarlError, ArithmeticError):
    """An integration step produced NaN/inf (the trajectory blew up)."""


class NoConvergence(KarlError, ArithmeticError):
    pass


class NotEquilibrium(KarlError, ValueError):
    """Linearization was requested away from an equilibrium."""


class InsufficientData(KarlError, ValueError):
    pass


class ModelFormat(KarlError, ValueError):
    """A model or dataset file could not be parsed."""


class ConfigError(KarlError, ValueError):
    pass
