"""Exception hierarchy shared across the package."""


class SafabError(Exception):
    """Base class for all package errors."""


class DomainError(SafabError, ValueError):
    """An argument lies outside the domain of a function (e.g. p not in (0, 1))."""


class ConfigError(SafabError, ValueError):
    """Inconsistent or incomplete configuration."""


class DataError(SafabError, ValueError):
    """Input data cannot support the requested analysis."""


class DegenerateSelectionError(SafabError, ArithmeticError):
    """Marginal selection probability is numerically zero."""


class NotSelectedError(SafabError, ValueError):
    """An observation falls outside the selection region."""


class NumericalUnderflowError(SafabError, ArithmeticError):
    """The prior grid assigns (numerically) zero density to a datum."""
