"""Exception hierarchy shared by all modules.

Everything raised on bad input derives from :class:`InputError`; the CLI maps
those to exit code 2 and anything else to exit code 1.
"""


class MersError(Exception):
    """Base class for all package errors."""


class InputError(MersError):
    """Caller supplied data or parameters that violate a precondition."""


class ParseError(InputError):
    """A file could not be decoded; the message carries a row or byte offset."""


class StructuralError(InputError):
    """Shapes, dimensions or id alignment do not agree."""


class DegenerateInputError(InputError):
    """Input is well-formed but numerically degenerate (zero rows, n < 2, ...)."""


class BudgetError(InputError):
    """A neighbour count or subset budget is out of range."""


class DomainError(InputError):
    """A scalar argument lies outside the domain of the operation."""


class PreconditionError(InputError):
    """A mathematical constraint required by a closed form does not hold."""


class OracleRefusal(InputError):
    """Exhaustive search was refused because the instance is too large."""
