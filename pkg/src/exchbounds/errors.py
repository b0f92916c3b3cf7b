"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ValidationError(ValueError):
    """Input data failed validation (e.g. a population value outside [-1, 1])."""


class PreconditionError(ValueError):
    """A bound was requested for inputs that violate its hypotheses."""


class BudgetError(RuntimeError):
    """An exhaustive enumeration would exceed its configured budget."""
