"""Exception types shared across the package."""


class ContractError(ValueError):
    """Caller broke a shape or length precondition."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of the operation."""


class NumericalRangeError(ArithmeticError):
    """A computation left the representable floating-point range."""


class ConstructionError(ValueError):
    """A model failed its self-check while being built."""


class BudgetError(RuntimeError):
    """Exhaustive enumeration would exceed the configured budget."""


class NoFeasibleInputError(RuntimeError):
    """Every candidate input yields an infinite objective."""
