"""Exception types raised across the package."""


class ContractError(ValueError):
    """Inputs violate a documented precondition (shapes, ranges, names)."""


class NumericDomainError(ArithmeticError):
    """A model evaluation produced non-finite values."""


class DivergedError(ArithmeticError):
    """A forward simulation left the finite range.

    ``last_valid_index`` is the index of the last state that was still
    within bounds.
    """

    def __init__(self, message, last_valid_index):
        super().__init__(message)
        self.last_valid_index = last_valid_index


class ConditioningError(ArithmeticError):
    """A covariance update lost positive semidefiniteness."""


class ConfigError(ValueError):
    """An experiment configuration is malformed."""
