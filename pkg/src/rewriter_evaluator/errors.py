"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """A documented precondition of an operation was not met."""


class ShapeError(ContractViolation):
    pass


class DegenerateInputError(ContractViolation):
    """Raised when a masked softmax row has no unmasked position."""
