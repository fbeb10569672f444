"""Exception types raised by hivctl."""


class HivctlError(Exception):
    """Base class for all library errors."""


class DomainError(HivctlError, ValueError):
    """An input lies outside the domain of an operation (non-finite value, control outside [0, 1])."""


class SingularParameterError(HivctlError, ValueError):
    """A closed-form expression divides by a quantity that vanishes for the given parameters."""

    def __init__(self, quantity: str, where: str = ""):
        self.quantity = quantity
        msg = f"singular parameters: {quantity} = 0"
        if where:
            msg += f" (needed by {where})"
        super().__init__(msg)


class NumericError(HivctlError, ArithmeticError):
    """A numerical routine failed (eigenvalue solver, non-finite result)."""


class ConsistencyError(HivctlError):
    """Two independent computations that must agree did not."""

    def __init__(self, message: str, analytic=None, numeric=None):
        self.analytic = analytic
        self.numeric = numeric
        super().__init__(f"{message} (analytic={analytic}, numeric={numeric})")


class SolverError(HivctlError):
    """The sweep solver could not continue; ``partial`` holds the trajectory reached so far."""

    def __init__(self, message: str, partial=None):
        self.partial = partial
        super().__init__(message)


class SchemaError(HivctlError, ValueError):
    """A configuration document does not match the expected schema."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")
