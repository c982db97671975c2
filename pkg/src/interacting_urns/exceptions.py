# src/interacting_urns/exceptions.py


class UrnModelError(ValueError):
    """Base class for invalid use of the urn model."""


class InvalidParameterError(UrnModelError):
    """A precondition on a model parameter does not hold."""


class WeightTableOverrunError(UrnModelError):
    """A tabulated weight sequence was asked for an index past its end."""

    def __init__(self, index: int, length: int):
        super().__init__(f"Weight table has {length} terms, index {index} requested")
        self.index = index
        self.length = length

    def __reduce__(self):
        return type(self), (self.index, self.length)


class PhaseOrderError(UrnModelError):
    """A trajectory under infinite weights left the C1* -> C2* -> C3 pattern."""


class SingularSystemError(UrnModelError):
    """Zero pivot met while eliminating a tridiagonal system."""


class ConfigError(UrnModelError):
    """Run configuration could not be validated."""


class BudgetExceededError(RuntimeError):
    """Exact enumeration would exceed its path budget."""
