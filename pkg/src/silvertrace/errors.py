"""Exception types shared across the package."""


class RangeOverflowError(ValueError):
    """A computation produced a non-finite value (overflow of the dynamics)."""


class SampleExhaustedError(RuntimeError):
    """Rejection sampling hit its attempt budget before producing enough points."""


class NonReturningError(RuntimeError):
    """An orbit left the admissible set before returning to the base regions."""


class DegenerateTangentError(ValueError):
    """The tangency constraint cannot be solved for the requested component."""


class EmptyWindowError(ValueError):
    """A local window contains no part of the set under study."""


class InsufficientScalesError(ValueError):
    """Too few usable scales for a meaningful box-count regression."""


class StructuralError(RuntimeError):
    """A combinatorial structure does not have its expected shape."""


class InadmissibleWordError(ValueError):
    """A symbol word violates the transition matrix."""
