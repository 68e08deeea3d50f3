"""Exception taxonomy shared by all modules.

Three failure classes are distinguished: structural misuse (mixing
tangent spaces, mismatched backends, provably empty sets), domain
violations (arguments outside the validated working region), and
numerical failures (iterations that did not converge).  Numerical
failures carry the best iterate and residual so callers can degrade
gracefully.
"""


class StructuralError(ValueError):
    """A contract violation that no amount of iteration can fix."""


class DomainError(ValueError):
    """Arguments lie outside the region in which the operation is valid."""


class NumericsError(RuntimeError):
    """An iterative procedure failed to converge."""

    def __init__(self, message, *, residual=None, best=None):
        super().__init__(message)
        self.residual = residual
        self.best = best


class ExpressionError(ValueError):
    """Malformed expression text or unsupported construct."""

    def __init__(self, message, *, position=None):
        super().__init__(message)
        self.position = position
