"""Exception types raised across the package."""


class SineLowRankError(Exception):
    """Base class for all package errors."""


class ZeroMatrix(SineLowRankError, ValueError):
    """Raised when an operation needs a nonzero matrix."""


class NonFiniteMatrix(SineLowRankError, ValueError):
    """Raised when a matrix holds NaN or Inf entries."""


class UnknownFunction(SineLowRankError, ValueError):
    pass


class DimensionMismatch(SineLowRankError, ValueError):
    pass


class ShapeMismatch(DimensionMismatch):
    pass


class DimChainMismatch(DimensionMismatch):
    """Adjacent layer specs do not chain (out_dim != next in_dim)."""


class InvalidRank(SineLowRankError, ValueError):
    pass


class InvalidScheme(SineLowRankError, ValueError):
    pass


class EmptyGrid(SineLowRankError, ValueError):
    pass


class NonFiniteLoss(SineLowRankError, FloatingPointError):
    """Raised when training produces a NaN/Inf loss.

    ``history`` carries the epochs completed before the failure.
    """

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history


class BadPGM(SineLowRankError, ValueError):
    pass
