"""Exception types shared across the package.

Every error raised by this package derives from :class:`PassFpcaError`, so
callers can catch one base class at an API boundary.  Each subclass also
derives from the matching builtin (``ValueError`` for bad inputs,
``RuntimeError`` for iterative procedures that fail to finish) so the types
behave well in generic code.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "PassFpcaError",
    "InvalidGridError",
    "DimensionMismatchError",
    "InsufficientSampleError",
    "DegenerateSampleError",
    "AsymmetrySurfaceError",
    "DiagonalStateError",
    "SchemeMismatchError",
    "BasisSizeError",
    "ThresholdError",
    "ConvergenceError",
]


class PassFpcaError(Exception):
    """Base class for all errors raised by this package."""


class InvalidGridError(PassFpcaError, ValueError):
    """A grid definition is unusable (too few points, bad spacing)."""


class DimensionMismatchError(PassFpcaError, ValueError):
    """Array shapes are inconsistent with each other or with the grid."""


class InsufficientSampleError(PassFpcaError, ValueError):
    """Too few curves (or grid points) for the requested computation."""


class DegenerateSampleError(PassFpcaError, ValueError):
    """The data carry no usable variation (for example, all pairwise
    differences are numerically zero)."""


class AsymmetrySurfaceError(PassFpcaError, ValueError):
    """A covariance surface violates its symmetry tolerance."""


class DiagonalStateError(PassFpcaError, ValueError):
    """A surface's diagonal is in the wrong state for an operation
    (removed where it is needed, or present where it must be removed)."""


class SchemeMismatchError(PassFpcaError, ValueError):
    """A smoothing spec names one scheme but was passed to the other
    scheme's operation."""


class BasisSizeError(PassFpcaError, ValueError):
    """A basis dimension is outside the range the grid can support."""


class ThresholdError(PassFpcaError, ValueError):
    """A selection threshold can never be reached by the given sequence."""


class ConvergenceError(PassFpcaError, RuntimeError):
    """An iterative routine stopped at ``max_iter`` without meeting its
    tolerance.

    Attributes
    ----------
    last_iterate : numpy.ndarray
        The final state of the iteration, so callers can inspect or reuse
        it even though the tolerance was not met.
    iterations : int
        Number of iterations performed.
    final_delta : float
        Size of the last update step.
    """

    def __init__(self, message: str, last_iterate: np.ndarray,
                 iterations: int, final_delta: float):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.iterations = iterations
        self.final_delta = final_delta
