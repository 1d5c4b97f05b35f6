"""Covariance-surface estimators and their eigendecomposition.

Two surface estimators are provided.  The classical sample covariance is
the usual moment estimator.  The pairwise self-normalized estimator (the
``pass`` kind) averages outer products of curve differences scaled by
their own squared norm,

    K(s, t) = mean over pairs (j, k) of
              (x_j(s) - x_k(s)) (x_j(t) - x_k(t)) / ||x_j - x_k||^2,

which is bounded regardless of how heavy-tailed the curves are and keeps
the same eigenfunctions as the classical covariance while shrinking the
spread of the eigenvalues.  Its trace under the grid quadrature is exactly
one because every summand is self-normalized.

A spherical comparator (:func:`mspc`) based on sign-normalized deviations
about the spatial median is included for benchmarking.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AsymmetrySurfaceError,
    ConvergenceError,
    DegenerateSampleError,
    DimensionMismatchError,
    DiagonalStateError,
    InsufficientSampleError,
)
from .grid import FunctionalSample, Grid

__all__ = [
    "KIND_CLASSICAL",
    "KIND_PASS",
    "CovarianceSurface",
    "EigenSystem",
    "mean_function",
    "sample_covariance",
    "pass_covariance",
    "eigendecompose",
    "spatial_median",
    "mspc",
]

KIND_CLASSICAL = "classical"
KIND_PASS = "pass"

# Pairs whose squared norm falls at or below this relative threshold are
# treated as coincident curves and excluded from the pairwise average.
_DEGENERATE_REL_TOL = 1e-12

# Absolute symmetry tolerance for covariance surfaces.
_SYMMETRY_ATOL = 1e-10


@dataclass
class CovarianceSurface:
    """A covariance (or sign-covariance) surface sampled on a grid.

    Attributes
    ----------
    grid : Grid
        Common sampling grid.
    matrix : numpy.ndarray
        Symmetric ``(N, N)`` matrix of surface values.
    kind : str
        Either ``"classical"`` or ``"pass"``.
    diagonal_removed : bool
        True when the diagonal has been blanked out (set to NaN) prior to
        surface smoothing under measurement noise.
    """

    grid: Grid
    matrix: np.ndarray = field(repr=False)
    kind: str = KIND_CLASSICAL
    diagonal_removed: bool = False

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=float)
        n = self.grid.n_points
        if mat.shape != (n, n):
            raise DimensionMismatchError(
                f"surface matrix must have shape ({n}, {n}), got {mat.shape}")
        if self.kind not in (KIND_CLASSICAL, KIND_PASS):
            raise DimensionMismatchError(
                f"kind must be 'classical' or 'pass', got {self.kind!r}")
        offdiag = ~np.eye(n, dtype=bool)
        if self.diagonal_removed:
            finite_ok = np.all(np.isfinite(mat[offdiag]))
        else:
            finite_ok = np.all(np.isfinite(mat))
        if not finite_ok:
            raise DimensionMismatchError(
                "surface values must be finite (off the diagonal when the "
                "diagonal is removed)")
        asym = np.abs(mat - mat.T)[offdiag]
        if asym.size and np.max(asym) > _SYMMETRY_ATOL:
            raise AsymmetrySurfaceError(
                f"surface is asymmetric beyond tolerance: "
                f"max |M - M^T| = {np.max(asym):.3e}")
        self.matrix = mat


@dataclass
class EigenSystem:
    """Leading eigenpairs of a covariance surface.

    Attributes
    ----------
    grid : Grid
        Common sampling grid.
    eigenvalues : numpy.ndarray
        Top ``q`` eigenvalues on the operator scale (matrix eigenvalue
        times the quadrature weight), nonincreasing.
    eigenfunctions : numpy.ndarray
        ``(N, q)`` matrix whose columns have unit quadrature norm; the
        entry of largest magnitude in each column is positive.
    q : int
        Number of retained components.
    """

    grid: Grid
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray = field(repr=False)
    q: int = 0

    def __post_init__(self):
        vals = np.asarray(self.eigenvalues, dtype=float)
        funs = np.asarray(self.eigenfunctions, dtype=float)
        if vals.shape != (self.q,):
            raise DimensionMismatchError(
                f"expected {self.q} eigenvalues, got shape {vals.shape}")
        if funs.shape != (self.grid.n_points, self.q):
            raise DimensionMismatchError(
                f"eigenfunctions must have shape "
                f"({self.grid.n_points}, {self.q}), got {funs.shape}")
        self.eigenvalues = vals
        self.eigenfunctions = funs


def mean_function(sample: FunctionalSample) -> np.ndarray:
    """Pointwise arithmetic mean across curves."""
    return sample.values.mean(axis=0)


def sample_covariance(sample: FunctionalSample) -> CovarianceSurface:
    """Classical sample covariance surface.

    Parameters
    ----------
    sample : FunctionalSample
        At least two curves on a shared grid.

    Returns
    -------
    CovarianceSurface
        Surface with ``matrix[j, k]`` equal to the usual unbiased sample
        covariance between grid points ``j`` and ``k``; kind ``classical``.

    Notes
    -----
    The accumulation visits curves in index order so the result matches a
    literal double-loop evaluation of the definition bit for bit.
    """
    n = sample.n
    if n < 2:
        raise InsufficientSampleError(
            f"sample covariance needs at least 2 curves, got {n}")
    centered = sample.values - mean_function(sample)
    acc = np.zeros((sample.grid.n_points, sample.grid.n_points))
    for row in centered:
        acc += row[:, None] * row[None, :]
    return CovarianceSurface(grid=sample.grid, matrix=acc / (n - 1),
                             kind=KIND_CLASSICAL)


def _pairwise_sq_norms(values: np.ndarray, spacing: float) -> list[np.ndarray]:
    """Squared quadrature norms of x_i - x_j for j > i, one array per i."""
    out = []
    for i in range(values.shape[0] - 1):
        diff = values[i + 1:] - values[i]
        out.append(spacing * np.einsum("ij,ij->i", diff, diff))
    return out


def pass_covariance(sample: FunctionalSample) -> CovarianceSurface:
    """Pairwise self-normalized covariance surface.

    Averages ``d d^T / ||d||^2`` over all curve pairs ``d = x_j - x_k``,
    with the quadrature norm of the grid module.  Pairs whose squared norm
    is at or below ``1e-12`` times the largest squared pair norm are
    treated as coincident and excluded, with the averaging denominator
    reduced accordingly, so the unit-trace property holds over the
    retained pairs.

    Parameters
    ----------
    sample : FunctionalSample
        At least two curves, not all identical.

    Returns
    -------
    CovarianceSurface
        Surface of kind ``pass`` whose trace times the quadrature weight
        equals one.
    """
    n = sample.n
    if n < 2:
        raise InsufficientSampleError(
            f"pairwise covariance needs at least 2 curves, got {n}")
    values = sample.values
    spacing = sample.grid.spacing
    norms = _pairwise_sq_norms(values, spacing)
    max_norm = max((chunk.max() for chunk in norms if chunk.size), default=0.0)
    if max_norm <= 0.0:
        raise DegenerateSampleError(
            "all curve pairs are coincident; the pairwise covariance is "
            "undefined")
    threshold = _DEGENERATE_REL_TOL * max_norm
    acc = np.zeros((sample.grid.n_points, sample.grid.n_points))
    retained = 0
    for i, chunk in enumerate(norms):
        keep = chunk > threshold
        if not np.any(keep):
            continue
        diff = (values[i + 1:] - values[i])[keep]
        acc += (diff / chunk[keep][:, None]).T @ diff
        retained += int(keep.sum())
    if retained == 0:
        raise DegenerateSampleError(
            "all curve pairs are coincident; the pairwise covariance is "
            "undefined")
    acc /= retained
    acc = 0.5 * (acc + acc.T)
    return CovarianceSurface(grid=sample.grid, matrix=acc, kind=KIND_PASS)


def eigendecompose(surface: CovarianceSurface, q: int) -> EigenSystem:
    """Top-``q`` eigenpairs of a covariance surface.

    Parameters
    ----------
    surface : CovarianceSurface
        Symmetric surface with its diagonal present.
    q : int
        Number of components to retain, between 1 and ``N``.

    Returns
    -------
    EigenSystem
        Eigenvalues on the operator scale (matrix eigenvalue times the
        quadrature weight) and eigenfunctions scaled to unit quadrature
        norm, signed so the entry of largest magnitude is positive.
    """
    grid = surface.grid
    if surface.diagonal_removed:
        raise DiagonalStateError(
            "cannot eigendecompose a surface whose diagonal was removed; "
            "smooth it first to restore the diagonal")
    if not 1 <= q <= grid.n_points:
        raise DimensionMismatchError(
            f"q must be between 1 and {grid.n_points}, got {q}")
    evals, evecs = np.linalg.eigh(surface.matrix)
    order = np.argsort(evals)[::-1][:q]
    evals = evals[order] * grid.spacing
    evecs = evecs[:, order] * np.sqrt(grid.n_points)
    for col in range(q):
        peak = np.argmax(np.abs(evecs[:, col]))
        if evecs[peak, col] < 0:
            evecs[:, col] = -evecs[:, col]
    return EigenSystem(grid=grid, eigenvalues=evals, eigenfunctions=evecs, q=q)


def spatial_median(sample: FunctionalSample, tol: float = 1e-8,
                   max_iter: int = 500) -> np.ndarray:
    """Geometric median of the curves under the quadrature norm.

    Runs a Weiszfeld-style fixed-point iteration for the minimizer of
    ``sum_i ||x_i - m||`` starting from the pointwise mean.

    Parameters
    ----------
    sample : FunctionalSample
        Curves to summarize.
    tol : float
        Stop when the step satisfies
        ``||m_new - m|| <= tol * max(1, ||m_new||)``.
    max_iter : int
        Iteration budget; exceeding it raises :class:`ConvergenceError`
        carrying the last iterate.

    Returns
    -------
    numpy.ndarray
        The median curve on the grid.
    """
    values = sample.values
    if sample.n == 1:
        return values[0].copy()
    spacing = sample.grid.spacing
    median = values.mean(axis=0)
    for iteration in range(1, max_iter + 1):
        diff = values - median
        dist = np.sqrt(spacing * np.einsum("ij,ij->i", diff, diff))
        # Floor the distances so curves sitting on the current iterate do
        # not blow up the weights.
        floor = 1e-14 * max(dist.max(), 1.0)
        dist = np.maximum(dist, floor)
        weights = 1.0 / dist
        new_median = (weights[:, None] * values).sum(axis=0) / weights.sum()
        step = np.sqrt(spacing * np.dot(new_median - median,
                                        new_median - median))
        scale = max(1.0, np.sqrt(spacing * np.dot(new_median, new_median)))
        median = new_median
        if step <= tol * scale:
            return median
    raise ConvergenceError(
        f"spatial median did not converge in {max_iter} iterations "
        f"(last step {step:.3e})",
        last_iterate=median, iterations=max_iter, final_delta=float(step))


def mspc(sample: FunctionalSample, q: int) -> EigenSystem:
    """Spherical principal components about the spatial median.

    Deviations from the spatial median are normalized to unit quadrature
    norm and their second-moment surface is eigendecomposed.  Curves lying
    at the median (within ``1e-12`` of the largest deviation) are dropped.

    Parameters
    ----------
    sample : FunctionalSample
        At least two curves.
    q : int
        Number of components to retain.

    Returns
    -------
    EigenSystem
        Leading eigenpairs of the sign-covariance surface.
    """
    if sample.n < 2:
        raise InsufficientSampleError(
            f"spherical principal components need at least 2 curves, got "
            f"{sample.n}")
    median = spatial_median(sample)
    deviations = sample.values - median
    spacing = sample.grid.spacing
    sq = spacing * np.einsum("ij,ij->i", deviations, deviations)
    max_sq = sq.max()
    if max_sq <= 0.0:
        raise DegenerateSampleError(
            "every curve coincides with the spatial median")
    keep = sq > _DEGENERATE_REL_TOL * max_sq
    if not np.any(keep):
        raise DegenerateSampleError(
            "every curve coincides with the spatial median")
    signs = deviations[keep] / np.sqrt(sq[keep])[:, None]
    surface_matrix = (signs.T @ signs) / signs.shape[0]
    surface_matrix = 0.5 * (surface_matrix + surface_matrix.T)
    surface = CovarianceSurface(grid=sample.grid, matrix=surface_matrix,
                                kind=KIND_PASS)
    return eigendecompose(surface, q)
