"""Recovery of eigenvalue ratios from the pairwise covariance spectrum.

The pairwise self-normalized surface has the same eigenfunctions as the
classical covariance but nonlinearly shrunken eigenvalues.  The ratios
``lambda_j / lambda_1`` of the classical spectrum satisfy a fixed-point
relation driven by expectations of the form

    f_k(Lambda) = E[ V_k^2 / (V_1^2 + sum_{l>=2} lambda_l V_l^2) ],

where ``V_l`` are standardized projections of curve differences onto the
pairwise-surface eigenfunctions.  Two interchangeable evaluations of
``f_k`` are provided: a Monte-Carlo average over observed curve pairs
(:func:`eigenratio_mc`), valid for general score distributions, and a
closed one-dimensional integral valid under elliptical scores
(:func:`eigenratio_elliptical`).  A sample-based diagnostic
(:func:`convergence_condition`) checks the contraction condition that
guarantees the iteration converges near the fixed point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad

from .errors import (
    DegenerateSampleError,
    DimensionMismatchError,
    InsufficientSampleError,
    ThresholdError,
)
from .estimators import EigenSystem
from .grid import FunctionalSample

__all__ = [
    "METHOD_MONTE_CARLO",
    "METHOD_ELLIPTICAL",
    "PairScores",
    "EigenratioEstimate",
    "ConvergenceDiagnostic",
    "pair_scores",
    "eigenratio_mc",
    "elliptical_expectation",
    "eigenratio_elliptical",
    "convergence_condition",
    "cpve",
    "rank_select",
]

METHOD_MONTE_CARLO = "monte_carlo"
METHOD_ELLIPTICAL = "elliptical"

# Numerical cap for 1/x when a fixed-point coordinate approaches zero.
_BOUND_CAP = 1e12


@dataclass
class PairScores:
    """Standardized projections of curve differences onto eigenfunctions.

    For every unordered curve pair ``(i, j)`` with ``i < j`` and every
    component ``l``, ``scores[p, l]`` holds
    ``s_l^{-1/2} <x_i - x_j, phi_l>`` under the grid quadrature.  The
    standardizer ``s_l`` is the mean squared projection over the pairs
    retained after trimming, so retained squared scores average to one in
    each column.

    Attributes
    ----------
    q : int
        Number of components.
    scores : numpy.ndarray
        ``(P, q)`` matrix with ``P = n(n-1)/2``.
    standardizers : numpy.ndarray
        The positive constants ``s_l``.
    trim_fraction : float
        Fraction of pairs trimmed per component, in ``[0, 0.1]``.
    retained : numpy.ndarray
        ``(P, q)`` boolean matrix; False marks a projection trimmed for
        its component.
    """

    q: int
    scores: np.ndarray = field(repr=False)
    standardizers: np.ndarray = field(repr=False)
    trim_fraction: float = 0.0
    retained: np.ndarray = field(default=None, repr=False)

    @property
    def n_pairs(self) -> int:
        """Total number of curve pairs."""
        return self.scores.shape[0]

    @property
    def joint_mask(self) -> np.ndarray:
        """Pairs retained in every component simultaneously."""
        return self.retained.all(axis=1)


@dataclass
class EigenratioEstimate:
    """Result of a fixed-point eigenratio recovery.

    Attributes
    ----------
    ratios : numpy.ndarray
        Estimated ``lambda_j / lambda_1`` with the first entry pinned to
        one.
    iterations : int
        Number of fixed-point updates performed.
    converged : bool
        True when the last update moved every ratio by at most ``tol``.
    final_delta : float
        Max-norm of the last update step.
    method : str
        ``"monte_carlo"`` or ``"elliptical"``.
    """

    ratios: np.ndarray
    iterations: int
    converged: bool
    final_delta: float
    method: str


@dataclass
class ConvergenceDiagnostic:
    """Per-component margins of the fixed-point contraction condition.

    For components ``k = 2..Q`` the condition requires the row sum
    ``lhs[k]`` of the fixed-point Jacobian surrogate to stay below
    ``1 / x_star[k]``.  Positive margins indicate the iteration contracts
    near the supplied point.
    """

    lhs: np.ndarray
    bound: np.ndarray
    margin: np.ndarray


def pair_scores(sample: FunctionalSample, eigensystem: EigenSystem,
                q: int, trim_fraction: float = 0.02) -> PairScores:
    """Project all pairwise curve differences onto the leading
    eigenfunctions, trim extremes, and standardize.

    Trimming removes exactly ``ceil(trim_fraction * P)`` projections of
    largest magnitude in each component before the standardizers are
    computed, which keeps single wild pairs from dominating the
    normalization under heavy-tailed scores.

    Parameters
    ----------
    sample : FunctionalSample
        At least two curves.
    eigensystem : EigenSystem
        Eigenfunctions to project onto (typically from the pairwise
        surface).
    q : int
        Number of leading components to use; at most ``eigensystem.q``.
    trim_fraction : float
        Fraction of pairs to trim per component, in ``[0, 0.1]``.

    Returns
    -------
    PairScores
        Standardized projections with their retention mask.
    """
    if sample.n < 2:
        raise InsufficientSampleError(
            f"pair projections need at least 2 curves, got {sample.n}")
    if not 1 <= q <= eigensystem.q:
        raise DimensionMismatchError(
            f"q must be between 1 and {eigensystem.q}, got {q}")
    if not 0.0 <= trim_fraction <= 0.1:
        raise DimensionMismatchError(
            f"trim_fraction must be in [0, 0.1], got {trim_fraction}")
    values = sample.values
    basis = eigensystem.eigenfunctions[:, :q]
    spacing = sample.grid.spacing
    # Projections of each curve, combined pairwise by subtraction.
    curve_proj = spacing * (values @ basis)
    n = sample.n
    i_idx, j_idx = np.triu_indices(n, k=1)
    raw = curve_proj[i_idx] - curve_proj[j_idx]
    n_pairs = raw.shape[0]
    n_trim = math.ceil(trim_fraction * n_pairs) if trim_fraction > 0 else 0
    retained = np.ones((n_pairs, q), dtype=bool)
    standardizers = np.empty(q)
    scores = np.empty_like(raw)
    for col in range(q):
        if n_trim > 0:
            order = np.argsort(np.abs(raw[:, col]), kind="stable")
            retained[order[n_pairs - n_trim:], col] = False
        kept = raw[retained[:, col], col]
        if kept.size == 0:
            raise DegenerateSampleError(
                f"component {col}: trimming removed every pair; lower "
                f"trim_fraction or provide more curves")
        s = float(np.mean(kept ** 2))
        if s <= 0.0:
            raise DegenerateSampleError(
                f"component {col}: all pair projections are zero")
        standardizers[col] = s
        scores[:, col] = raw[:, col] / math.sqrt(s)
    return PairScores(q=q, scores=scores, standardizers=standardizers,
                      trim_fraction=trim_fraction, retained=retained)


def _validate_fixed_point_inputs(pass_eigenvalues: np.ndarray,
                                 init: Optional[np.ndarray],
                                 tol: float, max_iter: int,
                                 ) -> tuple[np.ndarray, np.ndarray]:
    kappa = np.asarray(pass_eigenvalues, dtype=float)
    if kappa.ndim != 1 or kappa.size < 1:
        raise DimensionMismatchError(
            "pass_eigenvalues must be a nonempty vector")
    if np.any(kappa <= 0.0):
        raise DegenerateSampleError(
            "pass_eigenvalues must all be positive for ratio recovery")
    if np.any(np.diff(kappa) > 0.0):
        raise DimensionMismatchError("pass_eigenvalues must be nonincreasing")
    if tol <= 0.0:
        raise DimensionMismatchError(f"tol must be positive, got {tol}")
    if max_iter < 1:
        raise DimensionMismatchError(
            f"max_iter must be at least 1, got {max_iter}")
    if init is None:
        start = np.ones_like(kappa)
    else:
        start = np.asarray(init, dtype=float)
        if start.shape != kappa.shape:
            raise DimensionMismatchError(
                f"init must have shape {kappa.shape}, got {start.shape}")
        if np.any(start <= 0.0):
            raise DimensionMismatchError("init ratios must all be positive")
        start = start / start[0]
    return kappa / kappa[0], start


def _run_fixed_point(f_eval: Callable[[np.ndarray], np.ndarray],
                     kappa_ratios: np.ndarray, start: np.ndarray,
                     tol: float, max_iter: int,
                     method: str) -> EigenratioEstimate:
    """Iterate lambda_k <- (kappa_k / kappa_1) f_1(Lambda)/f_k(Lambda)."""
    current = start.copy()
    current[0] = 1.0
    delta = math.inf
    iterations = 0
    converged = False
    for iterations in range(1, max_iter + 1):
        f = f_eval(current)
        if not np.all(f > 0.0):
            raise DegenerateSampleError(
                "fixed-point update produced a nonpositive expectation; "
                "the projections carry no usable signal")
        proposal = kappa_ratios * (f[0] / f)
        proposal[0] = 1.0
        delta = float(np.max(np.abs(proposal - current)))
        current = proposal
        if delta <= tol:
            converged = True
            break
    return EigenratioEstimate(ratios=current, iterations=iterations,
                              converged=converged, final_delta=delta,
                              method=method)


def eigenratio_mc(pairscores: PairScores, pass_eigenvalues: np.ndarray,
                  init: Optional[np.ndarray] = None, tol: float = 1e-8,
                  max_iter: int = 500) -> EigenratioEstimate:
    """Eigenratio recovery with pair-averaged expectations.

    Parameters
    ----------
    pairscores : PairScores
        Standardized pair projections; averages run over the pairs
        retained in every component.
    pass_eigenvalues : numpy.ndarray
        Leading eigenvalues of the pairwise surface, positive and
        nonincreasing; only their ratios enter the update.
    init : numpy.ndarray, optional
        Starting ratios (eigenratios of the classical covariance are a
        good choice).  Defaults to all ones.
    tol : float
        Max-norm stopping tolerance on the ratio vector.
    max_iter : int
        Iteration budget.  Exceeding it returns a result flagged
        ``converged=False`` rather than raising, so sweeps never abort.

    Returns
    -------
    EigenratioEstimate
        Ratios with the first entry pinned to one.
    """
    kappa_ratios, start = _validate_fixed_point_inputs(
        pass_eigenvalues, init, tol, max_iter)
    q = kappa_ratios.size
    if pairscores.q != q:
        raise DimensionMismatchError(
            f"pairscores have {pairscores.q} components but "
            f"{q} eigenvalues were supplied")
    squared = pairscores.scores[pairscores.joint_mask] ** 2
    if squared.shape[0] == 0:
        raise DegenerateSampleError(
            "no pair is retained in every component; lower trim_fraction")

    def f_eval(lam: np.ndarray) -> np.ndarray:
        denom = squared[:, 0] + squared[:, 1:] @ lam[1:]
        good = denom > 0.0
        if not np.any(good):
            raise DegenerateSampleError(
                "all retained pairs have zero projection norm")
        return (squared[good] / denom[good, None]).mean(axis=0)

    return _run_fixed_point(f_eval, kappa_ratios, start, tol, max_iter,
                            METHOD_MONTE_CARLO)


@lru_cache(maxsize=1)
def _fixed_rule_nodes() -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(2048)
    # Map from [-1, 1] to (0, 1).
    return 0.5 * (nodes + 1.0), 0.5 * weights


def elliptical_expectation(ratios, j: int, rule: str = "adaptive") -> float:
    """Evaluate ``E[U_j^2 / sum_k ratios_k U_k^2]`` for Gaussian ``U``.

    Uses the one-dimensional integral representation

        (1/2) * integral_0^inf (1 + r_j v)^{-1}
                prod_{k=1..Q} (1 + r_k v)^{-1/2} dv,

    where the square-root product runs over every coordinate, evaluated
    after the substitution ``v = t / (1 - t)``.

    Parameters
    ----------
    ratios : sequence of float
        Positive weights ``r_k``; the callers in this module always pass
        a vector normalized so the first entry is one, but any positive
        vector is accepted.
    j : int
        Component index, counting from 1.
    rule : str
        ``"adaptive"`` (default) for adaptive quadrature to roughly 1e-10,
        or ``"fixed"`` for a deterministic 2048-node Gauss-Legendre rule.

    Returns
    -------
    float
        The expectation; values for ``j = 1..Q`` weighted by ``ratios``
        sum to one.
    """
    r = np.asarray(ratios, dtype=float)
    if r.ndim != 1 or r.size < 1:
        raise DimensionMismatchError("ratios must be a nonempty vector")
    if np.any(r <= 0.0):
        raise DimensionMismatchError(
            "ratios must all be positive for the elliptical integral")
    if not 1 <= j <= r.size:
        raise DimensionMismatchError(
            f"component index must be in 1..{r.size}, got {j}")
    if r.size == 1:
        return 1.0
    rj = r[j - 1]

    def integrand(t: float) -> float:
        if t >= 1.0:
            return 0.0
        v = t / (1.0 - t)
        jacobian = 1.0 / (1.0 - t) ** 2
        prod = np.prod(np.sqrt(1.0 + r * v))
        return 0.5 * jacobian / ((1.0 + rj * v) * prod)

    if rule == "adaptive":
        value, _ = quad(integrand, 0.0, 1.0, epsabs=1e-10, epsrel=1e-10,
                        limit=200)
        return float(value)
    if rule == "fixed":
        nodes, weights = _fixed_rule_nodes()
        v = nodes / (1.0 - nodes)
        jacobian = 1.0 / (1.0 - nodes) ** 2
        prod = np.prod(np.sqrt(1.0 + r[:, None] * v[None, :]), axis=0)
        values = 0.5 * jacobian / ((1.0 + rj * v) * prod)
        return float(np.dot(weights, values))
    raise DimensionMismatchError(
        f"rule must be 'adaptive' or 'fixed', got {rule!r}")


def eigenratio_elliptical(pass_eigenvalues: np.ndarray,
                          init: Optional[np.ndarray] = None,
                          tol: float = 1e-8, max_iter: int = 500,
                          rule: str = "adaptive") -> EigenratioEstimate:
    """Eigenratio recovery assuming elliptically distributed scores.

    Runs the same fixed-point iteration as :func:`eigenratio_mc` but
    evaluates the expectations with :func:`elliptical_expectation`, so no
    pair projections are needed.  Valid when the scores are elliptical;
    under skewed score laws it systematically underestimates the leading
    ratios.

    Parameters
    ----------
    pass_eigenvalues : numpy.ndarray
        Leading eigenvalues of the pairwise surface.
    init, tol, max_iter :
        As in :func:`eigenratio_mc`.
    rule : str
        Quadrature rule passed through to :func:`elliptical_expectation`.

    Returns
    -------
    EigenratioEstimate
        Ratios with ``method="elliptical"``.
    """
    kappa_ratios, start = _validate_fixed_point_inputs(
        pass_eigenvalues, init, tol, max_iter)
    q = kappa_ratios.size

    def f_eval(lam: np.ndarray) -> np.ndarray:
        return np.array([elliptical_expectation(lam, k, rule=rule)
                         for k in range(1, q + 1)])

    return _run_fixed_point(f_eval, kappa_ratios, start, tol, max_iter,
                            METHOD_ELLIPTICAL)


def convergence_condition(pairscores: PairScores,
                          x_star) -> ConvergenceDiagnostic:
    """Sample check of the contraction condition at a candidate fixed
    point.

    For each component ``k`` the update map contracts near ``x_star``
    when the aggregated sensitivity of ``f`` to the other coordinates,
    estimated from the pair projections, stays below ``1 / x_star[k]``.

    Parameters
    ----------
    pairscores : PairScores
        Standardized pair projections with ``q`` components.
    x_star : sequence of float
        Candidate ratios for components ``2..q`` (length ``q - 1``),
        nonnegative; zero entries produce the capped bound.

    Returns
    -------
    ConvergenceDiagnostic
        Arrays ``lhs``, ``bound`` (capped at 1e12) and
        ``margin = bound - lhs``, one entry per component ``2..q``.
    """
    x = np.asarray(x_star, dtype=float)
    q = pairscores.q
    if x.shape != (q - 1,):
        raise DimensionMismatchError(
            f"x_star must have length {q - 1}, got shape {x.shape}")
    if np.any(x < 0.0):
        raise DimensionMismatchError("x_star entries must be nonnegative")
    squared = pairscores.scores[pairscores.joint_mask] ** 2
    if squared.shape[0] == 0:
        raise DegenerateSampleError(
            "no pair is retained in every component; lower trim_fraction")
    denom = squared[:, 0] + squared[:, 1:] @ x
    good = denom > 0.0
    if not np.any(good):
        raise DegenerateSampleError(
            "all retained pairs have zero projection norm")
    squared = squared[good]
    denom = denom[good]
    ratio1 = squared / denom[:, None]          # V_m^2 / den
    first_order = ratio1.mean(axis=0)          # E[V_m^2 / den]
    # cross[m, l] = E[V_m^2 V_l^2 / den^2], indexed from the leading
    # component at m = 0.
    cross = (ratio1[:, :, None] * ratio1[:, None, :]).mean(axis=0)
    lhs = np.empty(q - 1)
    for k in range(1, q):
        terms = (-cross[0, 1:] / first_order[0]
                 + cross[k, 1:] / first_order[k])
        lhs[k - 1] = np.sum(np.abs(terms))
    with np.errstate(divide="ignore"):
        bound = np.where(x > 0.0, 1.0 / np.maximum(x, 1.0 / _BOUND_CAP),
                         _BOUND_CAP)
    bound = np.minimum(bound, _BOUND_CAP)
    return ConvergenceDiagnostic(lhs=lhs, bound=bound, margin=bound - lhs)


def cpve(eigenvalues, big_q: int) -> float:
    """Cumulative proportion of variance explained by the top ``big_q``
    eigenvalues."""
    vals = np.asarray(eigenvalues, dtype=float)
    if vals.ndim != 1 or vals.size < 1:
        raise DimensionMismatchError("eigenvalues must be a nonempty vector")
    if not 1 <= big_q <= vals.size:
        raise DimensionMismatchError(
            f"big_q must be in 1..{vals.size}, got {big_q}")
    total = float(vals.sum())
    if total <= 0.0:
        raise DegenerateSampleError(
            "eigenvalues sum to zero; proportions are undefined")
    return float(vals[:big_q].sum() / total)


def rank_select(pass_eigenvalues, threshold: float) -> int:
    """Smallest rank whose cumulative explained variance reaches the
    threshold.

    The pairwise surface has unit trace, so its eigenvalues are already
    proportions of total variance and the cumulative sums are used as
    is.  Passing only the retained head of the spectrum therefore makes
    high thresholds honestly unreachable instead of silently
    renormalizing.  Because the pairwise surface spreads its spectrum
    more evenly than the classical covariance, the rank selected here is
    a conservative (never smaller) choice for the classical spectrum as
    well.
    """
    if not 0.0 < threshold < 1.0:
        raise DimensionMismatchError(
            f"threshold must lie in (0, 1), got {threshold}")
    vals = np.asarray(pass_eigenvalues, dtype=float)
    if vals.ndim != 1 or vals.size < 1:
        raise DimensionMismatchError(
            "pass_eigenvalues must be a nonempty vector")
    if float(vals.sum()) <= 0.0:
        raise DegenerateSampleError(
            "eigenvalues sum to zero; proportions are undefined")
    cumulative = np.cumsum(vals)
    reached = np.nonzero(cumulative >= threshold)[0]
    if reached.size == 0:
        raise ThresholdError(
            f"threshold {threshold} is unreachable: the retained "
            f"eigenvalues only explain {cumulative[-1]:.6f}")
    return int(reached[0] + 1)
