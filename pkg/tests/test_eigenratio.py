"""Tests for pair projections, the fixed-point ratio solvers, and the
convergence diagnostic."""

import math

import numpy as np
import pytest

from passfpca import (
    DegenerateSampleError,
    DimensionMismatchError,
    EigenSystem,
    FunctionalSample,
    PairScores,
    SimulationConfig,
    ThresholdError,
    convergence_condition,
    cpve,
    eigendecompose,
    eigenratio_elliptical,
    eigenratio_mc,
    elliptical_expectation,
    generate,
    make_grid,
    pair_scores,
    pass_covariance,
    rank_select,
    sample_covariance,
)


def _gaussian_fit(n, seed, trim=0.0):
    sample, _ = generate(SimulationConfig(n=n, seed=seed))
    system = eigendecompose(pass_covariance(sample), 4)
    scores = pair_scores(sample, system, 4, trim)
    return sample, system, scores


def _synthetic_pairscores(rng, n_pairs, q):
    """Standardized i.i.d. Gaussian projections with no trimming."""
    raw = rng.standard_normal((n_pairs, q))
    raw = raw / np.sqrt(np.mean(raw ** 2, axis=0))
    return PairScores(q=q, scores=raw, standardizers=np.ones(q),
                      trim_fraction=0.0,
                      retained=np.ones((n_pairs, q), dtype=bool))


# ---------------------------------------------------------------------------
# pair_scores


def test_pair_scores_single_pair():
    grid = make_grid(6)
    values = np.vstack([np.zeros(6), np.linspace(0, 1, 6)])
    sample = FunctionalSample(grid=grid, values=values)
    system = eigendecompose(pass_covariance(sample), 2)
    scores = pair_scores(sample, system, 2, trim_fraction=0.0)
    assert scores.n_pairs == 1
    squared = scores.scores[0] ** 2
    for col in range(2):
        if scores.standardizers[col] > 0:
            assert squared[col] == pytest.approx(1.0, rel=1e-10)


def test_pair_scores_column_means_without_trimming():
    _, _, scores = _gaussian_fit(n=200, seed=42, trim=0.0)
    means = np.mean(scores.scores ** 2, axis=0)
    np.testing.assert_allclose(means, 1.0, atol=1e-10)
    assert scores.retained.all()


def test_pair_scores_trim_counts():
    sample, system, _ = _gaussian_fit(n=40, seed=9)
    n_pairs = 40 * 39 // 2
    for fraction in (0.01, 0.05, 0.1):
        scores = pair_scores(sample, system, 4, trim_fraction=fraction)
        expected = math.ceil(fraction * n_pairs)
        removed = (~scores.retained).sum(axis=0)
        np.testing.assert_array_equal(removed, expected)
        # Retained squared scores still average to one by construction.
        for col in range(4):
            kept = scores.scores[scores.retained[:, col], col]
            assert np.mean(kept ** 2) == pytest.approx(1.0, rel=1e-8)


def test_pair_scores_trimmed_are_the_largest():
    sample, system, _ = _gaussian_fit(n=30, seed=4)
    scores = pair_scores(sample, system, 4, trim_fraction=0.05)
    for col in range(4):
        kept = np.abs(scores.scores[scores.retained[:, col], col])
        cut = np.abs(scores.scores[~scores.retained[:, col], col])
        assert kept.max() <= cut.min() + 1e-12


def test_pair_scores_validation():
    sample, system, _ = _gaussian_fit(n=20, seed=1)
    with pytest.raises(DimensionMismatchError):
        pair_scores(sample, system, 5, 0.0)
    with pytest.raises(DimensionMismatchError):
        pair_scores(sample, system, 0, 0.0)
    with pytest.raises(DimensionMismatchError):
        pair_scores(sample, system, 4, 0.2)
    with pytest.raises(DimensionMismatchError):
        pair_scores(sample, system, 4, -0.01)


def test_pair_scores_degenerate_component():
    # Curves vary only along a direction exactly orthogonal to the basis,
    # so every pair projection is identically zero.
    grid = make_grid(8)
    flat = np.ones(8)
    alternating = np.tile([1.0, -1.0], 4)
    values = np.outer([1.0, 2.0, -1.0], flat)
    sample = FunctionalSample(grid=grid, values=values)
    basis = np.column_stack(
        [alternating / np.sqrt(grid.spacing * alternating @ alternating)])
    system = EigenSystem(grid=grid, eigenvalues=np.array([1.0]),
                         eigenfunctions=basis, q=1)
    with pytest.raises(DegenerateSampleError):
        pair_scores(sample, system, 1, 0.0)


# ---------------------------------------------------------------------------
# eigenratio_mc


def test_eigenratio_mc_symmetric_fixed_point():
    rng = np.random.default_rng(0)
    column = rng.standard_normal(5000)
    column = column / np.sqrt(np.mean(column ** 2))
    scores = PairScores(q=3, scores=np.column_stack([column] * 3),
                        standardizers=np.ones(3), trim_fraction=0.0,
                        retained=np.ones((5000, 3), dtype=bool))
    estimate = eigenratio_mc(scores, np.array([0.4, 0.4, 0.4]))
    np.testing.assert_allclose(estimate.ratios, 1.0, atol=0.0)
    assert estimate.converged
    assert estimate.iterations == 1


def test_eigenratio_mc_recovers_truth_at_moderate_size():
    # Median over a few replicates keeps single-sample noise from
    # dominating the accuracy check.
    estimates = []
    for seed in range(5):
        sample, system, scores = _gaussian_fit(n=400, seed=seed, trim=0.02)
        classical = eigendecompose(sample_covariance(sample), 4)
        init = classical.eigenvalues / classical.eigenvalues[0]
        estimate = eigenratio_mc(scores, system.eigenvalues, init=init)
        assert estimate.converged
        estimates.append(estimate.ratios)
    median = np.median(estimates, axis=0)
    np.testing.assert_allclose(median, [1.0, 0.5, 0.25, 0.125], atol=0.05)


def test_eigenratio_mc_multistart_uniqueness():
    _, system, scores = _gaussian_fit(n=200, seed=77, trim=0.02)
    starts = [None,
              np.array([1.0, 1.0, 1.0, 1.0]),
              np.array([1.0, 0.5, 0.25, 0.125]),
              np.array([1.0, 0.9, 0.5, 0.3])]
    solutions = [eigenratio_mc(scores, system.eigenvalues, init=s).ratios
                 for s in starts]
    for other in solutions[1:]:
        np.testing.assert_allclose(other, solutions[0], atol=1e-6)


def test_eigenratio_mc_fixed_point_residence():
    _, system, scores = _gaussian_fit(n=150, seed=8, trim=0.02)
    estimate = eigenratio_mc(scores, system.eigenvalues, tol=1e-10)
    assert estimate.converged
    again = eigenratio_mc(scores, system.eigenvalues,
                          init=estimate.ratios, tol=1e-8, max_iter=1)
    assert again.converged
    assert again.final_delta <= 1e-8


def test_eigenratio_mc_scale_invariance():
    _, system, scores = _gaussian_fit(n=100, seed=55, trim=0.02)
    base = eigenratio_mc(scores, system.eigenvalues)
    scaled = eigenratio_mc(scores, system.eigenvalues * 37.5)
    np.testing.assert_allclose(scaled.ratios, base.ratios, atol=1e-12)


def test_eigenratio_mc_monotone_ratios():
    for seed in (10, 20, 30):
        _, system, scores = _gaussian_fit(n=200, seed=seed, trim=0.02)
        estimate = eigenratio_mc(scores, system.eigenvalues)
        assert estimate.converged
        assert np.all(np.diff(estimate.ratios) <= 1e-8)


def test_eigenratio_mc_nonconvergence_is_flagged():
    _, system, scores = _gaussian_fit(n=100, seed=3, trim=0.02)
    estimate = eigenratio_mc(scores, system.eigenvalues, tol=1e-14,
                             max_iter=2)
    assert not estimate.converged
    assert estimate.iterations == 2
    assert estimate.final_delta > 1e-14
    assert estimate.ratios[0] == 1.0


def test_eigenratio_mc_validation():
    _, system, scores = _gaussian_fit(n=50, seed=6, trim=0.0)
    with pytest.raises(DegenerateSampleError):
        eigenratio_mc(scores, np.array([1.0, 0.5, 0.25, -0.1]))
    with pytest.raises(DimensionMismatchError):
        eigenratio_mc(scores, np.array([1.0, 0.5, 0.6, 0.25]))
    with pytest.raises(DimensionMismatchError):
        eigenratio_mc(scores, system.eigenvalues,
                      init=np.array([1.0, -0.5, 0.25, 0.125]))
    with pytest.raises(DimensionMismatchError):
        eigenratio_mc(scores, system.eigenvalues[:3])


# ---------------------------------------------------------------------------
# elliptical_expectation


def test_elliptical_expectation_symmetric_half():
    assert elliptical_expectation([1.0, 1.0], 1) == pytest.approx(
        0.5, abs=1e-9)
    assert elliptical_expectation([1.0, 1.0], 2) == pytest.approx(
        0.5, abs=1e-9)


def test_elliptical_expectation_two_component_closed_form():
    # E[U1^2 / (U1^2 + x U2^2)] = 1 / (1 + sqrt(x)).
    for x in (0.5, 0.25, 0.1, 0.9):
        value = elliptical_expectation([1.0, x], 1)
        assert value == pytest.approx(1.0 / (1.0 + math.sqrt(x)), abs=1e-8)
    assert elliptical_expectation([1.0, 0.5], 1) == pytest.approx(
        2.0 - math.sqrt(2.0), abs=1e-8)


def test_elliptical_expectation_vanishing_second_component():
    assert elliptical_expectation([1.0, 1e-12], 1) == pytest.approx(
        1.0, abs=1e-5)


def test_elliptical_expectation_single_component():
    assert elliptical_expectation([2.5], 1) == 1.0


def test_elliptical_expectation_sum_identity():
    rng = np.random.default_rng(12)
    for _ in range(10):
        q = rng.integers(2, 7)
        ratios = rng.uniform(0.05, 2.0, size=q)
        total = sum(ratios[j - 1] * elliptical_expectation(ratios, j)
                    for j in range(1, q + 1))
        assert total == pytest.approx(1.0, abs=1e-6)


def test_elliptical_expectation_fixed_rule_matches_adaptive():
    rng = np.random.default_rng(5)
    for _ in range(5):
        ratios = np.sort(rng.uniform(0.05, 1.0, size=4))[::-1]
        ratios[0] = 1.0
        for j in (1, 2, 4):
            adaptive = elliptical_expectation(ratios, j)
            fixed = elliptical_expectation(ratios, j, rule="fixed")
            assert fixed == pytest.approx(adaptive, abs=1e-8)


def test_elliptical_expectation_monte_carlo_spot_check():
    ratios = np.array([1.0, 0.6, 0.3, 0.1])
    rng = np.random.default_rng(2024)
    draws = rng.standard_normal((1_000_000, 4))
    weighted = (draws ** 2 * ratios).sum(axis=1)
    for j in (1, 3):
        mc = np.mean(draws[:, j - 1] ** 2 / weighted)
        assert elliptical_expectation(ratios, j) == pytest.approx(
            mc, abs=3e-3)


def test_elliptical_expectation_validation():
    with pytest.raises(DimensionMismatchError):
        elliptical_expectation([1.0, -0.5], 1)
    with pytest.raises(DimensionMismatchError):
        elliptical_expectation([1.0, 0.5], 0)
    with pytest.raises(DimensionMismatchError):
        elliptical_expectation([1.0, 0.5], 3)
    with pytest.raises(DimensionMismatchError):
        elliptical_expectation([1.0, 0.5], 1, rule="trapezoid")


# ---------------------------------------------------------------------------
# eigenratio_elliptical


def test_eigenratio_elliptical_equal_eigenvalues():
    estimate = eigenratio_elliptical(np.array([0.3, 0.3, 0.3]))
    np.testing.assert_allclose(estimate.ratios, 1.0, atol=1e-10)
    assert estimate.method == "elliptical"


def test_eigenratio_elliptical_gaussian_run():
    sample, system, _ = _gaussian_fit(n=400, seed=101)
    estimate = eigenratio_elliptical(system.eigenvalues)
    assert estimate.converged
    np.testing.assert_allclose(estimate.ratios,
                               [1.0, 0.5, 0.25, 0.125], atol=0.07)


def test_eigenratio_mc_agrees_with_elliptical_on_synthetic_scores():
    # Scores drawn from the Gaussian model make the pair average and the
    # integral two estimates of the same expectation.
    truth = np.array([1.0, 0.5, 0.25, 0.125])
    evaluations = np.array([elliptical_expectation(truth, j)
                            for j in range(1, 5)])
    kappa = truth * evaluations / evaluations[0]
    rng = np.random.default_rng(314)
    scores = _synthetic_pairscores(rng, 20_000, 4)
    mc = eigenratio_mc(scores, kappa)
    elliptical = eigenratio_elliptical(kappa)
    assert mc.converged and elliptical.converged
    np.testing.assert_allclose(mc.ratios, elliptical.ratios, atol=0.05)
    np.testing.assert_allclose(elliptical.ratios, truth, atol=1e-6)


# ---------------------------------------------------------------------------
# convergence_condition


def test_convergence_condition_gaussian_margins_positive():
    _, _, scores = _gaussian_fit(n=200, seed=42, trim=0.02)
    diagnostic = convergence_condition(scores, [0.5, 0.25, 0.125])
    assert diagnostic.margin.shape == (3,)
    assert np.all(diagnostic.margin > 0)
    np.testing.assert_allclose(diagnostic.bound, [2.0, 4.0, 8.0])
    np.testing.assert_allclose(diagnostic.margin,
                               diagnostic.bound - diagnostic.lhs)


def test_convergence_condition_cap_for_vanishing_component():
    rng = np.random.default_rng(6)
    scores = _synthetic_pairscores(rng, 10_000, 2)
    diagnostic = convergence_condition(scores, [1e-15])
    assert diagnostic.bound[0] == pytest.approx(1e12)
    assert diagnostic.margin[0] > 1e11


def test_convergence_condition_exchangeable_components():
    rng = np.random.default_rng(15)
    scores = _synthetic_pairscores(rng, 200_000, 3)
    diagnostic = convergence_condition(scores, [0.5, 0.5])
    assert diagnostic.margin[0] == pytest.approx(diagnostic.margin[1],
                                                 rel=0.05)


def test_convergence_condition_validation():
    rng = np.random.default_rng(1)
    scores = _synthetic_pairscores(rng, 100, 3)
    with pytest.raises(DimensionMismatchError):
        convergence_condition(scores, [0.5])
    with pytest.raises(DimensionMismatchError):
        convergence_condition(scores, [0.5, -0.1])


# ---------------------------------------------------------------------------
# cpve and rank_select


def test_cpve_arithmetic():
    values = [2.0, 1.0, 0.5, 0.25]
    assert cpve(values, 1) == pytest.approx(2.0 / 3.75)
    assert cpve(values, 4) == pytest.approx(1.0)
    assert cpve([1.0, 0.0, 0.0], 1) == pytest.approx(1.0)


def test_cpve_validation():
    with pytest.raises(DegenerateSampleError):
        cpve([0.0, 0.0], 1)
    with pytest.raises(DimensionMismatchError):
        cpve([1.0, 0.5], 3)


def test_rank_select_basic():
    spectrum = [0.5, 0.3, 0.15, 0.05]
    assert rank_select(spectrum, 0.9) == 3
    assert rank_select(spectrum, 0.5) == 1
    assert rank_select(spectrum, 0.999) == 4


def test_rank_select_unreachable():
    with pytest.raises(ThresholdError):
        rank_select([0.5, 0.3], 0.99)
    with pytest.raises(DimensionMismatchError):
        rank_select([0.5, 0.3], 1.5)


def test_rank_select_conservative_for_classical_spectrum():
    sample, _ = generate(SimulationConfig(n=400, seed=60))
    grid_points = sample.grid.n_points
    pass_spectrum = eigendecompose(pass_covariance(sample),
                                   grid_points).eigenvalues
    classical_spectrum = eigendecompose(sample_covariance(sample),
                                        grid_points).eigenvalues
    pass_spectrum = np.clip(pass_spectrum, 0.0, None)
    classical_spectrum = np.clip(classical_spectrum, 0.0, None)
    # The classical spectrum is not trace-normalized, so convert it to
    # proportions before ranking.
    classical_spectrum = classical_spectrum / classical_spectrum.sum()
    for threshold in (0.8, 0.9, 0.95):
        assert rank_select(pass_spectrum, threshold) >= rank_select(
            classical_spectrum, threshold)
