import numpy as np
import pytest

from core.errors import DimensionMismatch, InvalidParameter, NotFitted
from services.data_service import DataMatrix
from services.dmaps_service import epsilon_from_median
from services.gh_service import (
    evaluate,
    fit_gh,
    fit_lift,
    holdout_scores,
    lift,
    nystrom_extend,
    project_training,
)


@pytest.fixture
def scattered():
    rng = np.random.default_rng(14)
    x = rng.uniform(-1.0, 1.0, size=(80, 2))
    y = np.column_stack([np.sin(2 * x[:, 0]) + x[:, 1] ** 2, x[:, 0] * x[:, 1]])
    return x, y, epsilon_from_median(x)


def test_three_point_constant_is_reproduced():
    inputs = np.array([[0.0], [1.0], [2.0]])
    interp = fit_gh(inputs, np.full(3, 4.2), epsilon=1.0, delta=1e-3)
    np.testing.assert_allclose(evaluate(interp, inputs)[:, 0], 4.2, atol=1e-10)


def test_eigenvector_output_has_unit_coefficient(scattered):
    x, _, epsilon = scattered
    leading = fit_gh(x, np.zeros(80), epsilon).eigenvectors[:, 0]
    interp = fit_gh(x, leading, epsilon)
    expected = np.zeros(interp.retained)
    expected[0] = 1.0
    np.testing.assert_allclose(interp.coefficients[:, 0], expected, atol=1e-10)


def test_delta_near_one_keeps_top_mode(scattered):
    x, y, epsilon = scattered
    assert fit_gh(x, y, epsilon, delta=0.999999).retained == 1


def test_retained_eigenvalues_respect_cutoff(scattered):
    x, y, epsilon = scattered
    interp = fit_gh(x, y, epsilon, delta=1e-3)
    assert np.all(interp.eigenvalues >= 1e-3 * interp.eigenvalues[0])
    assert np.all(np.diff(interp.eigenvalues) <= 0)
    np.testing.assert_allclose(interp.eigenvectors.T @ interp.eigenvectors, np.eye(interp.retained), atol=1e-8)


def test_nystrom_consistency_at_training_points(scattered):
    x, y, epsilon = scattered
    interp = fit_gh(x, y, epsilon)
    assert np.max(np.abs(nystrom_extend(interp, x) - interp.eigenvectors)) <= 1e-8


def test_nystrom_decays_far_away(scattered):
    x, y, epsilon = scattered
    interp = fit_gh(x, y, epsilon)
    far = nystrom_extend(interp, np.array([100.0, 100.0]))
    assert np.max(np.abs(far)) < 1e-12


def test_two_point_extension_at_midpoint():
    inputs = np.array([[0.0], [1.0]])
    epsilon = 0.5
    k = np.exp(-1.0 / (2 * epsilon))
    interp = fit_gh(inputs, np.array([1.0, 1.0]), epsilon, delta=1e-6)
    # couples propres de [[1, k], [k, 1]] : (1 + k, [1, 1]/sqrt 2), (1 - k, [1, -1]/sqrt 2)
    np.testing.assert_allclose(interp.eigenvalues, [1 + k, 1 - k], atol=1e-12)
    mid = np.exp(-0.25 / (2 * epsilon))
    values = nystrom_extend(interp, np.array([0.5]))
    assert values[0] == pytest.approx(2 * mid / np.sqrt(2) / (1 + k), abs=1e-12)
    assert values[1] == pytest.approx(0.0, abs=1e-12)


def test_evaluate_at_training_points_is_projection(scattered):
    x, y, epsilon = scattered
    interp = fit_gh(x, y, epsilon, delta=1e-2)
    np.testing.assert_allclose(evaluate(interp, x), project_training(interp), atol=1e-8)


def test_projection_is_idempotent(scattered):
    x, y, epsilon = scattered
    interp = fit_gh(x, y, epsilon, delta=1e-2)
    again = fit_gh(x, project_training(interp), epsilon, delta=1e-2)
    np.testing.assert_allclose(again.coefficients, interp.coefficients, atol=1e-10)


def test_more_modes_never_increase_training_residual(scattered):
    x, y, epsilon = scattered
    residuals = [
        np.linalg.norm(y - project_training(fit_gh(x, y, epsilon, delta=d)))
        for d in (0.5, 1e-1, 1e-2, 1e-3, 1e-4)
    ]
    assert all(a >= b - 1e-12 for a, b in zip(residuals, residuals[1:]))


def test_condition_bound(scattered):
    x, y, epsilon = scattered
    interp = fit_gh(x, y, epsilon, delta=1e-3)
    assert interp.eigenvalues[0] / interp.eigenvalues[-1] <= 1e3


def test_not_fitted():
    interp = fit_gh(np.array([[0.0], [1.0]]), np.zeros(2), 1.0)
    interp.coefficients = None
    with pytest.raises(NotFitted):
        evaluate(interp, np.array([0.5]))


def test_invalid_parameters(scattered):
    x, y, _ = scattered
    with pytest.raises(InvalidParameter):
        fit_gh(x, y, epsilon=-1.0)
    with pytest.raises(InvalidParameter):
        fit_gh(x, y, epsilon=1.0, delta=1.0)
    with pytest.raises(DimensionMismatch):
        fit_gh(x, y[:10], epsilon=1.0)


def test_query_dimension_checked(scattered):
    x, y, epsilon = scattered
    with pytest.raises(DimensionMismatch):
        evaluate(fit_gh(x, y, epsilon), np.zeros(3))


def test_lift_reproduces_points_on_a_line():
    t = np.linspace(0.0, 1.0, 100)
    ambient = DataMatrix(np.vstack([t, 2.0 * t + 1.0, -t]))
    interp = fit_lift(t[:, None], ambient, delta=1e-6)
    recovered = lift(interp, t[:, None])
    relative = np.sqrt(np.mean((recovered - ambient.values) ** 2)) / np.sqrt(np.mean(ambient.values**2))
    assert relative <= 1e-3
    centroid = lift(interp, np.array([[t.mean()]]))
    assert centroid.shape == (3, 1)
    assert np.all(np.isfinite(centroid))


def test_holdout_scores_are_deterministic(scattered):
    x, y, _ = scattered
    ambient = DataMatrix(y.T)
    first = holdout_scores(x, ambient, test_fraction=0.25, seed=5)
    second = holdout_scores(x, ambient, test_fraction=0.25, seed=5)
    np.testing.assert_array_equal(first[1], second[1])
    assert first[0].shape == (2,)
    assert np.all(first[0] > 0.9)
