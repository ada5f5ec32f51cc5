import numpy as np
import pytest

from core.errors import DimensionMismatch, InsufficientSupport, InvalidParameter
from models import DatasetId, HermiteDatasetSpec
from services.data_service import DataMatrix, generate_hermite_dataset
from services.diagnostics_service import conditional_expectation, diagnose, ensemble_mean, extreme_sample


def labelled(values, input_rows=(1, 2)):
    return DataMatrix(np.asarray(values, dtype=np.float64), input_rows=input_rows)


def test_ensemble_mean():
    a = DataMatrix(np.array([[1.0, 2.0], [3.0, 4.0]]), feature_labels=["p", "q"])
    b = DataMatrix(np.array([[3.0, 0.0], [1.0, 0.0]]))
    mean = ensemble_mean([a, b])
    np.testing.assert_array_equal(mean.values, [[2.0, 1.0], [2.0, 2.0]])
    assert mean.feature_labels == ["p", "q"]


def test_ensemble_mean_rejects_mixed_shapes():
    with pytest.raises(DimensionMismatch):
        ensemble_mean([DataMatrix(np.zeros((2, 3))), DataMatrix(np.zeros((2, 4)))])
    with pytest.raises(InvalidParameter):
        ensemble_mean([])


def test_conditional_of_constant_feature():
    rng = np.random.default_rng(5)
    inputs = rng.normal(size=(2, 500))
    sample = labelled(np.vstack([np.full(500, 3.0), inputs]))
    grid = np.array([[0.0, 0.0], [0.5, -0.3], [-1.0, 1.0]])
    expected = conditional_expectation([sample], grid)
    assert expected.values.shape == (1, 3)
    np.testing.assert_allclose(expected.values, 3.0, rtol=1e-12)


def test_conditional_pools_realizations():
    rng = np.random.default_rng(6)
    first = labelled(np.vstack([np.full(200, 1.0), rng.normal(size=(2, 200))]))
    second = labelled(np.vstack([np.full(200, 1.0), rng.normal(size=(2, 200))]))
    expected = conditional_expectation([first, second], np.zeros((1, 2)))
    assert expected.values[0, 0] == pytest.approx(1.0)


def test_conditional_without_support():
    rng = np.random.default_rng(7)
    sample = labelled(np.vstack([rng.normal(size=100), rng.normal(size=(2, 100))]))
    with pytest.raises(InsufficientSupport):
        conditional_expectation([sample], np.array([[100.0, 100.0]]))


def test_conditional_needs_input_rows():
    with pytest.raises(InvalidParameter):
        conditional_expectation([DataMatrix(np.zeros((3, 10)))], np.zeros((1, 2)))
    with pytest.raises(InvalidParameter):
        conditional_expectation([labelled(np.zeros((3, 10)))], np.zeros((1, 2)), bandwidth=0.0)


def test_conditional_grid_dimension_checked():
    sample = labelled(np.random.default_rng(8).normal(size=(3, 50)))
    with pytest.raises(DimensionMismatch):
        conditional_expectation([sample], np.zeros((2, 3)))


def test_conditional_recovers_noise_free_hermite_map():
    data = generate_hermite_dataset(
        HermiteDatasetSpec(dataset_id=DatasetId.D1, n_samples=20000, noise_std=0.0, seed=1)
    )
    axis = np.array([-0.5, 0.0, 0.5])
    grid = np.array([[a, b] for a in axis for b in axis])
    expected = conditional_expectation([data], grid, bandwidth=0.2)
    x1, x2 = grid[:, 0], grid[:, 1]
    truth = np.vstack([x2, x1, (x2**2 - 1.0) / np.sqrt(2.0)])
    assert np.max(np.abs(expected.values - truth)) <= 0.05
    assert expected.feature_labels == data.features().feature_labels


def test_ks_is_zero_for_copy_and_one_for_shift(d1_model):
    training = d1_model.training
    same = diagnose(d1_model, [training])
    assert same.ks_statistic == [0.0] * training.n_features
    shifted = diagnose(d1_model, [training.with_values(training.values + 10.0)])
    assert shifted.ks_statistic == [1.0] * training.n_features


def test_diagnose_report_contents(d1_model):
    training = d1_model.training
    report = diagnose(d1_model, [training, training])
    assert report.n_realizations == 2
    assert report.feature_labels == training.labels()
    np.testing.assert_allclose(report.generated_mean, report.data_mean, atol=1e-12)
    assert report.latent_mean_error <= 1e-10
    assert report.latent_covariance_error <= 1e-8
    assert len(report.gh_train_r2) == training.n_features
    assert report.gh_test_r2 is not None
    assert len(report.gh_test_r2) == training.n_features


def test_diagnose_rejects_wrong_rows(d1_model):
    with pytest.raises(DimensionMismatch):
        diagnose(d1_model, [DataMatrix(np.zeros((7, 10)))])
    with pytest.raises(InvalidParameter):
        diagnose(d1_model, [])


def test_extreme_sample(d1_model):
    report = extreme_sample(d1_model)
    training = d1_model.training
    assert 0 <= report.index < training.n_samples
    assert report.sample == training.values[:, report.index].tolist()
    assert len(report.reconstruction) == training.n_features
    assert report.reconstruction_rmse >= 0.0
    assert report.mean_latent_distance > 0.0
