import numpy as np
import pytest

from core.errors import DimensionMismatch, InvalidParameter, NumericalFailure
from services.density_service import (
    KdeModel,
    analytic_moments,
    bandwidths,
    check_moment_identities,
    force,
    joint_log_density,
    log_pdf,
    pdf,
)


def test_bandwidths_reference_values():
    s, s_hat = bandwidths(100, 2)
    assert s == pytest.approx(0.4641589, abs=1e-7)
    assert s_hat == pytest.approx(0.4227594, abs=1e-7)


def test_modified_bandwidth_is_smaller():
    for n in (10, 100, 1000, 10000):
        for nu in range(1, 21):
            s, s_hat = bandwidths(n, nu)
            assert 0.0 < s_hat < s < 1.0


def test_bandwidth_shrinks_with_n():
    widths = [bandwidths(n, 3)[0] for n in (10, 100, 1000, 10000, 100000)]
    assert all(a > b for a, b in zip(widths, widths[1:]))


def test_bandwidths_reject_bad_sizes():
    with pytest.raises(InvalidParameter):
        bandwidths(1, 2)
    with pytest.raises(InvalidParameter):
        bandwidths(10, 0)


def test_single_center_peak_density():
    model = KdeModel(centers=np.zeros((2, 1)), s=0.5, s_hat=0.4)
    assert pdf(model, np.zeros(2)) == pytest.approx((2 * np.pi * 0.16) ** -1.0)


def test_single_center_force_is_linear_restoring():
    model = KdeModel(centers=np.zeros((3, 1)), s=0.5, s_hat=0.4)
    u = np.array([0.3, -1.2, 2.0])
    np.testing.assert_allclose(force(model, u), -u / 0.16)


def test_symmetric_centers_give_symmetric_density():
    model = KdeModel.fit(np.array([[1.0, -1.0], [0.5, -0.5]]))
    eta = np.array([0.3, -0.7])
    assert abs(pdf(model, eta) - pdf(model, -eta)) <= 1e-12


def test_force_vanishes_at_weighted_center():
    model = KdeModel(centers=np.array([[0.8]]), s=0.5, s_hat=0.4)
    assert force(model, model.shifted_centers[:, 0])[0] == pytest.approx(0.0, abs=1e-12)


def test_force_matches_finite_differences():
    rng = np.random.default_rng(21)
    model = KdeModel.fit(rng.normal(size=(2, 2)))
    h = 1e-5
    for u in rng.normal(size=(100, 2)):
        numeric = np.array(
            [(log_pdf(model, u + h * e) - log_pdf(model, u - h * e)) / (2 * h) for e in np.eye(2)]
        )
        np.testing.assert_allclose(force(model, u), numeric, atol=1e-6)


def test_force_on_columns_matches_single_queries():
    rng = np.random.default_rng(3)
    model = KdeModel.fit(rng.normal(size=(2, 30)))
    U = rng.normal(size=(2, 5))
    columns = force(model, U)
    for j in range(5):
        np.testing.assert_allclose(columns[:, j], force(model, U[:, j]), atol=1e-14)


def test_log_space_matches_naive_sum():
    rng = np.random.default_rng(9)
    model = KdeModel.fit(rng.normal(size=(2, 40)))
    eta = np.array([0.2, -0.1])
    diff = model.shifted_centers - eta[:, None]
    naive = np.mean(np.exp(-np.sum(diff**2, axis=0) / (2 * model.s_hat**2))) / (2 * np.pi * model.s_hat**2)
    assert pdf(model, eta) == pytest.approx(naive, rel=1e-12)


def test_far_query_does_not_underflow_force():
    model = KdeModel.fit(np.random.default_rng(1).normal(size=(2, 50)))
    assert np.all(np.isfinite(force(model, np.array([60.0, -60.0]))))


def test_joint_log_density_sums_columns():
    rng = np.random.default_rng(12)
    model = KdeModel.fit(rng.normal(size=(2, 20)))
    U = rng.normal(size=(2, 2))
    expected = log_pdf(model, U[:, 0]) + log_pdf(model, U[:, 1])
    assert joint_log_density(model, U) == pytest.approx(expected, rel=1e-12)
    assert joint_log_density(model, U[:, ::-1]) == pytest.approx(expected, rel=1e-12)
    assert joint_log_density(model, U[:, :1]) == pytest.approx(log_pdf(model, U[:, 0]))


def test_query_dimension_checked():
    model = KdeModel.fit(np.random.default_rng(0).normal(size=(2, 10)))
    with pytest.raises(DimensionMismatch):
        pdf(model, np.zeros(3))


def test_moment_identities_hold_on_standardized_centers(standardized_cloud):
    model = KdeModel.fit(standardized_cloud)
    mean_error, second_error = check_moment_identities(model)
    assert mean_error <= 1e-10
    assert second_error <= 1e-8


def test_moment_identities_fail_on_raw_centers():
    model = KdeModel.fit(3.0 + 2.0 * np.random.default_rng(2).normal(size=(2, 100)))
    with pytest.raises(NumericalFailure):
        check_moment_identities(model)


def test_mixture_moments_match_monte_carlo(standardized_cloud):
    model = KdeModel.fit(standardized_cloud)
    rng = np.random.default_rng(17)
    picks = rng.integers(0, model.n_samples, size=200000)
    draws = model.shifted_centers[:, picks] + model.s_hat * rng.standard_normal((2, picks.size))
    mean, second = analytic_moments(model)
    np.testing.assert_allclose(draws.mean(axis=1), mean, atol=0.01)
    np.testing.assert_allclose(draws @ draws.T / picks.size, second, atol=0.02)
