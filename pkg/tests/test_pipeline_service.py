import numpy as np
import pytest

from core.errors import DegenerateFeature, InvalidParameter
from models import FitConfig
from services.data_service import DataMatrix
from services.density_service import analytic_moments
from services.gh_service import evaluate, project_training
from services.pipeline_service import embed, fit, generate, generate_classic, summarize


def test_model_dimensions_agree(d1_model):
    m = d1_model.m
    assert m >= 1
    assert d1_model.kde.nu == m
    assert d1_model.lift.input_dim == m
    assert all(i >= 1 for i in d1_model.dmaps.selected)


def test_whitened_latents_are_standardized(d1_model):
    centers = d1_model.kde.centers
    assert np.max(np.abs(centers.mean(axis=1))) <= 1e-10
    np.testing.assert_allclose(np.atleast_2d(np.cov(centers, ddof=1)), np.eye(d1_model.m), atol=1e-8)


def test_whitening_round_trip(d1_model):
    latents = d1_model.latents
    np.testing.assert_allclose(d1_model.unwhiten(d1_model.whiten(latents)), latents, atol=1e-12)


def test_kde_moment_identities_on_latents(d1_model):
    mean, second = analytic_moments(d1_model.kde)
    assert np.max(np.abs(mean)) <= 1e-10
    np.testing.assert_allclose(second, np.eye(d1_model.m), atol=1e-8)


def test_generate_shapes_and_envelope(d1_model):
    realizations = generate(d1_model, n_mc=2, seed=1)
    training = d1_model.training.values
    span = training.max(axis=1) - training.min(axis=1)
    assert len(realizations) == 2
    for realization in realizations:
        assert realization.values.shape == training.shape
        assert realization.feature_labels == d1_model.training.feature_labels
        assert np.all(realization.values >= (training.min(axis=1) - 3 * span)[:, None])
        assert np.all(realization.values <= (training.max(axis=1) + 3 * span)[:, None])


def test_generate_is_deterministic(d1_model):
    first = generate(d1_model, n_mc=1, seed=9)
    second = generate(d1_model, n_mc=1, seed=9)
    np.testing.assert_array_equal(first[0].values, second[0].values)


def test_generate_nothing(d1_model):
    assert generate(d1_model, n_mc=0, seed=0) == []


def test_lift_at_training_latents_is_projection(d1_model):
    recovered = evaluate(d1_model.lift, d1_model.latents)
    np.testing.assert_allclose(recovered, project_training(d1_model.lift), atol=1e-8)
    assert recovered.shape == d1_model.working_data().samples().shape


def test_degenerate_feature_is_tagged_with_stage():
    rng = np.random.default_rng(0)
    data = DataMatrix(np.vstack([rng.normal(size=30), np.full(30, 2.0)]))
    with pytest.raises(DegenerateFeature) as info:
        fit(data)
    assert info.value.stage == "scaling"
    assert "[scaling]" in str(info.value)


def test_too_few_samples():
    with pytest.raises(InvalidParameter) as info:
        fit(DataMatrix(np.random.default_rng(0).normal(size=(2, 9))))
    assert info.value.stage == "validation"


def test_embed_accepts_two_points():
    emb = embed(DataMatrix(np.array([[0.0, 1.0]])))
    a = np.exp(-1.0 / 60.0)
    np.testing.assert_allclose(emb.dmaps.eigenvalues, [1.0, (1 - a) / (1 + a)], atol=1e-12)


def test_no_whiten_uses_identity(d1_data, fast_config):
    config = fast_config.model_copy(update={"latent": fast_config.latent.model_copy(update={"whiten": False})})
    model = fit(d1_data, config)
    np.testing.assert_array_equal(model.whitening, np.eye(model.m))
    np.testing.assert_array_equal(model.kde.centers, model.latents.T)


def test_include_inputs_carries_input_rows(d1_data, fast_config):
    model = fit(d1_data, fast_config.model_copy(update={"include_inputs": True}))
    assert model.training.input_rows == (3, 4)
    realization = generate(model, n_mc=1, seed=2)[0]
    assert realization.input_rows == (3, 4)
    assert realization.values.shape == (5, d1_data.n_samples)


def test_pca_variant_round_trips_through_reconstruction(d1_data, fast_config):
    config = FitConfig.model_validate(
        {"pca": {"enabled": True}, "isde": {"burn_in": 20, "stride": 5}}
    )
    model = fit(d1_data, config)
    assert model.pca is not None
    realization = generate(model, n_mc=1, seed=4)[0]
    assert realization.values.shape == d1_data.features().values.shape


def test_classic_baseline(d1_model_classic):
    classic = d1_model_classic.classic
    assert classic is not None
    assert classic.basis_dim >= 2
    realizations = generate_classic(d1_model_classic, n_mc=2, seed=3)
    assert len(realizations) == 2
    assert realizations[0].values.shape == d1_model_classic.training.values.shape
    assert np.all(np.isfinite(realizations[0].values))


def test_classic_requires_fit(d1_model):
    with pytest.raises(InvalidParameter):
        generate_classic(d1_model, n_mc=1, seed=0)


def test_summary(d1_model):
    summary = summarize(d1_model)
    assert summary.m == d1_model.m
    assert summary.selected == d1_model.dmaps.selected
    assert summary.residuals[0] is None
    assert summary.residuals[1] == 1.0
    assert summary.kde_s_hat < summary.kde_s
