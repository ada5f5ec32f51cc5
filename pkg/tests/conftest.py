import numpy as np
import pytest

from models import DatasetId, FitConfig, HermiteDatasetSpec
from services.data_service import generate_hermite_dataset
from services.pipeline_service import fit


@pytest.fixture(scope="session")
def fast_config() -> FitConfig:
    """Valeurs par défaut avec un calendrier ISDE court pour un échantillonnage rapide."""
    return FitConfig.model_validate({"isde": {"burn_in": 20, "stride": 5}})


@pytest.fixture(scope="session")
def d1_data():
    return generate_hermite_dataset(
        HermiteDatasetSpec(dataset_id=DatasetId.D1, n_samples=300, noise_std=0.02, seed=3)
    )


@pytest.fixture(scope="session")
def d1_model(d1_data, fast_config):
    return fit(d1_data, fast_config)


@pytest.fixture(scope="session")
def d1_model_classic(d1_data, fast_config):
    config = fast_config.model_copy(update={"classic": fast_config.classic.model_copy(update={"enabled": True})})
    return fit(d1_data, config)


@pytest.fixture
def standardized_cloud():
    """Nuage gaussien 2 x 200, moyenne exactement nulle et covariance identité (ddof=1)."""
    x = np.random.default_rng(11).standard_normal((2, 200))
    x -= x.mean(axis=1, keepdims=True)
    chol = np.linalg.cholesky(np.cov(x, ddof=1))
    return np.linalg.solve(chol, x)
