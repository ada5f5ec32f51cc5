import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from core.errors import DimensionMismatch, InvalidParameter, NumericalFailure
from .data_service import DataMatrix

logger = logging.getLogger(__name__)

DEFAULT_ENERGY = 1.0 - 1e-9
RELATIVE_EIGENVALUE_FLOOR = 1e-12


@dataclass
class PcaModel:
    mean: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    explained_variance_ratio: np.ndarray

    @property
    def nu(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def n_features(self) -> int:
        return self.mean.shape[0]


def fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Change le signe des colonnes pour que l'entrée de plus grand module soit positive."""
    if vectors.size == 0:
        return vectors
    pivots = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivots, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def fit_pca(
    data: DataMatrix,
    count: Optional[int] = None,
    energy: Optional[float] = None,
) -> PcaModel:
    """
    Ajuste une ACP blanchissante sur les colonnes d'échantillons.

    Args:
        data: jeu de données, variables en lignes
        count: nombre de composantes gardées (prioritaire sur energy)
        energy: fraction cumulée minimale des valeurs propres à atteindre

    Returns:
        PcaModel, valeurs propres par ordre décroissant
    """
    data.require_samples(2)
    if count is not None and count < 1:
        raise InvalidParameter(f"PCA count must be positive, got {count}")
    if energy is None:
        energy = DEFAULT_ENERGY
    if not 0.0 < energy <= 1.0:
        raise InvalidParameter(f"PCA energy fraction must lie in (0, 1], got {energy}")

    x = data.values
    mean = x.mean(axis=1)
    covariance = np.atleast_2d(np.cov(x, ddof=1))

    try:
        eigenvalues, eigenvectors = scipy.linalg.eigh(covariance)
    except (scipy.linalg.LinAlgError, ValueError) as e:
        raise NumericalFailure(f"covariance eigendecomposition failed: {e}")

    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = eigenvalues[order]
    eigenvectors = eigenvectors[:, order]
    total = eigenvalues[eigenvalues > 0].sum()
    if total <= 0:
        raise NumericalFailure("data has zero variance")

    keep = eigenvalues > RELATIVE_EIGENVALUE_FLOOR * eigenvalues[0]
    eigenvalues = eigenvalues[keep]
    eigenvectors = eigenvectors[:, keep]

    if count is not None:
        nu = min(count, eigenvalues.shape[0])
    else:
        cumulative = np.cumsum(eigenvalues) / total
        reached = np.flatnonzero(cumulative >= energy)
        nu = int(reached[0]) + 1 if reached.size else eigenvalues.shape[0]

    model = PcaModel(
        mean=mean,
        eigenvalues=eigenvalues[:nu].copy(),
        eigenvectors=fix_signs(eigenvectors[:, :nu].copy()),
        explained_variance_ratio=eigenvalues[:nu] / total,
    )
    logger.info(
        f"PCA kept {nu} of {data.n_features} components "
        f"({model.explained_variance_ratio.sum():.6f} of the variance)"
    )
    return model


def _check_rows(rows: int, expected: int, what: str) -> None:
    if rows != expected:
        raise DimensionMismatch(f"{what} has {rows} rows, model expects {expected}")


def project(model: PcaModel, data: DataMatrix) -> DataMatrix:
    """Coordonnées réduites et blanchies mu^{-1/2} Phi^T (x - mean)."""
    _check_rows(data.n_features, model.n_features, "data")
    centered = data.values - model.mean[:, None]
    eta = (model.eigenvectors.T @ centered) / np.sqrt(model.eigenvalues)[:, None]
    return DataMatrix(eta)


def reconstruct_values(model: PcaModel, eta: np.ndarray) -> np.ndarray:
    """Retour à l'espace ambiant : mean + Phi mu^{1/2} eta, pour un nombre quelconque de colonnes."""
    eta = np.asarray(eta, dtype=np.float64)
    _check_rows(eta.shape[0], model.nu, "eta")
    return model.mean[:, None] + model.eigenvectors @ (np.sqrt(model.eigenvalues)[:, None] * eta)


def reconstruct(model: PcaModel, eta: DataMatrix) -> DataMatrix:
    return DataMatrix(reconstruct_values(model, eta.values))
