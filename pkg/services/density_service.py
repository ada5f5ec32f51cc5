"""Densité à noyau gaussien, largeurs de bande en forme close.

Chaque centre eta^j apporte une gaussienne de covariance s_hat^2 I centrée en
(s_hat / s) eta^j. Pour des centres standardisés, le mélange a alors une moyenne
nulle et un moment d'ordre deux égal à l'identité, ce que vérifie
``check_moment_identities``.
"""

import logging
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
import scipy.spatial.distance
from scipy.special import logsumexp

from core.errors import DimensionMismatch, InvalidParameter, NumericalFailure
from .data_service import DataMatrix

logger = logging.getLogger(__name__)

MEAN_TOLERANCE = 1e-10
SECOND_MOMENT_TOLERANCE = 1e-8


def bandwidths(n_samples: int, nu: int) -> Tuple[float, float]:
    """Largeur de type Silverman s et sa version modifiée s_hat."""
    if n_samples < 2:
        raise InvalidParameter(f"bandwidths need N >= 2, got {n_samples}")
    if nu < 1:
        raise InvalidParameter(f"bandwidths need nu >= 1, got {nu}")
    s = (4.0 / (n_samples * (2.0 + nu))) ** (1.0 / (nu + 4.0))
    s_hat = s / np.sqrt(s * s + (n_samples - 1.0) / n_samples)
    return float(s), float(s_hat)


@dataclass
class KdeModel:
    centers: np.ndarray
    s: float
    s_hat: float

    @classmethod
    def fit(cls, centers: Union[DataMatrix, np.ndarray]) -> "KdeModel":
        if isinstance(centers, DataMatrix):
            centers = centers.values
        centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
        if not np.all(np.isfinite(centers)):
            raise InvalidParameter("KDE centers must be finite")
        s, s_hat = bandwidths(centers.shape[1], centers.shape[0])
        logger.debug(f"KDE on nu={centers.shape[0]}, N={centers.shape[1]}: s={s:.6g}, s_hat={s_hat:.6g}")
        return cls(centers=centers, s=s, s_hat=s_hat)

    @property
    def nu(self) -> int:
        return self.centers.shape[0]

    @property
    def n_samples(self) -> int:
        return self.centers.shape[1]

    @property
    def shifted_centers(self) -> np.ndarray:
        """Positions des noyaux (s_hat / s) eta^j, forme (nu, N)."""
        return (self.s_hat / self.s) * self.centers


def _as_queries(model: KdeModel, eta: np.ndarray) -> Tuple[np.ndarray, bool]:
    eta = np.asarray(eta, dtype=np.float64)
    single = eta.ndim == 1
    queries = eta[:, None] if single else eta
    if queries.shape[0] != model.nu:
        raise DimensionMismatch(f"query has {queries.shape[0]} rows, KDE expects {model.nu}")
    return queries, single


def _log_weights(model: KdeModel, queries: np.ndarray) -> np.ndarray:
    """Log-poids des noyaux non normalisés, forme (Q, N)."""
    d2 = scipy.spatial.distance.cdist(queries.T, model.shifted_centers.T, "sqeuclidean")
    return -d2 / (2.0 * model.s_hat**2)


def log_pdf(model: KdeModel, eta: np.ndarray) -> Union[float, np.ndarray]:
    queries, single = _as_queries(model, eta)
    log_norm = -0.5 * model.nu * np.log(2.0 * np.pi * model.s_hat**2) - np.log(model.n_samples)
    values = logsumexp(_log_weights(model, queries), axis=1) + log_norm
    return float(values[0]) if single else values


def pdf(model: KdeModel, eta: np.ndarray) -> Union[float, np.ndarray]:
    """Densité du mélange en un vecteur de taille nu, ou en chaque colonne d'une matrice (nu, Q)."""
    return np.exp(log_pdf(model, eta))


def force(model: KdeModel, u: np.ndarray) -> np.ndarray:
    """
    Gradient du log de la densité du mélange, colonne par colonne.

    Calculé comme (centre pondéré par softmax - u) / s_hat^2, le softmax étant
    pris en espace log pour éviter le sous-dépassement aux petites largeurs.
    """
    queries, single = _as_queries(model, u)
    log_w = _log_weights(model, queries)
    weights = np.exp(log_w - logsumexp(log_w, axis=1, keepdims=True))
    attractor = model.shifted_centers @ weights.T
    gradient = (attractor - queries) / model.s_hat**2
    return gradient[:, 0] if single else gradient


def joint_log_density(model: KdeModel, U: np.ndarray) -> float:
    """Log de la densité produit de colonnes i.i.d."""
    U = np.asarray(U, dtype=np.float64)
    if U.ndim == 1:
        U = U[:, None]
    return float(np.sum(log_pdf(model, U)))


def analytic_moments(model: KdeModel) -> Tuple[np.ndarray, np.ndarray]:
    """Moyenne et moment d'ordre deux E[eta eta^T] du mélange, en forme close."""
    ratio = model.s_hat / model.s
    mean = ratio * model.centers.mean(axis=1)
    raw = (model.centers @ model.centers.T) / model.n_samples
    second = model.s_hat**2 * np.eye(model.nu) + ratio**2 * raw
    return mean, second


def check_moment_identities(
    model: KdeModel,
    mean_tol: float = MEAN_TOLERANCE,
    second_tol: float = SECOND_MOMENT_TOLERANCE,
) -> Tuple[float, float]:
    """
    Vérifie la moyenne nulle et le moment d'ordre deux identité du mélange.

    Returns:
        (max |moyenne|, max |moment d'ordre deux - I|)

    Raises:
        NumericalFailure: si l'un des écarts dépasse sa tolérance
    """
    mean, second = analytic_moments(model)
    mean_error = float(np.max(np.abs(mean)))
    second_error = float(np.max(np.abs(second - np.eye(model.nu))))
    if mean_error > mean_tol or second_error > second_tol:
        raise NumericalFailure(
            f"KDE moment identities violated: mean error {mean_error:.3g}, "
            f"second moment error {second_error:.3g}"
        )
    return mean_error, second_error
