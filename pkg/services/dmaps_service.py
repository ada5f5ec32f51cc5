"""Diffusion Maps et sélection parcimonieuse des vecteurs propres.

Les points sont manipulés en tableaux d'un échantillon par ligne, de forme
(N, d) ; une ``DataMatrix`` (échantillons en colonnes) est acceptée partout
et transposée à l'entrée.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np
import scipy.linalg
import scipy.spatial.distance

from core.config import settings
from core.errors import InvalidParameter, NumericalFailure
from models.options import (
    CoordinateScaling,
    KernelConvention,
    MedianConvention,
    ResidualBasis,
    SelectionStrategy,
)
from models.schemas import DmapsConfig, SelectionConfig
from .data_service import DataMatrix
from .pca_service import fix_signs

logger = logging.getLogger(__name__)

Points = Union[DataMatrix, np.ndarray]


@dataclass
class MarkovNormalization:
    k_tilde: np.ndarray
    b_diag: np.ndarray
    d_diag: np.ndarray
    P: np.ndarray
    P_S: np.ndarray


@dataclass
class DmapsModel:
    epsilon: float
    alpha_norm: float
    kappa: int
    b_diag: np.ndarray
    d_diag: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    coordinates: np.ndarray
    residuals: np.ndarray
    selected: List[int]
    coordinate_scaling: CoordinateScaling = CoordinateScaling.B

    @property
    def m_max(self) -> int:
        return self.eigenvalues.shape[0]

    def selected_coordinates(self) -> np.ndarray:
        """Coordonnées latentes g_m, forme (N, m)."""
        return self.coordinates[:, self.selected]


def as_points(points: Points) -> np.ndarray:
    if isinstance(points, DataMatrix):
        return points.samples()
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, np.newaxis]
    return points


def epsilon_from_median(
    points: Points,
    multiplier: float = 1.0,
    convention: MedianConvention = MedianConvention.SQUARED,
) -> float:
    """Échelle du noyau : ``multiplier`` fois la médiane des distances (au carré) entre paires."""
    x = as_points(points)
    if x.shape[0] < 2:
        raise InvalidParameter("epsilon needs at least two points")
    if multiplier <= 0:
        raise InvalidParameter(f"epsilon multiplier must be positive, got {multiplier}")
    if convention is MedianConvention.SQUARED:
        baseline = float(np.median(scipy.spatial.distance.pdist(x, "sqeuclidean")))
    else:
        baseline = float(np.median(scipy.spatial.distance.pdist(x, "euclidean"))) ** 2
    if baseline <= 0:
        raise InvalidParameter("median pairwise distance is zero; points coincide")
    return multiplier * baseline


def squared_distances(points: Points) -> np.ndarray:
    x = as_points(points)
    return scipy.spatial.distance.squareform(scipy.spatial.distance.pdist(x, "sqeuclidean"))


def kernel_matrix(
    points: Points,
    epsilon: float,
    convention: KernelConvention = KernelConvention.FOUR_EPS,
) -> np.ndarray:
    """Affinité gaussienne K_ij = exp(-|p_i - p_j|^2 / (c * epsilon)), c = 4 ou 2."""
    if not epsilon > 0:
        raise InvalidParameter(f"epsilon must be positive, got {epsilon}")
    return np.exp(-squared_distances(points) / (convention.factor * epsilon))


def normalize_markov(kernel: np.ndarray, alpha_norm: float = 1.0) -> MarkovNormalization:
    """Normalisation de densité, matrice P stochastique par ligne et sa conjuguée symétrique P_S."""
    b_diag = kernel.sum(axis=1)
    if np.any(b_diag <= 0):
        raise NumericalFailure("kernel has a non-positive row sum")
    b_scale = b_diag ** (-alpha_norm)
    k_tilde = np.outer(b_scale, b_scale) * kernel
    d_diag = k_tilde.sum(axis=1)
    if np.any(d_diag <= 0):
        raise NumericalFailure("normalized kernel has a non-positive row sum")
    P = k_tilde / d_diag[:, None]
    d_inv_sqrt = 1.0 / np.sqrt(d_diag)
    P_S = np.outer(d_inv_sqrt, d_inv_sqrt) * k_tilde
    return MarkovNormalization(k_tilde=k_tilde, b_diag=b_diag, d_diag=d_diag, P=P, P_S=P_S)


def spectral_decompose(P_S: np.ndarray, m_max: int) -> Tuple[np.ndarray, np.ndarray]:
    """Les ``m_max`` premiers couples propres de l'opérateur symétrique, par valeur décroissante."""
    n = P_S.shape[0]
    if not 1 <= m_max <= n:
        raise InvalidParameter(f"m_max must lie in [1, {n}], got {m_max}")
    try:
        eigenvalues, eigenvectors = scipy.linalg.eigh(P_S, subset_by_index=[n - m_max, n - 1])
    except (scipy.linalg.LinAlgError, ValueError) as e:
        raise NumericalFailure(f"diffusion eigendecomposition failed: {e}")
    eigenvalues = eigenvalues[::-1].copy()
    eigenvectors = fix_signs(eigenvectors[:, ::-1].copy())
    return eigenvalues, eigenvectors


def markov_eigenvectors(eigenvectors: np.ndarray, d_diag: np.ndarray) -> np.ndarray:
    """Vecteurs propres à droite de P : d^{-1/2} * phi, colonnes de norme 1, colonne 0 constante."""
    psi = eigenvectors / np.sqrt(d_diag)[:, None]
    return psi / np.linalg.norm(psi, axis=0)[None, :]


def diffusion_coordinates(
    eigenvalues: np.ndarray,
    eigenvectors: np.ndarray,
    diagonal: np.ndarray,
    kappa: int = 1,
) -> np.ndarray:
    """g_alpha = lambda_alpha^kappa * diagonal^{-1/2} * phi_alpha.

    ``diagonal`` vaut b (lecture littérale) ou d, selon l'option de mise à l'échelle.
    """
    if kappa < 0:
        raise InvalidParameter(f"kappa must be non-negative, got {kappa}")
    return eigenvectors * (diagonal ** -0.5)[:, None] * (eigenvalues ** kappa)[None, :]


def _local_regression_residual(
    predictors: np.ndarray,
    target: np.ndarray,
    bandwidth_factor: float,
    ridge: float,
) -> float:
    n, p = predictors.shape
    d2 = squared_distances(predictors)
    median = float(np.median(np.sqrt(d2[np.triu_indices(n, k=1)])))
    scale = (bandwidth_factor * median) ** 2
    if scale <= 0:
        scale = np.finfo(float).eps
    weights = np.exp(-d2 / scale)
    np.fill_diagonal(weights, 0.0)

    # Moments pondérés du plan [1, X_j] pour chaque point i, puis
    # recentrés sur le plan local [1, X_j - X_i].
    s0 = weights.sum(axis=1)
    s1 = weights @ predictors
    s2 = (weights @ (predictors[:, :, None] * predictors[:, None, :]).reshape(n, p * p)).reshape(n, p, p)
    t0 = weights @ target
    t1 = weights @ (predictors * target[:, None])

    xi = predictors
    cross = s1[:, :, None] * xi[:, None, :]
    m_xx = s2 - cross - cross.transpose(0, 2, 1) + s0[:, None, None] * (xi[:, :, None] * xi[:, None, :])
    m_x1 = s1 - s0[:, None] * xi

    normal = np.empty((n, p + 1, p + 1))
    normal[:, 0, 0] = s0
    normal[:, 0, 1:] = m_x1
    normal[:, 1:, 0] = m_x1
    normal[:, 1:, 1:] = m_xx
    normal += ridge * np.eye(p + 1)[None, :, :]

    rhs = np.empty((n, p + 1))
    rhs[:, 0] = t0
    rhs[:, 1:] = t1 - xi * t0[:, None]

    try:
        solution = np.linalg.solve(normal, rhs[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError as e:
        raise NumericalFailure(f"local regression is singular: {e}")
    prediction = solution[:, 0]

    denominator = float(np.sum(target**2))
    if denominator == 0:
        raise NumericalFailure("target eigenvector is identically zero")
    return float(np.sqrt(np.sum((target - prediction) ** 2) / denominator))


def parsimonious_residuals(
    eigenvectors: np.ndarray,
    bandwidth_factor: float = 1.0 / 3.0,
    ridge: float = 1e-10,
    workers: Optional[int] = None,
) -> np.ndarray:
    """
    Résidu de validation croisée (leave-one-out) d'une régression linéaire
    locale de chaque vecteur propre sur ses prédécesseurs.

    Args:
        eigenvectors: matrice (N, m_max), colonne 0 le mode constant trivial
        bandwidth_factor: largeur du noyau de régression, en fraction de la
            distance médiane entre prédicteurs
        ridge: régularisation ajoutée à chaque système normal local
        workers: nombre de threads (par défaut le plafond configuré)

    Returns:
        résidus alignés sur les colonnes : NaN pour la colonne 0, 1.0 pour
        la colonne 1, r_k pour les suivantes
    """
    eigenvectors = np.asarray(eigenvectors, dtype=np.float64)
    m_max = eigenvectors.shape[1]
    if m_max < 2:
        raise InvalidParameter("parsimonious residuals need at least two eigenvectors")
    if bandwidth_factor <= 0:
        raise InvalidParameter(f"regression bandwidth factor must be positive, got {bandwidth_factor}")

    residuals = np.full(m_max, np.nan)
    residuals[1] = 1.0

    def residual(k: int) -> float:
        return _local_regression_residual(
            eigenvectors[:, 1:k], eigenvectors[:, k], bandwidth_factor, ridge
        )

    indices = list(range(2, m_max))
    workers = workers or settings.threads
    if workers > 1 and len(indices) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(residual, indices))
    else:
        values = [residual(k) for k in indices]
    residuals[2:] = values
    logger.debug(f"Parsimonious residuals: {np.round(residuals, 4).tolist()}")
    return residuals


def select_nonharmonic(
    residuals: np.ndarray,
    strategy: SelectionStrategy = SelectionStrategy.RATIO_THRESHOLD,
    top_m: int = 2,
    theta: float = 0.5,
) -> List[int]:
    """Indices des colonnes non harmoniques, dans l'ordre des valeurs propres. Les NaN ne sont jamais retenus."""
    residuals = np.asarray(residuals, dtype=np.float64)
    candidates = np.flatnonzero(~np.isnan(residuals))
    if candidates.size == 0:
        raise InvalidParameter("no residuals to select from")

    if strategy is SelectionStrategy.TOP_M:
        if not 1 <= top_m <= candidates.size:
            raise InvalidParameter(
                f"top_m must lie in [1, {candidates.size}], got {top_m}"
            )
        # tri stable : à égalité, l'indice le plus petit l'emporte
        order = candidates[np.argsort(-residuals[candidates], kind="stable")]
        chosen = order[:top_m]
    else:
        if not 0.0 < theta <= 1.0:
            raise InvalidParameter(f"theta must lie in (0, 1], got {theta}")
        peak = residuals[candidates].max()
        chosen = candidates[residuals[candidates] >= theta * peak]
    return sorted(int(i) for i in chosen)


def fit_dmaps(
    points: Points,
    config: Optional[DmapsConfig] = None,
    selection: Optional[SelectionConfig] = None,
) -> DmapsModel:
    """
    Ajustement complet : échelle, noyau, normalisation, spectre,
    coordonnées, résidus et sélection des directions non harmoniques.

    Args:
        points: échantillons à plonger
        config: réglages du noyau et du spectre
        selection: stratégie de sélection

    Returns:
        DmapsModel
    """
    config = config or DmapsConfig()
    selection = selection or SelectionConfig()
    x = as_points(points)
    n = x.shape[0]
    m_max = min(config.m_max, n)

    epsilon = epsilon_from_median(x, config.eps_multiplier, config.median_convention)
    kernel = kernel_matrix(x, epsilon, config.kernel_convention)
    markov = normalize_markov(kernel, config.alpha_norm)
    eigenvalues, eigenvectors = spectral_decompose(markov.P_S, m_max)

    diagonal = markov.b_diag if config.coordinate_scaling is CoordinateScaling.B else markov.d_diag
    coordinates = diffusion_coordinates(eigenvalues, eigenvectors, diagonal, config.kappa)

    if config.residual_basis is ResidualBasis.MARKOV:
        regression_basis = markov_eigenvectors(eigenvectors, markov.d_diag)
    else:
        regression_basis = eigenvectors
    residuals = parsimonious_residuals(
        regression_basis, config.regression_bandwidth_factor, config.ridge
    )
    selected = select_nonharmonic(
        residuals, selection.strategy, selection.top_m, selection.theta
    )
    logger.info(
        f"Diffusion maps: N={n}, epsilon={epsilon:.4g}, "
        f"lambda head={np.round(eigenvalues[:5], 4).tolist()}, selected={selected}"
    )
    return DmapsModel(
        epsilon=epsilon,
        alpha_norm=config.alpha_norm,
        kappa=config.kappa,
        b_diag=markov.b_diag,
        d_diag=markov.d_diag,
        eigenvalues=eigenvalues,
        eigenvectors=eigenvectors,
        coordinates=coordinates,
        residuals=residuals,
        selected=selected,
        coordinate_scaling=config.coordinate_scaling,
    )
