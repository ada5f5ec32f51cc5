"""Interpolation par Geometric Harmonics et relèvement du latent vers l'ambiant."""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.linalg
import scipy.spatial.distance
from sklearn.metrics import r2_score
from sklearn.model_selection import train_test_split

from core import rng
from core.errors import DimensionMismatch, InvalidParameter, NotFitted, NumericalFailure
from models.options import KernelConvention
from .data_service import DataMatrix
from .dmaps_service import as_points, epsilon_from_median
from .pca_service import fix_signs

logger = logging.getLogger(__name__)


@dataclass
class GhInterpolant:
    inputs: np.ndarray
    epsilon: float
    delta: float
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    coefficients: Optional[np.ndarray] = None
    kernel_convention: KernelConvention = KernelConvention.TWO_EPS

    @property
    def retained(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]


def _kernel(a: np.ndarray, b: np.ndarray, epsilon: float, convention: KernelConvention) -> np.ndarray:
    d2 = scipy.spatial.distance.cdist(a, b, "sqeuclidean")
    return np.exp(-d2 / (convention.factor * epsilon))


def _as_outputs(outputs: np.ndarray, n: int) -> np.ndarray:
    outputs = np.asarray(outputs, dtype=np.float64)
    if outputs.ndim == 1:
        outputs = outputs[:, None]
    if outputs.shape[0] != n:
        raise DimensionMismatch(f"outputs have {outputs.shape[0]} rows, inputs have {n}")
    return outputs


def fit_gh(
    inputs: np.ndarray,
    outputs: np.ndarray,
    epsilon: float,
    delta: float = 1e-3,
    kernel_convention: KernelConvention = KernelConvention.TWO_EPS,
) -> GhInterpolant:
    """
    Ajuste un interpolant Geometric Harmonics de ``outputs`` sur ``inputs``.

    Args:
        inputs: points d'apprentissage (N, m)
        outputs: valeurs (N, p) ; une seule décomposition sert aux p sorties
        epsilon: échelle du noyau
        delta: seuil relatif sur les valeurs propres, dans (0, 1)
        kernel_convention: dénominateur 2*epsilon (défaut) ou 4*epsilon

    Returns:
        GhInterpolant, valeurs propres par ordre décroissant
    """
    if not epsilon > 0:
        raise InvalidParameter(f"GH epsilon must be positive, got {epsilon}")
    if not 0.0 < delta < 1.0:
        raise InvalidParameter(f"GH delta must lie in (0, 1), got {delta}")
    x = as_points(inputs)
    y = _as_outputs(outputs, x.shape[0])

    kernel = _kernel(x, x, epsilon, kernel_convention)
    try:
        sigma, psi = scipy.linalg.eigh(kernel)
    except (scipy.linalg.LinAlgError, ValueError) as e:
        raise NumericalFailure(f"GH eigendecomposition failed: {e}")
    sigma = sigma[::-1]
    psi = psi[:, ::-1]
    if sigma[0] <= 0:
        raise NumericalFailure("GH kernel has no positive eigenvalue")

    keep = sigma >= delta * sigma[0]
    sigma = sigma[keep].copy()
    psi = fix_signs(psi[:, keep].copy())
    logger.debug(f"GH kept {sigma.shape[0]} of {x.shape[0]} modes (delta={delta}, epsilon={epsilon:.4g})")

    return GhInterpolant(
        inputs=x,
        epsilon=float(epsilon),
        delta=float(delta),
        eigenvalues=sigma,
        eigenvectors=psi,
        coefficients=psi.T @ y,
        kernel_convention=kernel_convention,
    )


def nystrom_extend(interp: GhInterpolant, g_new: np.ndarray) -> np.ndarray:
    """Fonctions propres prolongées aux nouveaux points, forme (Q, |S_delta|), ou un vecteur pour un seul point."""
    g_new = np.asarray(g_new, dtype=np.float64)
    single = g_new.ndim == 1
    queries = g_new[None, :] if single else g_new
    if queries.shape[1] != interp.input_dim:
        raise DimensionMismatch(
            f"query has dimension {queries.shape[1]}, interpolant expects {interp.input_dim}"
        )
    values = _kernel(queries, interp.inputs, interp.epsilon, interp.kernel_convention) @ interp.eigenvectors
    values /= interp.eigenvalues[None, :]
    return values[0] if single else values


def evaluate(interp: GhInterpolant, g_new: np.ndarray) -> np.ndarray:
    """Valeurs prolongées, forme (Q, p), ou un vecteur de taille p pour un seul point."""
    if interp.coefficients is None:
        raise NotFitted("interpolant has no projection coefficients")
    return nystrom_extend(interp, g_new) @ interp.coefficients


def project_training(interp: GhInterpolant) -> np.ndarray:
    """Projection des sorties d'apprentissage sur les modes retenus, forme (N, p)."""
    if interp.coefficients is None:
        raise NotFitted("interpolant has no projection coefficients")
    return interp.eigenvectors @ interp.coefficients


def lift_epsilon(latents: np.ndarray, factor: float = 1.0) -> float:
    return epsilon_from_median(latents, factor)


def fit_lift(
    latents: np.ndarray,
    ambient: DataMatrix,
    eps2_factor: float = 1.0,
    delta: float = 1e-3,
    kernel_convention: KernelConvention = KernelConvention.TWO_EPS,
) -> GhInterpolant:
    """
    Application GH des coordonnées latentes retenues (N, m) vers les variables ambiantes (n, N).

    L'échelle du noyau vaut ``eps2_factor`` fois la médiane des distances latentes au carré.
    """
    latents = as_points(latents)
    if latents.shape[1] == 0:
        raise InvalidParameter("lift needs at least one latent coordinate")
    if ambient.n_samples != latents.shape[0]:
        raise DimensionMismatch(
            f"ambient data has {ambient.n_samples} samples, latents have {latents.shape[0]}"
        )
    epsilon = lift_epsilon(latents, eps2_factor)
    interp = fit_gh(latents, ambient.samples(), epsilon, delta, kernel_convention)
    logger.info(f"Lift: m={latents.shape[1]}, epsilon2={epsilon:.4g}, retained={interp.retained}")
    return interp


def lift(interp: GhInterpolant, latents: np.ndarray) -> np.ndarray:
    """Évalue le relèvement en (Q, m) points latents ; renvoie un tableau (n, Q)."""
    return evaluate(interp, np.atleast_2d(latents)).T


def holdout_scores(
    latents: np.ndarray,
    ambient: DataMatrix,
    eps2_factor: float = 1.0,
    delta: float = 1e-3,
    test_fraction: float = 0.2,
    seed: int = 0,
    kernel_convention: KernelConvention = KernelConvention.TWO_EPS,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    R^2 du relèvement par sortie, sur un découpage apprentissage/test à graine fixée.

    Returns:
        (R^2 apprentissage, R^2 test), une entrée par variable ambiante
    """
    if not 0.0 < test_fraction < 1.0:
        raise InvalidParameter(f"test fraction must lie in (0, 1), got {test_fraction}")
    latents = as_points(latents)
    targets = ambient.samples()
    split_seed = int(rng.stream(seed, rng.HOLDOUT_SPLIT).integers(0, 2**31 - 1))
    x_train, x_test, y_train, y_test = train_test_split(
        latents, targets, test_size=test_fraction, random_state=split_seed
    )
    interp = fit_gh(x_train, y_train, lift_epsilon(x_train, eps2_factor), delta, kernel_convention)
    train_r2 = r2_score(y_train, evaluate(interp, x_train), multioutput="raw_values")
    test_r2 = r2_score(y_test, evaluate(interp, x_test), multioutput="raw_values")
    logger.info(f"Lift holdout R^2: min train {train_r2.min():.4f}, min test {test_r2.min():.4f}")
    return np.atleast_1d(train_r2), np.atleast_1d(test_r2)
