"""Ajustement et génération de bout en bout.

fit:      échelle -> (ACP) -> diffusion maps -> sélection -> blanchiment -> KDE -> relèvement
generate: ISDE sur le KDE latent -> déblanchiment -> relèvement -> (ACP inverse) -> échelle inverse

Une référence classique (KDE dans l'espace ACP, ISDE réduite sur une base de
diffusion) peut être ajustée en parallèle pour comparaison.
"""

import logging
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterator, List, Optional

import numpy as np
import scipy.linalg

from core.errors import InvalidParameter, NumericalFailure, PlomError
from models.options import CoordinateScaling
from models.schemas import FitConfig, FitSummary
from .data_service import DataMatrix, ScalingRecord, minmax_scale
from .density_service import KdeModel, check_moment_identities
from .dmaps_service import (
    DmapsModel,
    diffusion_coordinates,
    epsilon_from_median,
    fit_dmaps,
    kernel_matrix,
    normalize_markov,
    spectral_decompose,
)
from .gh_service import GhInterpolant, evaluate, fit_lift
from .isde_service import ReducedBasis, simulate_full, simulate_reduced
from .pca_service import PcaModel, fit_pca, project, reconstruct, reconstruct_values

logger = logging.getLogger(__name__)

MIN_FIT_SAMPLES = 10
FORMAT_VERSION = 1


@contextmanager
def stage(name: str) -> Iterator[None]:
    """Marque toute erreur de la bibliothèque levée dans le bloc avec le nom de l'étape."""
    try:
        yield
    except PlomError as e:
        if e.stage is None:
            e.stage = name
        logger.error(f"Stage '{name}' failed: {e.message}")
        raise
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as e:
        logger.error(f"Stage '{name}' failed: {e}")
        raise NumericalFailure(str(e), stage=name) from e


@dataclass
class Embedding:
    ambient: DataMatrix
    scaling: ScalingRecord
    pca: Optional[PcaModel]
    working: DataMatrix
    dmaps: DmapsModel


@dataclass
class ClassicPlomModel:
    scaling: ScalingRecord
    pca: PcaModel
    basis: ReducedBasis
    kde: KdeModel

    @property
    def basis_dim(self) -> int:
        return self.basis.m


@dataclass
class GhPlomModel:
    config: FitConfig
    scaling: ScalingRecord
    pca: Optional[PcaModel]
    dmaps: DmapsModel
    latent_mean: np.ndarray
    whitening: np.ndarray
    unwhitening: np.ndarray
    kde: KdeModel
    lift: GhInterpolant
    training: DataMatrix
    classic: Optional[ClassicPlomModel] = None
    format_version: int = FORMAT_VERSION

    @property
    def m(self) -> int:
        return len(self.dmaps.selected)

    @property
    def latents(self) -> np.ndarray:
        """Latents d'apprentissage non blanchis, forme (N, m)."""
        return self.lift.inputs

    def whiten(self, latents: np.ndarray) -> np.ndarray:
        """Latents (N, m) vers colonnes blanchies (m, N)."""
        return self.whitening @ (latents - self.latent_mean[None, :]).T

    def unwhiten(self, columns: np.ndarray) -> np.ndarray:
        """Colonnes blanchies (m, N) ramenées en latents (N, m)."""
        return (self.unwhitening @ columns).T + self.latent_mean[None, :]

    def working_data(self) -> DataMatrix:
        """Données d'apprentissage dans l'espace d'arrivée du relèvement (mises à l'échelle, réduites par ACP si active)."""
        scaled = DataMatrix(self.scaling.apply(self.training.values))
        return project(self.pca, scaled) if self.pca is not None else scaled

    def ambient_values(self, working: np.ndarray) -> np.ndarray:
        """Valeurs (n', Q) de l'espace de travail ramenées aux unités ambiantes, Q quelconque."""
        if self.pca is not None:
            working = reconstruct_values(self.pca, working)
        return self.scaling.invert(working)

    def to_ambient(self, working: np.ndarray) -> DataMatrix:
        """Réalisation (n', N) de l'espace de travail en données ambiantes étiquetées."""
        return DataMatrix(
            self.ambient_values(working),
            feature_labels=self.training.feature_labels,
            input_rows=self.training.input_rows,
        )


def _ambient(data: DataMatrix, config: FitConfig) -> DataMatrix:
    return data if config.include_inputs else data.features()


def _scale(ambient: DataMatrix, config: FitConfig):
    with stage("scaling"):
        return minmax_scale(ambient, config.scaling.eps_s)


def _reduce(scaled: DataMatrix, config: FitConfig, force: bool = False):
    if not (config.pca.enabled or force):
        return None, scaled
    with stage("pca"):
        pca = fit_pca(scaled, count=config.pca.count, energy=config.pca.energy)
        return pca, project(pca, scaled)


def embed(
    data: DataMatrix,
    config: Optional[FitConfig] = None,
    min_samples: int = 2,
) -> Embedding:
    """
    Première moitié de l'ajustement : échelle, ACP optionnelle, diffusion maps et sélection.

    Args:
        data: jeu de données, échantillons en colonnes
        config: configuration de l'ajustement
        min_samples: nombre minimal d'échantillons accepté

    Returns:
        Embedding portant les intermédiaires utiles aux étapes suivantes
    """
    config = config or FitConfig()
    with stage("validation"):
        data.require_samples(min_samples)
    ambient = _ambient(data, config)
    scaled, scaling = _scale(ambient, config)
    pca, working = _reduce(scaled, config)
    with stage("dmaps"):
        dmaps = fit_dmaps(working, config.dmaps, config.selection)
    return Embedding(ambient=ambient, scaling=scaling, pca=pca, working=working, dmaps=dmaps)


def whitening_transform(latents: np.ndarray):
    """Moyenne et racines symétriques C^{-1/2}, C^{1/2} de latents (N, m)."""
    mean = latents.mean(axis=0)
    covariance = np.atleast_2d(np.cov(latents, rowvar=False, ddof=1))
    eigenvalues, eigenvectors = scipy.linalg.eigh(covariance)
    if eigenvalues.min() <= 1e-14 * max(eigenvalues.max(), 1e-300):
        raise NumericalFailure("selected latent coordinates are linearly dependent")
    inv_sqrt = (eigenvectors / np.sqrt(eigenvalues)) @ eigenvectors.T
    sqrt = (eigenvectors * np.sqrt(eigenvalues)) @ eigenvectors.T
    return mean, inv_sqrt, sqrt


def fit(data: DataMatrix, config: Optional[FitConfig] = None) -> GhPlomModel:
    """
    Ajuste le modèle complet.

    Args:
        data: jeu de données, échantillons en colonnes (au moins 10)
        config: configuration de l'ajustement

    Returns:
        GhPlomModel

    Raises:
        PlomError: marquée avec l'étape d'origine
    """
    config = config or FitConfig()
    emb = embed(data, config, MIN_FIT_SAMPLES)
    latents = emb.dmaps.selected_coordinates()
    m = latents.shape[1]

    with stage("whitening"):
        if config.latent.whiten:
            mean, whitening, unwhitening = whitening_transform(latents)
        else:
            mean, whitening, unwhitening = np.zeros(m), np.eye(m), np.eye(m)

    with stage("density"):
        kde = KdeModel.fit(whitening @ (latents - mean[None, :]).T)
        if config.latent.whiten:
            check_moment_identities(kde)

    with stage("lift"):
        lift = fit_lift(
            latents,
            emb.working,
            config.gh.eps2_factor,
            config.gh.delta,
            config.gh.kernel_convention,
        )

    model = GhPlomModel(
        config=config,
        scaling=emb.scaling,
        pca=emb.pca,
        dmaps=emb.dmaps,
        latent_mean=mean,
        whitening=whitening,
        unwhitening=unwhitening,
        kde=kde,
        lift=lift,
        training=emb.ambient,
    )
    if config.classic.enabled:
        model.classic = fit_classic(data, config)
    logger.info(
        f"Fitted model: n={emb.ambient.n_features}, N={emb.ambient.n_samples}, "
        f"m={m}, selected={emb.dmaps.selected}"
    )
    return model


def generate(
    model: GhPlomModel,
    n_mc: int,
    seed: int,
    n_chains: Optional[int] = None,
) -> List[DataMatrix]:
    """
    Tire ``n_mc`` nouvelles réalisations, chacune de la forme des données d'apprentissage.

    Déterministe pour un ``seed`` donné.
    """
    if n_mc < 0:
        raise InvalidParameter(f"n_mc must be non-negative, got {n_mc}")
    update = {"n_mc": n_mc, "seed": seed}
    if n_chains is not None:
        update["n_chains"] = n_chains
    isde_config = model.config.isde.model_copy(update=update)

    with stage("sampling"):
        latent_samples = simulate_full(model.kde, isde_config)
    realizations = []
    with stage("lifting"):
        for columns in latent_samples:
            lifted = evaluate(model.lift, model.unwhiten(columns))
            realizations.append(model.to_ambient(lifted.T))
    return realizations


def _classic_basis_dim(eigenvalues: np.ndarray, config: FitConfig) -> int:
    if config.classic.basis_dim is not None:
        return min(config.classic.basis_dim, eigenvalues.shape[0])
    if eigenvalues.shape[0] < 2:
        return eigenvalues.shape[0]
    above = np.count_nonzero(eigenvalues[1:] >= config.classic.decay_ratio * eigenvalues[1])
    return int(above) + 1


def fit_classic(data: DataMatrix, config: Optional[FitConfig] = None) -> ClassicPlomModel:
    """
    Référence classique : KDE sur les coordonnées ACP blanchies, échantillonné par
    une ISDE réduite sur les premières coordonnées de diffusion (triviale comprise).

    La dimension de base compte les valeurs propres au moins égales à ``decay_ratio``
    fois la première non triviale, sauf si ``basis_dim`` la fixe.
    """
    config = config or FitConfig()
    with stage("validation"):
        data.require_samples(MIN_FIT_SAMPLES)
    scaled, scaling = _scale(_ambient(data, config), config)
    pca, eta = _reduce(scaled, config, force=True)

    with stage("classic-basis"):
        n = eta.n_samples
        m_max = min(n, max(config.dmaps.m_max, config.classic.basis_dim or 0))
        epsilon = epsilon_from_median(eta, config.dmaps.eps_multiplier, config.dmaps.median_convention)
        markov = normalize_markov(
            kernel_matrix(eta, epsilon, config.dmaps.kernel_convention), config.dmaps.alpha_norm
        )
        eigenvalues, eigenvectors = spectral_decompose(markov.P_S, m_max)
        diagonal = markov.b_diag if config.dmaps.coordinate_scaling is CoordinateScaling.B else markov.d_diag
        coordinates = diffusion_coordinates(eigenvalues, eigenvectors, diagonal, config.dmaps.kappa)
        basis = ReducedBasis.from_basis(coordinates[:, : _classic_basis_dim(eigenvalues, config)])

    with stage("classic-density"):
        kde = KdeModel.fit(eta)
        check_moment_identities(kde)

    logger.info(f"Classic baseline: nu={pca.nu}, basis dimension {basis.m}")
    return ClassicPlomModel(scaling=scaling, pca=pca, basis=basis, kde=kde)


def generate_classic(
    model: GhPlomModel,
    n_mc: int,
    seed: int,
) -> List[DataMatrix]:
    """Réalisations de référence issues de l'ISDE réduite, ramenées par l'ACP et l'échelle inverses."""
    classic = model.classic
    if classic is None:
        raise InvalidParameter("model was fitted without the classic baseline")
    isde_config = model.config.isde.model_copy(update={"n_mc": n_mc, "seed": seed})
    with stage("classic-sampling"):
        reduced = simulate_reduced(classic.kde, classic.basis, isde_config)
    realizations = []
    for Z in reduced:
        eta = DataMatrix(classic.basis.reconstruct(Z))
        x = reconstruct(classic.pca, eta).values
        realizations.append(
            DataMatrix(
                classic.scaling.invert(x),
                feature_labels=model.training.feature_labels,
                input_rows=model.training.input_rows,
            )
        )
    return realizations


def summarize(model: GhPlomModel) -> FitSummary:
    residuals = [None if np.isnan(r) else float(r) for r in model.dmaps.residuals]
    return FitSummary(
        n_features=model.training.n_features,
        n_samples=model.training.n_samples,
        epsilon=model.dmaps.epsilon,
        selected=list(model.dmaps.selected),
        m=model.m,
        eigenvalues_head=[float(v) for v in model.dmaps.eigenvalues[:10]],
        residuals=residuals,
        gh_retained=model.lift.retained,
        gh_epsilon=model.lift.epsilon,
        kde_s=model.kde.s,
        kde_s_hat=model.kde.s_hat,
        classic_basis_dim=model.classic.basis_dim if model.classic else None,
    )
