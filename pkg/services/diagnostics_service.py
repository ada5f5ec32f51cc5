"""Statistiques après ajustement : lois marginales, espérances conditionnelles et extrêmes."""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import scipy.spatial.distance
from scipy.stats import ks_2samp
from sklearn.metrics import r2_score

from core.errors import DimensionMismatch, InsufficientSupport, InvalidParameter
from models.schemas import DiagnosticsReport, ExtremeReport
from .data_service import DataMatrix, stack_samples
from .density_service import analytic_moments
from .gh_service import evaluate, holdout_scores
from .pipeline_service import GhPlomModel

logger = logging.getLogger(__name__)

SUPPORT_FLOOR = 1e-12


@dataclass
class ConditionalExpectation:
    """Espérances conditionnelles, une colonne par point de grille."""

    values: np.ndarray
    feature_labels: Optional[List[str]] = None

    def labels(self) -> List[str]:
        if self.feature_labels is not None:
            return list(self.feature_labels)
        return [f"f{i}" for i in range(self.values.shape[0])]


def ensemble_mean(samples: Sequence[DataMatrix]) -> DataMatrix:
    """Moyenne terme à terme de réalisations de même forme."""
    if not samples:
        raise InvalidParameter("no samples to average")
    shape = samples[0].values.shape
    if any(s.values.shape != shape for s in samples):
        raise DimensionMismatch("realizations differ in shape")
    mean = np.mean([s.values for s in samples], axis=0)
    return DataMatrix(mean, samples[0].feature_labels, samples[0].input_rows)


def conditional_expectation(
    samples: Sequence[DataMatrix],
    grid: np.ndarray,
    bandwidth: float = 0.2,
    input_rows: Optional[Sequence[int]] = None,
) -> ConditionalExpectation:
    """
    Estimateur de Nadaraya-Watson des lignes hors entrées sachant les lignes d'entrée.

    Args:
        samples: réalisations regroupées par colonnes
        grid: points de requête (Q, k) en unités d'entrée, k = nombre de lignes d'entrée
        bandwidth: largeur du noyau gaussien
        input_rows: lignes de conditionnement (par défaut celles des échantillons)

    Returns:
        ConditionalExpectation de forme (n_features, Q), une colonne par point de grille
    """
    if not samples:
        raise InvalidParameter("conditional expectation needs at least one realization")
    if bandwidth <= 0:
        raise InvalidParameter(f"bandwidth must be positive, got {bandwidth}")
    rows = tuple(samples[0].input_rows if input_rows is None else input_rows)
    if not rows:
        raise InvalidParameter("samples carry no input rows to condition on")

    pooled = stack_samples(samples)
    inputs = pooled[list(rows)]
    feature_rows = [i for i in range(pooled.shape[0]) if i not in rows]
    targets = pooled[feature_rows]

    grid = np.atleast_2d(np.asarray(grid, dtype=np.float64))
    if grid.shape[1] != len(rows):
        raise DimensionMismatch(f"grid has {grid.shape[1]} columns, expected {len(rows)}")

    weights = np.exp(
        -scipy.spatial.distance.cdist(grid, inputs.T, "sqeuclidean") / (2.0 * bandwidth**2)
    )
    totals = weights.sum(axis=1)
    starved = np.flatnonzero(totals < SUPPORT_FLOOR)
    if starved.size:
        point = grid[starved[0]].tolist()
        raise InsufficientSupport(f"no sample support near grid point {point} (weight {totals[starved[0]]:.3g})")

    expected = (targets @ weights.T) / totals[None, :]
    labels = samples[0].feature_labels
    return ConditionalExpectation(expected, [labels[i] for i in feature_rows] if labels else None)


def diagnose(
    model: GhPlomModel,
    generated: Sequence[DataMatrix],
    data: Optional[DataMatrix] = None,
    seed: int = 0,
) -> DiagnosticsReport:
    """
    Compare les réalisations générées aux données d'apprentissage.

    Args:
        model: modèle ajusté (non modifié)
        generated: réalisations issues de ``generate``
        data: données de référence (par défaut celles du modèle)
        seed: graine du découpage de validation du relèvement

    Returns:
        DiagnosticsReport
    """
    if not generated:
        raise InvalidParameter("diagnostics need at least one realization")
    data = data if data is not None else model.training
    pooled = stack_samples(generated)
    if pooled.shape[0] != data.n_features:
        raise DimensionMismatch(
            f"generated data has {pooled.shape[0]} rows, reference has {data.n_features}"
        )
    ks = [float(ks_2samp(data.values[i], pooled[i]).statistic) for i in range(data.n_features)]

    mean, second = analytic_moments(model.kde)
    latent_mean_error = float(np.max(np.abs(mean)))
    latent_covariance_error = float(np.max(np.abs(second - np.eye(model.kde.nu))))

    working = model.working_data()
    train_r2 = r2_score(working.samples(), evaluate(model.lift, model.latents), multioutput="raw_values")

    test_r2 = None
    fraction = model.config.diagnostics.holdout_fraction
    if fraction > 0 and int(fraction * data.n_samples) >= 2:
        _, scores = holdout_scores(
            model.latents,
            working,
            model.config.gh.eps2_factor,
            model.config.gh.delta,
            fraction,
            seed,
            model.config.gh.kernel_convention,
        )
        test_r2 = [float(v) for v in scores]

    report = DiagnosticsReport(
        n_realizations=len(generated),
        feature_labels=data.labels(),
        data_mean=data.values.mean(axis=1).tolist(),
        data_variance=data.values.var(axis=1, ddof=1).tolist(),
        generated_mean=pooled.mean(axis=1).tolist(),
        generated_variance=pooled.var(axis=1, ddof=1).tolist(),
        ks_statistic=ks,
        latent_mean_error=latent_mean_error,
        latent_covariance_error=latent_covariance_error,
        gh_train_r2=[float(v) for v in np.atleast_1d(train_r2)],
        gh_test_r2=test_r2,
    )
    logger.info(f"Diagnostics: {len(generated)} realizations, max KS {max(ks):.4f}")
    return report


def extreme_sample(model: GhPlomModel) -> ExtremeReport:
    """
    Échantillon d'apprentissage le plus éloigné en moyenne des autres dans
    l'espace latent blanchi, avec sa reconstruction par relèvement.
    """
    whitened = model.kde.centers.T
    distances = scipy.spatial.distance.squareform(scipy.spatial.distance.pdist(whitened))
    mean_distance = distances.sum(axis=1) / max(whitened.shape[0] - 1, 1)
    index = int(np.argmax(mean_distance))

    lifted = evaluate(model.lift, model.latents[index : index + 1])
    reconstruction = model.ambient_values(lifted.T)[:, 0]
    sample = model.training.values[:, index]
    rmse = float(np.sqrt(np.mean((reconstruction - sample) ** 2)))
    logger.info(f"Extreme sample {index}: mean latent distance {mean_distance[index]:.4f}, RMSE {rmse:.4g}")
    return ExtremeReport(
        index=index,
        mean_latent_distance=float(mean_distance[index]),
        reconstruction_rmse=rmse,
        sample=sample.tolist(),
        reconstruction=reconstruction.tolist(),
    )
