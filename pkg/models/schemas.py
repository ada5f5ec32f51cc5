import math
from pathlib import Path
from typing import Dict, List, Optional

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeFloat,
    NonNegativeInt,
    PositiveFloat,
    PositiveInt,
    field_validator,
    model_validator,
)

from .actions import Command
from .options import (
    CoordinateScaling,
    DatasetId,
    KernelConvention,
    MatrixFormat,
    MedianConvention,
    ResidualBasis,
    SelectionStrategy,
)

SCHEMA_VERSION = 1
SEED_LIMIT = 2**64


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ---------------------------------------------------------------------------
# Configuration de l'ajustement (une section par table TOML)
# ---------------------------------------------------------------------------


class ScalingConfig(StrictModel):
    eps_s: NonNegativeFloat = 1e-9


class PcaConfig(StrictModel):
    enabled: bool = False
    energy: float = Field(1.0 - 1e-9, gt=0.0, le=1.0)
    count: Optional[PositiveInt] = None


class DmapsConfig(StrictModel):
    eps_multiplier: PositiveFloat = 15.0
    median_convention: MedianConvention = MedianConvention.SQUARED
    kernel_convention: KernelConvention = KernelConvention.FOUR_EPS
    alpha_norm: float = 1.0
    kappa: NonNegativeInt = 1
    m_max: int = Field(10, ge=2)
    coordinate_scaling: CoordinateScaling = CoordinateScaling.B
    residual_basis: ResidualBasis = ResidualBasis.MARKOV
    regression_bandwidth_factor: PositiveFloat = 1.0 / 3.0
    ridge: NonNegativeFloat = 1e-10

    @field_validator("alpha_norm")
    @classmethod
    def check_alpha_norm(cls, value: float) -> float:
        if value not in (0.0, 0.5, 1.0):
            raise ValueError("alpha_norm must be one of 0, 0.5, 1")
        return value


class SelectionConfig(StrictModel):
    strategy: SelectionStrategy = SelectionStrategy.RATIO_THRESHOLD
    top_m: PositiveInt = 2
    theta: float = Field(0.5, gt=0.0, le=1.0)


class LatentConfig(StrictModel):
    whiten: bool = True


class GhConfig(StrictModel):
    eps2_factor: PositiveFloat = 1.0
    delta: float = Field(1e-3, gt=0.0, lt=1.0)
    kernel_convention: KernelConvention = KernelConvention.TWO_EPS


class IsdeConfig(StrictModel):
    """Paramètres de l'échantillonneur.

    ``delta_r`` non renseigné vaut, à l'exécution, le quart de la largeur du KDE.
    ``burn_in`` est le pas du premier échantillon retenu, ``stride`` le nombre
    de pas entre deux échantillons retenus.
    """

    f0: NonNegativeFloat = 4.0
    delta_r: Optional[PositiveFloat] = None
    burn_in: int = Field(200, ge=1)
    stride: int = Field(50, ge=1)
    n_mc: NonNegativeInt = 1
    n_chains: PositiveInt = 1
    seed: int = Field(0, ge=0, lt=SEED_LIMIT)

    @model_validator(mode="after")
    def check_contraction(self) -> "IsdeConfig":
        if self.delta_r is not None and self.f0 * self.delta_r >= 4.0:
            raise ValueError("f0 * delta_r must stay below 4")
        return self

    def resolved_step(self, s_hat: float) -> float:
        step = self.delta_r if self.delta_r is not None else 0.25 * s_hat
        if self.f0 * step >= 4.0:
            raise ValueError(f"f0 * delta_r = {self.f0 * step:.4g} must stay below 4")
        return step


class ClassicConfig(StrictModel):
    enabled: bool = False
    basis_dim: Optional[PositiveInt] = None
    decay_ratio: float = Field(0.1, gt=0.0, le=1.0)


class DiagnosticsConfig(StrictModel):
    holdout_fraction: float = Field(0.2, ge=0.0, lt=1.0)
    conditional_bandwidth: PositiveFloat = 0.2


class FitConfig(StrictModel):
    include_inputs: bool = False
    scaling: ScalingConfig = Field(default_factory=ScalingConfig)
    pca: PcaConfig = Field(default_factory=PcaConfig)
    dmaps: DmapsConfig = Field(default_factory=DmapsConfig)
    selection: SelectionConfig = Field(default_factory=SelectionConfig)
    latent: LatentConfig = Field(default_factory=LatentConfig)
    gh: GhConfig = Field(default_factory=GhConfig)
    isde: IsdeConfig = Field(default_factory=IsdeConfig)
    classic: ClassicConfig = Field(default_factory=ClassicConfig)
    diagnostics: DiagnosticsConfig = Field(default_factory=DiagnosticsConfig)


# ---------------------------------------------------------------------------
# Jeux de données
# ---------------------------------------------------------------------------


class HermiteDatasetSpec(StrictModel):
    dataset_id: DatasetId
    n_samples: int = Field(ge=2)
    noise_std: NonNegativeFloat = 0.05
    seed: int = Field(0, ge=0, lt=SEED_LIMIT)
    normalized: bool = True


class HermiteSidecar(StrictModel):
    schema_version: int = SCHEMA_VERSION
    spec: HermiteDatasetSpec
    feature_labels: List[str]
    input_rows: List[int]
    shape: List[int]


# ---------------------------------------------------------------------------
# Rapports
# ---------------------------------------------------------------------------


def _all_finite(values: List[float]) -> List[float]:
    if not all(math.isfinite(v) for v in values):
        raise ValueError("statistics must be finite")
    return values


class FitSummary(StrictModel):
    schema_version: int = SCHEMA_VERSION
    n_features: int
    n_samples: int
    epsilon: float
    selected: List[int]
    m: int
    eigenvalues_head: List[float]
    residuals: List[Optional[float]]
    gh_retained: int
    gh_epsilon: float
    kde_s: float
    kde_s_hat: float
    classic_basis_dim: Optional[int] = None


class DiagnosticsReport(StrictModel):
    schema_version: int = SCHEMA_VERSION
    n_realizations: int
    feature_labels: List[str]
    data_mean: List[float]
    data_variance: List[float]
    generated_mean: List[float]
    generated_variance: List[float]
    ks_statistic: List[float]
    latent_mean_error: float
    latent_covariance_error: float
    gh_train_r2: List[float]
    gh_test_r2: Optional[List[float]] = None

    @field_validator(
        "data_mean",
        "data_variance",
        "generated_mean",
        "generated_variance",
        "gh_train_r2",
    )
    @classmethod
    def check_finite(cls, values: List[float]) -> List[float]:
        return _all_finite(values)

    @field_validator("ks_statistic")
    @classmethod
    def check_ks(cls, values: List[float]) -> List[float]:
        _all_finite(values)
        if any(v < 0.0 or v > 1.0 for v in values):
            raise ValueError("KS statistics lie in [0, 1]")
        return values


class ExtremeReport(StrictModel):
    schema_version: int = SCHEMA_VERSION
    index: int
    mean_latent_distance: float
    reconstruction_rmse: float
    sample: List[float]
    reconstruction: List[float]


# ---------------------------------------------------------------------------
# En-tête du conteneur de modèle
# ---------------------------------------------------------------------------


class BlockEntry(StrictModel):
    name: str
    offset: NonNegativeInt
    length: NonNegativeInt


class ModelHeader(StrictModel):
    format_version: int
    config: FitConfig
    scalars: Dict[str, float]
    indices: Dict[str, List[int]]
    flags: Dict[str, bool]
    feature_labels: Optional[List[str]] = None
    blocks: List[BlockEntry]


# ---------------------------------------------------------------------------
# Paramètres d'une exécution en ligne de commande
# ---------------------------------------------------------------------------


class RunConfig(StrictModel):
    command: Command
    fit: FitConfig = Field(default_factory=FitConfig)
    data_path: Optional[Path] = None
    model_path: Optional[Path] = None
    out_path: Optional[Path] = None
    matrix_format: Optional[MatrixFormat] = None
    transpose: bool = False
    n_mc: NonNegativeInt = 0
    seed: int = Field(0, ge=0, lt=SEED_LIMIT)
    threads: PositiveInt = 1

    @model_validator(mode="after")
    def check_command(self) -> "RunConfig":
        if self.command is Command.SAMPLE and self.n_mc < 1:
            raise ValueError("sample needs --n-mc of at least 1")
        needs_data = {
            Command.FIT,
            Command.SPECTRUM,
            Command.RESIDUALS,
            Command.PCA_SPECTRUM,
        }
        if self.command in needs_data and self.data_path is None:
            raise ValueError(f"{self.command.value} needs a data path")
        if self.data_path is not None and self.command in needs_data:
            if not self.data_path.is_file():
                raise ValueError(f"data file not found: {self.data_path}")
        if self.command in {Command.SAMPLE, Command.EXTREME} and self.model_path is not None:
            if not self.model_path.is_file():
                raise ValueError(f"model file not found: {self.model_path}")
        return self
