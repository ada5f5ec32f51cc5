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
from .schemas import (
    ClassicConfig,
    DiagnosticsConfig,
    DiagnosticsReport,
    DmapsConfig,
    ExtremeReport,
    FitConfig,
    FitSummary,
    GhConfig,
    HermiteDatasetSpec,
    HermiteSidecar,
    IsdeConfig,
    LatentConfig,
    ModelHeader,
    PcaConfig,
    RunConfig,
    ScalingConfig,
    SelectionConfig,
)

__all__ = [
    "Command",
    "CoordinateScaling",
    "DatasetId",
    "KernelConvention",
    "MatrixFormat",
    "MedianConvention",
    "ResidualBasis",
    "SelectionStrategy",
    "ClassicConfig",
    "DiagnosticsConfig",
    "DiagnosticsReport",
    "DmapsConfig",
    "ExtremeReport",
    "FitConfig",
    "FitSummary",
    "GhConfig",
    "HermiteDatasetSpec",
    "HermiteSidecar",
    "IsdeConfig",
    "LatentConfig",
    "ModelHeader",
    "PcaConfig",
    "RunConfig",
    "ScalingConfig",
    "SelectionConfig",
]
