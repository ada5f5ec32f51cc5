from enum import Enum


class Command(str, Enum):
    HERMITE_GEN = "hermite-gen"
    FIT = "fit"
    SAMPLE = "sample"
    SPECTRUM = "spectrum"
    RESIDUALS = "residuals"
    PCA_SPECTRUM = "pca-spectrum"
    EXTREME = "extreme"
    CONDITIONAL = "conditional"
    SCHEMA = "schema"
