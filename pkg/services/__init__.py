from .data_service import DataMatrix, generate_hermite_dataset, load_matrix, save_matrix
from .pipeline_service import GhPlomModel, embed, fit, generate, generate_classic
from .diagnostics_service import conditional_expectation, diagnose, ensemble_mean, extreme_sample
from .persistence_service import load_model, save_model

__all__ = [
    "DataMatrix",
    "generate_hermite_dataset",
    "load_matrix",
    "save_matrix",
    "GhPlomModel",
    "embed",
    "fit",
    "generate",
    "generate_classic",
    "conditional_expectation",
    "diagnose",
    "ensemble_mean",
    "extreme_sample",
    "load_model",
    "save_model",
]
