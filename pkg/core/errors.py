"""Hiérarchie d'exceptions commune à tous les services.

Chaque erreur peut porter l'étape (``stage``) du pipeline où elle est levée ; le
pipeline la renseigne au passage pour situer l'échec d'un ajustement ou d'une génération.
"""

from typing import Optional


class PlomError(Exception):
    """Classe de base des erreurs de la bibliothèque."""

    def __init__(self, message: str, stage: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.stage = stage

    def __str__(self) -> str:
        if self.stage:
            return f"[{self.stage}] {self.message}"
        return self.message


class InvalidParameter(PlomError):
    pass


class DegenerateFeature(PlomError):
    def __init__(self, row: int, stage: Optional[str] = None):
        super().__init__(f"Feature row {row} has zero range", stage=stage)
        self.row = row


class DimensionMismatch(PlomError):
    pass


class NumericalFailure(PlomError):
    pass


class NumericalBlowup(NumericalFailure):
    def __init__(self, step: int, magnitude: float, stage: Optional[str] = None):
        super().__init__(
            f"ISDE state exceeded {magnitude:.3g} in magnitude at step {step}; "
            "reduce the step size or increase damping",
            stage=stage,
        )
        self.step = step


class PlomIOError(PlomError):
    pass


class ParseError(PlomError):
    pass


class VersionMismatch(PlomError):
    pass


class NotFitted(PlomError):
    pass


class InsufficientSupport(PlomError):
    pass
