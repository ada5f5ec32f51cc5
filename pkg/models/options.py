from enum import Enum


class DatasetId(str, Enum):
    D0 = "D0"
    D1 = "D1"
    D2 = "D2"
    D3 = "D3"
    D4 = "D4"
    D5 = "D5"
    D6 = "D6"
    D7 = "D7"


class MatrixFormat(str, Enum):
    CSV = "csv"
    PLOM_BIN = "plom-bin"


class MedianConvention(str, Enum):
    SQUARED = "squared"  # médiane des distances au carré
    DISTANCE = "distance"  # médiane des distances, puis mise au carré


class KernelConvention(str, Enum):
    FOUR_EPS = "4eps"
    TWO_EPS = "2eps"

    @property
    def factor(self) -> float:
        return 4.0 if self is KernelConvention.FOUR_EPS else 2.0


class CoordinateScaling(str, Enum):
    B = "b"
    D = "d"


class SelectionStrategy(str, Enum):
    TOP_M = "top_m"
    RATIO_THRESHOLD = "ratio_threshold"


class ResidualBasis(str, Enum):
    MARKOV = "markov"  # vecteurs propres à droite de P, d^{-1/2} * phi
    SYMMETRIC = "symmetric"  # vecteurs propres de P_S tels quels
