import csv
import logging
import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from core import rng
from core.errors import (
    DegenerateFeature,
    InvalidParameter,
    ParseError,
    PlomIOError,
)
from models.options import MatrixFormat
from models.schemas import HermiteDatasetSpec, HermiteSidecar

logger = logging.getLogger(__name__)

MAX_HERMITE_DEGREE = 20

PLOM_MAGIC = b"PLOM"
PLOM_VERSION = 1
_PLOM_HEADER = struct.Struct("<4sIQQ")
LABEL_HEADER = "feature"

# Multi-indices (alpha_1, alpha_2) de la base produit tensoriel, par famille :
# Psi_alpha(x) = psi_alpha_1(x1) * psi_alpha_2(x2).
HERMITE_FAMILIES: Dict[str, List[Tuple[int, int]]] = {
    "D0": [(0, 1), (0, 2), (0, 3), (0, 4)],
    "D1": [(0, 1), (1, 0), (0, 2)],
    "D2": [(0, 1), (1, 0), (0, 2), (1, 1)],
    "D3": [(0, 1), (1, 0), (0, 2), (1, 1), (0, 3)],
    "D4": [(0, 1), (1, 0), (0, 2), (1, 1), (0, 3), (1, 2)],
    "D5": [(0, 1), (1, 0), (0, 2), (1, 1), (0, 3), (1, 2), (0, 4)],
    "D6": [(0, 1), (1, 0), (0, 2), (1, 1), (0, 3), (1, 2), (0, 4), (1, 3)],
    "D7": [(0, 1), (1, 0), (0, 2), (1, 1), (0, 3), (1, 2), (0, 4), (1, 3), (2, 2)],
}

INPUT_LABELS = ("x1", "x2")

ArrayLike = Union[float, np.ndarray]


@dataclass
class DataMatrix:
    """Jeu de données ambiant : ``n`` lignes de variables, ``N`` colonnes d'échantillons.

    ``input_rows`` repère les lignes auxiliaires (les entrées brutes d'un
    benchmark synthétique) qui accompagnent les données sans être des variables.
    """

    values: np.ndarray
    feature_labels: Optional[List[str]] = None
    input_rows: Tuple[int, ...] = ()

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[np.newaxis, :]
        if values.ndim != 2 or values.shape[0] < 1:
            raise InvalidParameter(f"DataMatrix needs a 2-D array, got shape {values.shape}")
        if values.shape[1] < 2:
            raise InvalidParameter(f"DataMatrix needs at least two samples, got {values.shape[1]}")
        if not np.all(np.isfinite(values)):
            raise InvalidParameter("DataMatrix entries must be finite")
        self.values = values
        if self.feature_labels is not None:
            self.feature_labels = [str(label) for label in self.feature_labels]
            if len(self.feature_labels) != values.shape[0]:
                raise InvalidParameter(
                    f"{len(self.feature_labels)} labels for {values.shape[0]} feature rows"
                )
        self.input_rows = tuple(int(r) for r in self.input_rows)
        if any(r < 0 or r >= values.shape[0] for r in self.input_rows):
            raise InvalidParameter(f"input rows {self.input_rows} out of range")

    @property
    def n_features(self) -> int:
        return self.values.shape[0]

    @property
    def n_samples(self) -> int:
        return self.values.shape[1]

    def samples(self) -> np.ndarray:
        """Échantillons en lignes, forme (N, n)."""
        return self.values.T

    def labels(self) -> List[str]:
        if self.feature_labels is not None:
            return list(self.feature_labels)
        return [f"f{i}" for i in range(self.n_features)]

    def require_samples(self, minimum: int) -> "DataMatrix":
        if self.n_samples < minimum:
            raise InvalidParameter(f"need at least {minimum} samples, got {self.n_samples}")
        return self

    def features(self) -> "DataMatrix":
        """Vue sans les lignes d'entrées auxiliaires."""
        if not self.input_rows:
            return self
        keep = [i for i in range(self.n_features) if i not in self.input_rows]
        labels = [self.labels()[i] for i in keep] if self.feature_labels else None
        return DataMatrix(self.values[keep], labels)

    def inputs(self) -> np.ndarray:
        return self.values[list(self.input_rows)]

    def with_values(self, values: np.ndarray) -> "DataMatrix":
        return replace(self, values=values)


@dataclass
class ScalingRecord:
    minimum: np.ndarray
    maximum: np.ndarray
    eps_s: float = 0.0

    @property
    def degenerate(self) -> List[int]:
        return [int(i) for i in np.flatnonzero(self.maximum == self.minimum)]

    @property
    def span(self) -> np.ndarray:
        return self.maximum - self.minimum

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (values - self.minimum[:, None]) / self.span[:, None] + self.eps_s

    def invert(self, values: np.ndarray) -> np.ndarray:
        return (values - self.eps_s) * self.span[:, None] + self.minimum[:, None]


# ---------------------------------------------------------------------------
# Benchmark de Hermite
# ---------------------------------------------------------------------------


def _check_degree(degree: int) -> int:
    if int(degree) != degree or degree < 0:
        raise InvalidParameter(f"Hermite degree must be a non-negative integer, got {degree}")
    if degree > MAX_HERMITE_DEGREE:
        raise InvalidParameter(
            f"Hermite degree {degree} exceeds the supported maximum {MAX_HERMITE_DEGREE}"
        )
    return int(degree)


def hermite_polynomial(degree: int, x: ArrayLike) -> ArrayLike:
    """Polynôme de Hermite probabiliste h_degree(x), par la récurrence à trois termes."""
    degree = _check_degree(degree)
    x = np.asarray(x, dtype=np.float64)
    previous = np.ones_like(x)
    if degree == 0:
        return previous if previous.ndim else float(previous)
    current = x.copy()
    for n in range(1, degree):
        previous, current = current, x * current - n * previous
    return current if current.ndim else float(current)


def normalized_hermite(degree: int, x: ArrayLike) -> ArrayLike:
    """h_degree(x) / sqrt(degree!), orthonormé pour la gaussienne standard."""
    degree = _check_degree(degree)
    return hermite_polynomial(degree, x) / math.sqrt(math.factorial(degree))


def basis_label(alpha: Tuple[int, int]) -> str:
    return f"psi_{alpha[0]}_{alpha[1]}"


def evaluate_hermite_basis(
    dataset_id: str,
    x1: np.ndarray,
    x2: np.ndarray,
    normalized: bool = True,
) -> np.ndarray:
    """Évalue chaque Psi_alpha d'une famille, une ligne par fonction de base."""
    family = HERMITE_FAMILIES.get(str(getattr(dataset_id, "value", dataset_id)))
    if family is None:
        raise InvalidParameter(
            f"Unknown dataset id {dataset_id!r}; valid ids are {', '.join(HERMITE_FAMILIES)}"
        )
    univariate = normalized_hermite if normalized else hermite_polynomial
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    return np.vstack([univariate(a1, x1) * univariate(a2, x2) for a1, a2 in family])


def generate_hermite_dataset(spec: HermiteDatasetSpec) -> DataMatrix:
    """
    Tire un jeu de données bruité du benchmark de Hermite.

    Args:
        spec: famille, nombre d'échantillons, bruit, graine et normalisation

    Returns:
        DataMatrix avec une ligne par fonction de base, suivie des deux
        lignes d'entrée (x1, x2) signalées dans ``input_rows``.
    """
    dataset_id = str(getattr(spec.dataset_id, "value", spec.dataset_id))
    if dataset_id not in HERMITE_FAMILIES:
        raise InvalidParameter(
            f"Unknown dataset id {dataset_id!r}; valid ids are {', '.join(HERMITE_FAMILIES)}"
        )
    if spec.n_samples < 2:
        raise InvalidParameter(f"n_samples must be at least 2, got {spec.n_samples}")

    inputs = rng.stream(spec.seed, rng.HERMITE_INPUTS).standard_normal((2, spec.n_samples))
    basis = evaluate_hermite_basis(dataset_id, inputs[0], inputs[1], spec.normalized)
    if spec.noise_std > 0:
        noise = rng.stream(spec.seed, rng.HERMITE_NOISE).standard_normal(basis.shape)
        basis = basis + spec.noise_std * noise

    family = HERMITE_FAMILIES[dataset_id]
    labels = [basis_label(alpha) for alpha in family] + list(INPUT_LABELS)
    n_basis = len(family)
    logger.info(
        f"Generated Hermite dataset {dataset_id}: {n_basis} basis rows, "
        f"{spec.n_samples} samples, noise {spec.noise_std}"
    )
    return DataMatrix(
        np.vstack([basis, inputs]),
        feature_labels=labels,
        input_rows=(n_basis, n_basis + 1),
    )


# ---------------------------------------------------------------------------
# Mise à l'échelle
# ---------------------------------------------------------------------------


def minmax_scale(data: DataMatrix, eps_s: float = 1e-9) -> Tuple[DataMatrix, ScalingRecord]:
    """Ramène chaque variable à (x - min) / (max - min) + eps_s."""
    if eps_s < 0:
        raise InvalidParameter(f"eps_s must be non-negative, got {eps_s}")
    minimum = data.values.min(axis=1)
    maximum = data.values.max(axis=1)
    degenerate = [int(i) for i in np.flatnonzero(maximum == minimum)]
    if degenerate:
        raise DegenerateFeature(degenerate[0])
    record = ScalingRecord(minimum=minimum, maximum=maximum, eps_s=float(eps_s))
    return data.with_values(record.apply(data.values)), record


# ---------------------------------------------------------------------------
# Persistance
# ---------------------------------------------------------------------------


def encode_plom_bin(values: np.ndarray) -> bytes:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, np.newaxis]
    rows, cols = values.shape
    header = _PLOM_HEADER.pack(PLOM_MAGIC, PLOM_VERSION, rows, cols)
    return header + values.astype("<f8").tobytes(order="F")


def decode_plom_bin(payload: bytes) -> np.ndarray:
    if len(payload) < _PLOM_HEADER.size:
        raise ParseError(f"plom-bin payload truncated: {len(payload)} bytes, header needs {_PLOM_HEADER.size}")
    magic, version, rows, cols = _PLOM_HEADER.unpack_from(payload)
    if magic != PLOM_MAGIC:
        raise ParseError(f"bad plom-bin magic {magic!r} at byte 0")
    if version != PLOM_VERSION:
        raise ParseError(f"unsupported plom-bin version {version} at byte 4")
    expected = _PLOM_HEADER.size + 8 * rows * cols
    if len(payload) != expected:
        raise ParseError(
            f"plom-bin payload has {len(payload)} bytes, expected {expected} for {rows}x{cols}"
        )
    data = np.frombuffer(payload, dtype="<f8", offset=_PLOM_HEADER.size, count=rows * cols)
    return np.ascontiguousarray(data.reshape((rows, cols), order="F"), dtype=np.float64)


def infer_format(path: Union[str, Path]) -> MatrixFormat:
    return MatrixFormat.CSV if Path(path).suffix.lower() == ".csv" else MatrixFormat.PLOM_BIN


def _resolve_format(matrix_format: Optional[Union[MatrixFormat, str]], path: Path) -> MatrixFormat:
    if matrix_format is None:
        return infer_format(path)
    try:
        return MatrixFormat(matrix_format)
    except ValueError:
        valid = ", ".join(f.value for f in MatrixFormat)
        raise InvalidParameter(f"unknown matrix format {matrix_format!r}; valid formats are {valid}")


def _parse_float(token: str, row: int, column: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"non-numeric value {token!r} at row {row}, column {column}")
    if not math.isfinite(value):
        raise ParseError(f"non-finite value {token!r} at row {row}, column {column}")
    return value


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def _read_csv(path: Path, transpose: bool) -> DataMatrix:
    with open(path, newline="") as handle:
        rows = [r for r in csv.reader(handle) if r]
    if not rows:
        raise ParseError(f"{path}: empty CSV")

    header: Optional[List[str]] = None
    first_data_row = 0
    if not all(_is_number(token) for token in rows[0]):
        header = [token.strip() for token in rows[0]]
        first_data_row = 1

    labels: Optional[List[str]] = None
    label_column = False
    if not transpose and first_data_row < len(rows):
        # l'en-tête "feature,s0,..." écrit par _write_csv annonce une colonne d'étiquettes
        label_column = (header is not None and header[0].lower() == LABEL_HEADER) or not _is_number(
            rows[first_data_row][0]
        )
    if transpose:
        labels = header

    table: List[List[float]] = []
    width = None
    row_labels: List[str] = []
    for r, row in enumerate(rows[first_data_row:], start=first_data_row + 1):
        cells = row
        if label_column:
            row_labels.append(cells[0].strip())
            cells = cells[1:]
        parsed = [
            _parse_float(token, r, c + 1 + int(label_column)) for c, token in enumerate(cells)
        ]
        if width is None:
            width = len(parsed)
        elif len(parsed) != width:
            raise ParseError(f"row {r} has {len(parsed)} values, expected {width}")
        table.append(parsed)
    if not table:
        raise ParseError(f"{path}: CSV holds a header but no values")

    values = np.array(table, dtype=np.float64)
    if transpose:
        values = values.T
    elif label_column:
        labels = row_labels
    return DataMatrix(values, feature_labels=labels)


def _write_csv(data: DataMatrix, path: Path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        if data.feature_labels is not None:
            writer.writerow([LABEL_HEADER] + [f"s{j}" for j in range(data.n_samples)])
            for label, row in zip(data.feature_labels, data.values):
                writer.writerow([label] + [repr(float(v)) for v in row])
        else:
            for row in data.values:
                writer.writerow([repr(float(v)) for v in row])


def load_matrix(
    path: Union[str, Path],
    matrix_format: Optional[Union[MatrixFormat, str]] = None,
    transpose: bool = False,
) -> DataMatrix:
    """
    Charge un jeu de données, échantillons en colonnes.

    Args:
        path: fichier à lire
        matrix_format: csv ou plom-bin (déduit de l'extension si absent)
        transpose: CSV seulement, la source range un échantillon par ligne

    Returns:
        DataMatrix lue, avec étiquettes et lignes d'entrée reprises du
        fichier ``<path>.json`` associé s'il existe
    """
    path = Path(path)
    matrix_format = _resolve_format(matrix_format, path)
    if not path.is_file():
        raise PlomIOError(f"cannot read {path}: no such file")
    try:
        if matrix_format is MatrixFormat.CSV:
            data = _read_csv(path, transpose)
        else:
            data = DataMatrix(decode_plom_bin(path.read_bytes()))
    except OSError as e:
        raise PlomIOError(f"cannot read {path}: {e}")
    except ParseError as e:
        raise ParseError(f"{path}: {e.message}")
    data = _apply_sidecar(data, path)
    logger.info(f"Loaded {data.n_features}x{data.n_samples} matrix from {path}")
    return data


def save_matrix(
    data: DataMatrix,
    path: Union[str, Path],
    matrix_format: Optional[Union[MatrixFormat, str]] = None,
) -> Path:
    path = Path(path)
    matrix_format = _resolve_format(matrix_format, path)
    try:
        if matrix_format is MatrixFormat.CSV:
            _write_csv(data, path)
        else:
            path.write_bytes(encode_plom_bin(data.values))
    except OSError as e:
        raise PlomIOError(f"cannot write {path}: {e}")
    logger.debug(f"Saved {data.n_features}x{data.n_samples} matrix to {path}")
    return path


# ---------------------------------------------------------------------------
# Métadonnées associées
# ---------------------------------------------------------------------------


def sidecar_path(path: Union[str, Path]) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_sidecar(path: Union[str, Path], spec: HermiteDatasetSpec, data: DataMatrix) -> Path:
    """Enregistre à côté du fichier la spécification du tirage, les étiquettes et les lignes d'entrée."""
    sidecar = HermiteSidecar(
        spec=spec,
        feature_labels=data.labels(),
        input_rows=list(data.input_rows),
        shape=[data.n_features, data.n_samples],
    )
    target = sidecar_path(path)
    try:
        target.write_text(sidecar.model_dump_json(indent=2))
    except OSError as e:
        raise PlomIOError(f"cannot write {target}: {e}")
    return target


def _apply_sidecar(data: DataMatrix, path: Path) -> DataMatrix:
    source = sidecar_path(path)
    if not source.is_file():
        return data
    try:
        sidecar = HermiteSidecar.model_validate_json(source.read_text())
    except (OSError, ValueError) as e:
        logger.warning(f"Ignoring unreadable sidecar {source}: {e}")
        return data
    if sidecar.shape != [data.n_features, data.n_samples]:
        logger.warning(f"Ignoring sidecar {source}: shape {sidecar.shape} does not match the data")
        return data
    return DataMatrix(data.values, sidecar.feature_labels, tuple(sidecar.input_rows))


def stack_samples(samples: Sequence[DataMatrix]) -> np.ndarray:
    """Concatène les réalisations par colonnes en un tableau (n, somme des N)."""
    if not samples:
        raise InvalidParameter("no samples to pool")
    return np.hstack([s.values for s in samples])
