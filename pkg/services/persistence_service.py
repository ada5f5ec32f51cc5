"""Conteneur de modèle versionné.

Disposition : magic ``GHPLOMv\\0`` | version du format u32 | longueur d'en-tête u64 |
en-tête JSON UTF-8 (``ModelHeader``) | blocs plom-bin concaténés, décalages
comptés depuis le premier octet après l'en-tête.
"""

import logging
import struct
from pathlib import Path
from typing import Dict, Union

import numpy as np
from pydantic import ValidationError

from core.errors import ParseError, PlomIOError, VersionMismatch
from models.schemas import BlockEntry, ModelHeader
from .data_service import DataMatrix, ScalingRecord, decode_plom_bin, encode_plom_bin
from .density_service import KdeModel
from .dmaps_service import DmapsModel
from .gh_service import GhInterpolant
from .isde_service import ReducedBasis
from .pca_service import PcaModel
from .pipeline_service import FORMAT_VERSION, ClassicPlomModel, GhPlomModel

logger = logging.getLogger(__name__)

MODEL_MAGIC = b"GHPLOMv\x00"
_PREAMBLE = struct.Struct("<8sIQ")


def _pca_blocks(prefix: str, pca: PcaModel) -> Dict[str, np.ndarray]:
    return {
        f"{prefix}mean": pca.mean,
        f"{prefix}eigenvalues": pca.eigenvalues,
        f"{prefix}eigenvectors": pca.eigenvectors,
        f"{prefix}explained": pca.explained_variance_ratio,
    }


def _pca_from(prefix: str, blocks: Dict[str, np.ndarray]) -> PcaModel:
    return PcaModel(
        mean=blocks[f"{prefix}mean"][:, 0],
        eigenvalues=blocks[f"{prefix}eigenvalues"][:, 0],
        eigenvectors=blocks[f"{prefix}eigenvectors"],
        explained_variance_ratio=blocks[f"{prefix}explained"][:, 0],
    )


def _collect(model: GhPlomModel):
    blocks: Dict[str, np.ndarray] = {
        "scaling_min": model.scaling.minimum,
        "scaling_max": model.scaling.maximum,
        "dmaps_b": model.dmaps.b_diag,
        "dmaps_d": model.dmaps.d_diag,
        "dmaps_eigenvalues": model.dmaps.eigenvalues,
        "dmaps_eigenvectors": model.dmaps.eigenvectors,
        "dmaps_coordinates": model.dmaps.coordinates,
        "dmaps_residuals": model.dmaps.residuals,
        "latent_mean": model.latent_mean,
        "whitening": model.whitening,
        "unwhitening": model.unwhitening,
        "kde_centers": model.kde.centers,
        "gh_inputs": model.lift.inputs,
        "gh_eigenvalues": model.lift.eigenvalues,
        "gh_eigenvectors": model.lift.eigenvectors,
        "gh_coefficients": model.lift.coefficients,
        "training": model.training.values,
    }
    scalars = {
        "eps_s": model.scaling.eps_s,
        "dmaps_epsilon": model.dmaps.epsilon,
        "dmaps_alpha_norm": model.dmaps.alpha_norm,
        "dmaps_kappa": float(model.dmaps.kappa),
        "kde_s": model.kde.s,
        "kde_s_hat": model.kde.s_hat,
        "gh_epsilon": model.lift.epsilon,
        "gh_delta": model.lift.delta,
    }
    indices = {
        "selected": list(model.dmaps.selected),
        "input_rows": list(model.training.input_rows),
    }
    flags = {"pca": model.pca is not None, "classic": model.classic is not None}
    if model.pca is not None:
        blocks.update(_pca_blocks("pca_", model.pca))
    if model.classic is not None:
        classic = model.classic
        blocks.update(_pca_blocks("classic_pca_", classic.pca))
        blocks.update(
            {
                "classic_scaling_min": classic.scaling.minimum,
                "classic_scaling_max": classic.scaling.maximum,
                "classic_basis_g": classic.basis.g,
                "classic_basis_a": classic.basis.a,
                "classic_kde_centers": classic.kde.centers,
            }
        )
        scalars.update(
            {
                "classic_eps_s": classic.scaling.eps_s,
                "classic_kde_s": classic.kde.s,
                "classic_kde_s_hat": classic.kde.s_hat,
            }
        )
    return blocks, scalars, indices, flags


def save_model(model: GhPlomModel, path: Union[str, Path]) -> Path:
    """Écrit le conteneur ; les tableaux sont stockés bit à bit."""
    path = Path(path)
    blocks, scalars, indices, flags = _collect(model)

    payloads = []
    entries = []
    offset = 0
    for name, array in blocks.items():
        payload = encode_plom_bin(array)
        entries.append(BlockEntry(name=name, offset=offset, length=len(payload)))
        payloads.append(payload)
        offset += len(payload)

    header = ModelHeader(
        format_version=model.format_version,
        config=model.config,
        scalars=scalars,
        indices=indices,
        flags=flags,
        feature_labels=model.training.feature_labels,
        blocks=entries,
    )
    header_bytes = header.model_dump_json().encode("utf-8")
    try:
        with open(path, "wb") as handle:
            handle.write(_PREAMBLE.pack(MODEL_MAGIC, model.format_version, len(header_bytes)))
            handle.write(header_bytes)
            for payload in payloads:
                handle.write(payload)
    except OSError as e:
        raise PlomIOError(f"cannot write model {path}: {e}")
    logger.info(f"Saved model to {path} ({len(entries)} blocks)")
    return path


def _read_header(raw: bytes, path: Path):
    if len(raw) < _PREAMBLE.size:
        raise ParseError(f"{path}: model file truncated at byte {len(raw)}")
    magic, version, header_length = _PREAMBLE.unpack_from(raw)
    if magic != MODEL_MAGIC:
        raise ParseError(f"{path}: bad model magic {magic!r} at byte 0")
    if version != FORMAT_VERSION:
        raise VersionMismatch(
            f"{path}: model format version {version}, this reader supports {FORMAT_VERSION}"
        )
    start = _PREAMBLE.size
    end = start + header_length
    if len(raw) < end:
        raise ParseError(f"{path}: header runs past end of file (byte {len(raw)})")
    try:
        header = ModelHeader.model_validate_json(raw[start:end])
    except ValidationError as e:
        raise ParseError(f"{path}: invalid model header at byte {start}: {e}")
    return header, end


def load_model(path: Union[str, Path]) -> GhPlomModel:
    """
    Lit un conteneur écrit par ``save_model``.

    Raises:
        PlomIOError: fichier illisible
        ParseError: magic, en-tête ou bloc invalide
        VersionMismatch: version de format inconnue de ce lecteur
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise PlomIOError(f"cannot read model {path}: {e}")
    header, body = _read_header(raw, path)

    blocks: Dict[str, np.ndarray] = {}
    for entry in header.blocks:
        start = body + entry.offset
        if start + entry.length > len(raw):
            raise ParseError(f"{path}: block '{entry.name}' runs past end of file (byte {start})")
        try:
            blocks[entry.name] = decode_plom_bin(raw[start : start + entry.length])
        except ParseError as e:
            raise ParseError(f"{path}: block '{entry.name}' at byte {start}: {e.message}")

    try:
        model = _assemble(header, blocks)
    except KeyError as e:
        raise ParseError(f"{path}: missing block or field {e}")
    logger.info(f"Loaded model from {path}")
    return model


def _vector(blocks: Dict[str, np.ndarray], name: str) -> np.ndarray:
    return blocks[name][:, 0]


def _assemble(header: ModelHeader, blocks: Dict[str, np.ndarray]) -> GhPlomModel:
    s = header.scalars
    config = header.config

    scaling = ScalingRecord(_vector(blocks, "scaling_min"), _vector(blocks, "scaling_max"), s["eps_s"])
    pca = _pca_from("pca_", blocks) if header.flags.get("pca") else None
    dmaps = DmapsModel(
        epsilon=s["dmaps_epsilon"],
        alpha_norm=s["dmaps_alpha_norm"],
        kappa=int(s["dmaps_kappa"]),
        b_diag=_vector(blocks, "dmaps_b"),
        d_diag=_vector(blocks, "dmaps_d"),
        eigenvalues=_vector(blocks, "dmaps_eigenvalues"),
        eigenvectors=blocks["dmaps_eigenvectors"],
        coordinates=blocks["dmaps_coordinates"],
        residuals=_vector(blocks, "dmaps_residuals"),
        selected=list(header.indices["selected"]),
        coordinate_scaling=config.dmaps.coordinate_scaling,
    )
    kde = KdeModel(centers=blocks["kde_centers"], s=s["kde_s"], s_hat=s["kde_s_hat"])
    lift = GhInterpolant(
        inputs=blocks["gh_inputs"],
        epsilon=s["gh_epsilon"],
        delta=s["gh_delta"],
        eigenvalues=_vector(blocks, "gh_eigenvalues"),
        eigenvectors=blocks["gh_eigenvectors"],
        coefficients=blocks["gh_coefficients"],
        kernel_convention=config.gh.kernel_convention,
    )
    training = DataMatrix(
        blocks["training"],
        feature_labels=header.feature_labels,
        input_rows=tuple(header.indices.get("input_rows", [])),
    )

    classic = None
    if header.flags.get("classic"):
        classic = ClassicPlomModel(
            scaling=ScalingRecord(
                _vector(blocks, "classic_scaling_min"),
                _vector(blocks, "classic_scaling_max"),
                s["classic_eps_s"],
            ),
            pca=_pca_from("classic_pca_", blocks),
            basis=ReducedBasis(g=blocks["classic_basis_g"], a=blocks["classic_basis_a"]),
            kde=KdeModel(
                centers=blocks["classic_kde_centers"],
                s=s["classic_kde_s"],
                s_hat=s["classic_kde_s_hat"],
            ),
        )

    return GhPlomModel(
        config=config,
        scaling=scaling,
        pca=pca,
        dmaps=dmaps,
        latent_mean=_vector(blocks, "latent_mean"),
        whitening=blocks["whitening"],
        unwhitening=blocks["unwhitening"],
        kde=kde,
        lift=lift,
        training=training,
        classic=classic,
        format_version=header.format_version,
    )
