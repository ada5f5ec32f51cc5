import struct

import numpy as np
import pytest

from core.errors import ParseError, PlomIOError, VersionMismatch
from services.persistence_service import MODEL_MAGIC, load_model, save_model
from services.pipeline_service import generate, generate_classic, summarize


def test_reloaded_model_generates_identical_samples(d1_model, tmp_path):
    path = save_model(d1_model, tmp_path / "model.ghplom")
    loaded = load_model(path)
    assert loaded.config == d1_model.config
    assert loaded.dmaps.selected == d1_model.dmaps.selected
    assert loaded.training.feature_labels == d1_model.training.feature_labels
    np.testing.assert_array_equal(loaded.kde.centers, d1_model.kde.centers)
    before = generate(d1_model, n_mc=1, seed=3)[0]
    after = generate(loaded, n_mc=1, seed=3)[0]
    np.testing.assert_array_equal(after.values, before.values)


def test_reloaded_summary_matches(d1_model, tmp_path):
    loaded = load_model(save_model(d1_model, tmp_path / "model.ghplom"))
    assert summarize(loaded) == summarize(d1_model)


def test_classic_baseline_survives_reload(d1_model_classic, tmp_path):
    loaded = load_model(save_model(d1_model_classic, tmp_path / "classic.ghplom"))
    assert loaded.classic is not None
    assert loaded.classic.basis_dim == d1_model_classic.classic.basis_dim
    before = generate_classic(d1_model_classic, n_mc=1, seed=8)[0]
    after = generate_classic(loaded, n_mc=1, seed=8)[0]
    np.testing.assert_array_equal(after.values, before.values)


def test_file_starts_with_magic(d1_model, tmp_path):
    raw = save_model(d1_model, tmp_path / "model.ghplom").read_bytes()
    assert raw[:8] == MODEL_MAGIC
    assert struct.unpack_from("<I", raw, 8)[0] == 1


def test_bad_magic(d1_model, tmp_path):
    path = save_model(d1_model, tmp_path / "model.ghplom")
    raw = bytearray(path.read_bytes())
    raw[:8] = b"NOTAMODL"
    path.write_bytes(bytes(raw))
    with pytest.raises(ParseError):
        load_model(path)


def test_unknown_version(d1_model, tmp_path):
    path = save_model(d1_model, tmp_path / "model.ghplom")
    raw = bytearray(path.read_bytes())
    struct.pack_into("<I", raw, 8, 2)
    path.write_bytes(bytes(raw))
    with pytest.raises(VersionMismatch):
        load_model(path)


def test_truncated_file(d1_model, tmp_path):
    path = save_model(d1_model, tmp_path / "model.ghplom")
    path.write_bytes(path.read_bytes()[:-16])
    with pytest.raises(ParseError):
        load_model(path)


def test_missing_file(tmp_path):
    with pytest.raises(PlomIOError):
        load_model(tmp_path / "absent.ghplom")
