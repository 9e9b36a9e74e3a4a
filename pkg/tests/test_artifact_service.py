"""Tests for artifact reading and writing."""
import json

import numpy as np
import pytest

from models import DgpConfig, PosteriorSpectrum
from services import ArtifactService, EmulatorService
from services.artifact_service import load_artifact, predictions_frame, read_curves_csv, read_params_csv
from utils import ConfigurationError, SchemaVersionError


@pytest.fixture
def posterior():
    """A small posterior with mixture moments."""
    rng = np.random.default_rng(9)
    mean = rng.normal(size=5)
    return PosteriorSpectrum(
        T=7,
        mean=mean,
        lower=mean - 0.1,
        upper=mean + 0.2,
        k=np.logspace(-2, 0, 5),
        mixture_mean=mean + 1e-3,
        mixture_cov=np.eye(5) / 3.0,
        w_mean=np.linspace(0.0, 1.0, 5),
        theta_s=rng.gamma(2.0, size=7),
        theta_w=rng.gamma(2.0, size=7),
        cosmology_id="M001",
    )


@pytest.fixture
def artifacts(tmp_path):
    return ArtifactService(tmp_path)


def test_posterior_round_trip(artifacts, posterior):
    """Test that every array survives the JSON artifact exactly."""
    path = artifacts.save_posterior(posterior, DgpConfig(seed=3), extra={"error_convention": "literal"})
    loaded = ArtifactService.load_posterior(path)

    assert path.name == "posterior_M001.json"
    assert (path.parent / "summary_M001.csv").exists()
    assert loaded.cosmology_id == "M001" and loaded.T == 7
    for name in ("mean", "lower", "upper", "k", "mixture_mean", "mixture_cov", "w_mean", "theta_s", "theta_w"):
        assert np.array_equal(getattr(loaded, name), getattr(posterior, name))
    assert load_artifact(path, "posterior")["error_convention"] == "literal"


def test_schema_major_mismatch(artifacts, posterior):
    """Test that another major version is refused."""
    path = artifacts.save_posterior(posterior, DgpConfig())
    document = json.loads(path.read_text())
    document["schema_version"] = "2.0"
    path.write_text(json.dumps(document))
    with pytest.raises(SchemaVersionError):
        ArtifactService.load_posterior(path)


def test_schema_missing_version(artifacts, posterior):
    """Test that an artifact without a version is refused."""
    path = artifacts.save_posterior(posterior, DgpConfig())
    document = json.loads(path.read_text())
    del document["schema_version"]
    path.write_text(json.dumps(document))
    with pytest.raises(SchemaVersionError):
        ArtifactService.load_posterior(path)


def test_wrong_kind(artifacts, posterior):
    """Test that a posterior cannot be loaded as an emulator."""
    path = artifacts.save_posterior(posterior, DgpConfig())
    with pytest.raises(ConfigurationError):
        ArtifactService.load_emulator(path)


def test_emulator_round_trip(artifacts):
    """Test that a reloaded emulator predicts the same curves."""
    rng = np.random.default_rng(4)
    k = np.logspace(-2, 0, 10)
    posts = [
        PosteriorSpectrum(T=1, mean=curve, lower=curve, upper=curve, k=k, cosmology_id=f"c{i}")
        for i, curve in enumerate(rng.normal(size=(5, 10)))
    ]
    psi = rng.uniform(size=(5, 2))
    service = EmulatorService(p_eta=3, seed=1)
    basis = service.build_basis(posts)
    emulator = service.fit(basis, psi, k, [p.cosmology_id for p in posts])

    loaded = ArtifactService.load_emulator(artifacts.save_emulator(emulator))
    star = rng.uniform(size=(4, 2))

    assert loaded.cosmology_ids == emulator.cosmology_ids
    assert np.allclose(service.predict(loaded, star), service.predict(emulator, star), rtol=0, atol=1e-12)


def test_basis_round_trip(artifacts):
    """Test that the basis file keeps its grid and training ids."""
    k = np.arange(1.0, 5.0)
    posts = [
        PosteriorSpectrum(T=1, mean=curve, lower=curve, upper=curve, k=k, cosmology_id=f"c{i}")
        for i, curve in enumerate(np.random.default_rng(6).normal(size=(3, 4)))
    ]
    basis = EmulatorService(p_eta=2).build_basis(posts)
    loaded, loaded_k, ids = ArtifactService.load_basis(artifacts.save_basis(basis, k, ["c0", "c1", "c2"]))

    assert ids == ["c0", "c1", "c2"]
    assert np.array_equal(loaded_k, k)
    assert np.array_equal(loaded.B, basis.B)


def test_params_csv(tmp_path):
    """Test parameter columns are ordered by their index."""
    path = tmp_path / "params.csv"
    path.write_text("cosmology_id,psi_2,psi_1\n007,2.0,1.0\n008,4.0,3.0\n")
    ids, psi = read_params_csv(path)
    assert ids == ["007", "008"]
    assert np.array_equal(psi, [[1.0, 2.0], [3.0, 4.0]])


@pytest.mark.parametrize("content", ["", "cosmology_id,psi_1\n", "cosmology_id,other\nA,1.0\n"])
def test_params_csv_rejects_empty(tmp_path, content):
    """Test that empty and header-only tables are configuration errors."""
    path = tmp_path / "params.csv"
    path.write_text(content)
    with pytest.raises(ConfigurationError):
        read_params_csv(path)


def test_predictions_table(artifacts, tmp_path):
    """Test the long prediction table read back by cosmology."""
    k = np.array([0.1, 0.2, 0.3])
    curves = np.arange(6.0).reshape(2, 3)
    artifacts.save_table(predictions_frame(["a", "b"], k, curves), "predictions.csv")
    table = read_curves_csv(tmp_path / "predictions.csv")

    assert list(table) == ["a", "b"]
    assert np.array_equal(table["b"][0], k)
    assert np.array_equal(table["b"][1], curves[1])
