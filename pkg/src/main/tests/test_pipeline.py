"""
End-to-end runs of the pipeline stages on a tiny toy dataset.
"""

import csv
import shutil

import pytest
from PIL import Image

from adaptor.storage.adaptor import ArtifactStore
from apps.core.exceptions import FingerprintMismatchError, PreconditionError
from apps.networks import load_checkpoint
from apps.retrieval import load_index
from main.settings import config_from_flat
from main.stages import run_stage


@pytest.fixture(scope="module")
def trained(tmp_path_factory, tiny_flat_config):
    """
    A run directory after every training stage, plus each stage's result.
    """
    cfg = config_from_flat(tiny_flat_config)
    store = ArtifactStore(tmp_path_factory.mktemp("run"))
    results = {
        stage: run_stage(stage, cfg, store)
        for stage in ("make-toy", "train-base", "train-retrieval", "build-index", "train-guided")
    }
    return cfg, store, results


@pytest.fixture
def face(tmp_path):
    path = tmp_path / "face.png"
    Image.new("RGB", (16, 16), (200, 150, 40)).save(path)
    return path


class TestTrainingStages:
    """Test the artifacts of the training stages."""

    def test_step_counts(self, trained):
        """Test that each stage ran its configured steps."""
        _, store, results = trained
        assert results["make-toy"] == {"train": 30, "test": 10, "image_size": 16}
        assert results["train-base"]["step"] == 2
        assert results["train-retrieval"]["step"] == 2
        assert results["train-guided"]["step"] == 2
        assert len(store.metrics("base").read()) == 2
        assert len(store.metrics("guided").read()) == 2

    def test_fingerprint_chain(self, trained):
        """Test that the index and the guided checkpoint point at their inputs."""
        _, store, results = trained
        retrieval = load_checkpoint(store.checkpoint("retrieval"))
        index = load_index(store.index_path)
        guided = load_checkpoint(store.checkpoint("guided"))
        assert retrieval.extra["base_fingerprint"] == results["train-base"]["fingerprint"]
        assert index.fingerprint == retrieval.fingerprint
        assert guided.extra["index_fingerprint"] == index.fingerprint
        assert guided.extra["base_fingerprint"] == results["train-base"]["fingerprint"]
        assert guided.extra["r"] == 2
        assert "fusion" in guided.state

    def test_index_covers_retrieval_set(self, trained):
        """Test that every training image is indexed."""
        _, store, results = trained
        assert len(load_index(store.index_path)) == results["make-toy"]["train"]

    def test_provenance(self, trained):
        """Test that the resolved config and code version are recorded."""
        _, store, _ = trained
        assert store.config_path.exists()
        assert store.version_path.read_text().strip()

    def test_same_seed_reproduces_base(self, trained, tmp_path):
        """Test that rerunning the first stages with the same seed gives the same weights."""
        cfg, _, results = trained
        store = ArtifactStore(tmp_path / "again")
        run_stage("make-toy", cfg, store)
        assert run_stage("train-base", cfg, store)["fingerprint"] == results["train-base"]["fingerprint"]

    def test_stale_embedder_is_refused(self, trained, tmp_path):
        """Test that an index cannot be built after the base translator changed."""
        cfg, store, _ = trained
        copy = ArtifactStore(shutil.copytree(store.root, tmp_path / "copy"))
        run_stage("train-base", cfg.model_copy(update={"seed": 7}), copy)
        with pytest.raises(FingerprintMismatchError) as err:
            run_stage("build-index", cfg, copy)
        assert err.value.required_stage == "train-retrieval"

    def test_missing_index(self, trained, tmp_path):
        """Test that fine-tuning without an index asks for build-index."""
        cfg, store, _ = trained
        copy = ArtifactStore(shutil.copytree(store.root, tmp_path / "copy"))
        copy.index_path.unlink()
        with pytest.raises(PreconditionError, match="build-index required"):
            run_stage("train-guided", cfg, copy)


class TestEvaluateStage:
    """Test the evaluate stage."""

    def test_reports(self, trained):
        """Test that base, guided and retrieval reports are written."""
        cfg, store, _ = trained
        summary = run_stage("evaluate", cfg, store)
        assert set(summary) == {"base", "guided", "retrieval"}
        assert summary["base"]["n"] == 10
        assert [row["name"] for row in summary["retrieval"]["rows"]] == ["learned", "random"]
        for name in ("translation_base", "translation_guided", "retrieval"):
            assert store.report(name).exists()


class TestSingleImageTools:
    """Test translate and retrieve on one input image."""

    def test_translate(self, trained, face):
        """Test that each style sample writes an image and a mask."""
        cfg, store, _ = trained
        result = run_stage("translate", cfg, store, input_path=face, target="blond,male", samples=2)
        assert result["target"] == "blond+male+young"
        assert len(result["outputs"]) == 2
        with Image.open(result["outputs"][0]["image"]) as image:
            assert image.size == (16, 16)

    def test_interpolate(self, trained, face):
        """Test that an interpolation strip holds the input and every frame."""
        cfg, store, _ = trained
        result = run_stage("translate", cfg, store, input_path=face, target="", interpolate="black:blond", steps=3)
        assert result["frames"] == 3
        with Image.open(result["strip"]) as strip:
            assert strip.width == 4 * 18 + 2

    def test_retrieve(self, trained, face):
        """Test that k results come back by ascending distance."""
        cfg, store, _ = trained
        result = run_stage("retrieve", cfg, store, input_path=face, target="brown,old", k=3)
        distances = [hit["distance"] for hit in result["results"]]
        assert len(distances) == 3
        assert distances == sorted(distances)

    def test_unknown_target(self, trained, face):
        """Test that an unknown attribute name is rejected."""
        cfg, store, _ = trained
        with pytest.raises(ValueError, match="unknown target attribute"):
            run_stage("translate", cfg, store, input_path=face, target="purple")


@pytest.mark.slow
class TestAblation:
    """Test one ablation table end to end."""

    def test_retrieved_table(self, trained, tmp_path):
        """Test that the table has a row per seed and count plus the mean."""
        cfg, store, _ = trained
        copy = ArtifactStore(shutil.copytree(store.root, tmp_path / "copy"))
        result = run_stage("ablate", cfg, copy, table="retrieved")
        assert result["rows"] == 2
        with open(result["csv"], newline="") as handle:
            rows = list(csv.DictReader(handle))
        assert [row["seed"] for row in rows] == ["0", "mean"]
