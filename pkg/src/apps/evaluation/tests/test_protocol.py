"""
Tests for the attribute classifier and the evaluation protocols.
"""

import csv
import json
import math

import numpy as np
import pytest
import torch

from apps.core.random import RunRandom
from apps.evaluation import (
    AttributeClassifier,
    ClassifierFeatures,
    eval_retrieval,
    eval_translation,
    lpips_diversity,
    train_attribute_classifier,
    write_csv,
    write_json,
)
from apps.evaluation.protocol import (
    closer_than_input,
    ground_truth_l1,
    lpips_input_indices,
    translate_to_random_targets,
)
from apps.retrieval import build_index


@pytest.fixture
def extractor() -> ClassifierFeatures:
    torch.manual_seed(0)
    return ClassifierFeatures(AttributeClassifier(), batch_size=8)


class TestClassifierFeatures:
    """Test the feature extractor."""

    def test_outputs(self, extractor, toy_split):
        """Test feature and probability shapes."""
        images = torch.stack([s.pixels for s in toy_split.test])
        assert extractor.features(images).shape == (12, extractor.classifier.feature_dim)
        probs = extractor.probabilities(images)
        assert probs.shape == (12, 5)
        assert probs.min() >= 0.0 and probs.max() <= 1.0

    def test_save_and_load(self, extractor, toy_split, tmp_path):
        """Test that a reloaded extractor keeps its fingerprint and outputs."""
        loaded = ClassifierFeatures.load(extractor.save(tmp_path / "classifier.pt"))
        assert loaded.fingerprint == extractor.fingerprint
        images = torch.stack([s.pixels for s in toy_split.test[:4]])
        np.testing.assert_allclose(loaded.features(images), extractor.features(images))

    def test_training(self, toy_split):
        """Test that a short training run returns a usable extractor."""
        trained = train_attribute_classifier(toy_split.train, RunRandom(0), steps=2, batch_size=4)
        assert trained.fingerprint.startswith("toy-attribute-resnet:")

    def test_training_needs_labels(self):
        """Test that an empty sample set is rejected."""
        with pytest.raises(ValueError, match="labeled"):
            train_attribute_classifier([], RunRandom(0), steps=1)

    def test_training_keeps_global_rng(self, toy_split):
        """Test that training leaves the caller's global torch generator untouched."""
        torch.manual_seed(11)
        expected = torch.rand(3)
        torch.manual_seed(11)
        train_attribute_classifier(toy_split.train, RunRandom(0), steps=1, batch_size=4)
        assert torch.equal(torch.rand(3), expected)

    def test_training_is_reproducible(self, toy_split):
        """Test that the same run seed gives the same classifier."""
        a = train_attribute_classifier(toy_split.train, RunRandom(5), steps=1, batch_size=4)
        b = train_attribute_classifier(toy_split.train, RunRandom(5), steps=1, batch_size=4)
        assert a.fingerprint == b.fingerprint


class TestTranslationProtocol:
    """Test translation evaluation on the toy split."""

    def test_random_targets_are_reproducible(self, model, style_space, toy_split):
        """Test that the same seed gives the same translations."""
        _, fakes_a, targets_a = translate_to_random_targets(model, style_space, toy_split.test, RunRandom(3))
        _, fakes_b, targets_b = translate_to_random_targets(model, style_space, toy_split.test, RunRandom(3))
        assert targets_a == targets_b
        assert torch.equal(fakes_a, fakes_b)
        assert all(t != s.attrs for t, s in zip(targets_a, toy_split.test))

    def test_ground_truth_of_identity(self, toy_split):
        """Test that re-rendered inputs have zero ground-truth error."""
        samples = toy_split.test[:3]
        reals = torch.stack([s.pixels for s in samples])
        targets = [s.attrs for s in samples]
        assert ground_truth_l1(reals, samples, targets) == 0.0
        assert closer_than_input(reals, reals, samples, targets) == 0.0

    def test_eval_translation(self, model, style_space, toy_split, extractor):
        """Test that the report is finite and carries provenance."""
        report = eval_translation(
            model, style_space, toy_split.test, extractor, RunRandom(0), "base", lpips_inputs=2, samples_per_domain=2
        )
        assert report.n == 12
        assert report.n_lpips_inputs == 2
        assert report.extractor_fingerprint == extractor.fingerprint
        assert report.checkpoint == "base"
        assert 1.0 <= report.inception_score <= 12.0
        assert 0.0 <= report.accuracy <= 1.0
        assert len(report.per_attribute_accuracy) == 5
        for value in (report.fid, report.lpips, report.ground_truth_l1, report.closer_than_input):
            assert value is not None and math.isfinite(value)

    def test_lpips_needs_two_samples(self, model, style_space, toy_split, extractor):
        """Test that one style draw per domain has no pairs to compare."""
        inputs = torch.stack([toy_split.test[0].pixels])
        with pytest.raises(ValueError, match="pairwise"):
            lpips_diversity(model, style_space, inputs, extractor, RunRandom(0), samples_per_domain=1)

    def test_lpips_inputs_are_a_seeded_draw(self):
        """Test that diversity inputs are distinct, reproducible and not simply the first images."""
        chosen = lpips_input_indices(12, 5, RunRandom(0))
        assert torch.equal(chosen, lpips_input_indices(12, 5, RunRandom(0)))
        assert len(set(chosen.tolist())) == 5
        assert chosen.tolist() == sorted(chosen.tolist())
        assert all(0 <= i < 12 for i in chosen.tolist())
        draws = [lpips_input_indices(12, 5, RunRandom(seed)).tolist() for seed in range(10)]
        assert any(draw != [0, 1, 2, 3, 4] for draw in draws)
        assert lpips_input_indices(3, 100, RunRandom(0)).tolist() == [0, 1, 2]

    def test_too_few_test_images(self, model, style_space, toy_split, extractor):
        """Test that a single test image cannot be evaluated."""
        with pytest.raises(ValueError, match="at least two"):
            eval_translation(model, style_space, toy_split.test[:1], extractor, RunRandom(0))


class TestRetrievalProtocol:
    """Test retrieval evaluation."""

    def test_learned_and_random_rows(self, model, embedder, style_space, toy_split):
        """Test that both rows score every test query."""
        index = build_index(model, embedder, toy_split.retrieval_set)
        report = eval_retrieval(model, embedder, style_space, index, toy_split.test, RunRandom(0), k=3)
        assert [r.name for r in report.rows] == ["learned", "random"]
        for row in report.rows:
            assert row.n == 12
            assert 0.0 <= row.attr_sim <= 1.0
            assert row.avg == pytest.approx((row.attr_sim + row.content_sim) / 2)
        assert report.index_fingerprint == index.fingerprint

    def test_k_exceeds_index(self, model, embedder, style_space, toy_split):
        """Test that k is bounded by the index size."""
        index = build_index(model, embedder, toy_split.retrieval_set[:2])
        with pytest.raises(ValueError, match="exceeds"):
            eval_retrieval(model, embedder, style_space, index, toy_split.test, RunRandom(0), k=3)


class TestReportFiles:
    """Test report writers."""

    def test_write_json(self, tmp_path):
        """Test that tuples are written as lists."""
        path = write_json({"acc": (0.5, 1.0)}, tmp_path / "reports" / "r.json")
        assert json.loads(path.read_text()) == {"acc": [0.5, 1.0]}

    def test_write_csv(self, tmp_path):
        """Test that columns follow the first row."""
        path = write_csv([{"seed": 0, "fid": 1.5}, {"seed": "mean", "fid": 1.5}], tmp_path / "t.csv")
        rows = list(csv.DictReader(path.open()))
        assert rows == [{"seed": "0", "fid": "1.5"}, {"seed": "mean", "fid": "1.5"}]
