"""
Tests for the procedural toy dataset.
"""

from dataclasses import replace

import numpy as np
import pytest
import torch
from PIL import Image

from apps.core.models import AttributeVector, valid_domains
from apps.datasets.domains import sample_target_attrs
from apps.datasets.toy import (
    ToyPriors,
    content_bins,
    foreground_mask,
    generate_toy_dataset,
    ground_truth_translation,
    load_toy_dataset,
    render_toy,
    save_toy_dataset,
)


class TestRenderToy:
    """Test rendering of single toy specs."""

    def test_render_is_pure(self, toy_spec_factory):
        """Test that the same spec renders identically twice."""
        spec = toy_spec_factory.build()
        assert torch.equal(render_toy(spec), render_toy(spec))

    def test_render_range_and_shape(self, toy_spec_factory):
        """Test that renders are [3, size, size] in [-1, 1]."""
        for spec in toy_spec_factory.batch(10):
            image = render_toy(spec)
            assert image.shape == (3, spec.size, spec.size)
            assert float(image.min()) >= -1.0
            assert float(image.max()) <= 1.0

    def test_hair_flip_keeps_background(self, toy_spec_factory):
        """Test that changing the hue bit only touches foreground pixels."""
        spec = toy_spec_factory.build(attrs=AttributeVector.of([1, 0, 0, 1, 0]))
        flipped = replace(spec, attrs=AttributeVector.of([0, 1, 0, 1, 0]))
        background = ~torch.from_numpy(foreground_mask(spec))
        a, b = render_toy(spec), render_toy(flipped)
        assert torch.equal(a[:, background], b[:, background])
        assert not torch.equal(a, b)

    def test_degenerate_size(self, toy_spec_factory):
        """Test that a 4px render works."""
        spec = toy_spec_factory.build(size=4, x=2.0, y=2.0)
        assert render_toy(spec).shape == (3, 4, 4)

    def test_content_bins(self, toy_spec_factory):
        """Test that content annotations are four booleans independent of attributes."""
        spec = toy_spec_factory.build()
        bins = content_bins(spec)
        assert len(bins) == 4
        assert bins == content_bins(replace(spec, attrs=valid_domains()[5]))


class TestGenerateToyDataset:
    """Test deterministic toy dataset generation."""

    def test_deterministic(self):
        """Test that the same seed gives bit-identical datasets."""
        a = generate_toy_dataset(30, 32, seed=7)
        b = generate_toy_dataset(30, 32, seed=7)
        assert [s.id for s in a.train] == [s.id for s in b.train]
        for x, y in zip(a.train + a.test, b.train + b.test):
            assert x.attrs == y.attrs
            assert torch.equal(x.pixels, y.pixels)

    def test_attrs_are_valid_domains(self, toy_split):
        """Test that every sample has exactly one hue bit set."""
        assert all(s.attrs.is_valid_domain for s in toy_split.train + toy_split.test)

    def test_split_sizes(self, toy_split):
        """Test the test fraction and that the retrieval set is the train split."""
        assert len(toy_split.test) == 12
        assert len(toy_split.train) == 36
        assert toy_split.retrieval_set == toy_split.train

    def test_size_not_divisible_by_four(self):
        """Test that the image size must be divisible by 4."""
        with pytest.raises(ValueError, match="divisible by 4"):
            generate_toy_dataset(4, 30, seed=0)

    def test_count_must_be_positive(self):
        """Test that an empty dataset is rejected."""
        with pytest.raises(ValueError, match="positive"):
            generate_toy_dataset(0, 16, seed=0)

    def test_marginals_follow_priors(self):
        """Test attribute marginals over 10,000 samples against the priors."""
        priors = ToyPriors(hair=(0.5, 0.3, 0.2), male=0.4, young=0.7)
        split = generate_toy_dataset(10_000, 4, seed=3, priors=priors)
        bits = np.array([s.attrs.bits for s in split.train + split.test], dtype=float)
        expected = [0.5, 0.3, 0.2, 0.4, 0.7]
        np.testing.assert_allclose(bits.mean(axis=0), expected, atol=0.02)

    def test_ground_truth_translation(self, toy_split):
        """Test that re-rendering under the original attributes reproduces the sample."""
        sample = toy_split.train[0]
        assert torch.equal(ground_truth_translation(sample, sample.attrs), sample.pixels)
        target = next(d for d in valid_domains() if d != sample.attrs)
        assert not torch.equal(ground_truth_translation(sample, target), sample.pixels)

    def test_save_and_load(self, toy_split, tmp_path):
        """Test that a saved dataset re-renders to identical tensors."""
        manifest = save_toy_dataset(toy_split, tmp_path / "toy")
        assert manifest.exists()
        assert len(list((tmp_path / "toy" / "images").glob("*.png"))) == 48
        loaded = load_toy_dataset(tmp_path / "toy")
        assert [s.id for s in loaded.test] == [s.id for s in toy_split.test]
        for a, b in zip(loaded.train, toy_split.train):
            assert a.attrs == b.attrs
            assert a.aux == b.aux
            assert torch.equal(a.pixels, b.pixels)

    def test_saved_pngs_match_pixels(self, toy_split, tmp_path):
        """Test that every saved PNG encodes its sample from the [-1, 1] range."""
        save_toy_dataset(toy_split, tmp_path / "toy")
        for sample in toy_split.train:
            with Image.open(tmp_path / "toy" / "images" / f"{sample.id}.png") as image:
                saved = torch.from_numpy(np.asarray(image)).permute(2, 0, 1).float()
            expected = ((sample.pixels + 1.0) / 2.0 * 255.0).round()
            assert torch.equal(saved, expected)


class TestSampleTargetAttrs:
    """Test random target domain sampling."""

    def test_never_returns_source(self):
        """Test that the target always differs from the source."""
        rng = np.random.default_rng(0)
        source = AttributeVector.of([1, 0, 0, 1, 1])
        draws = [sample_target_attrs(source, rng) for _ in range(2000)]
        assert source not in draws
        assert all(d.is_valid_domain for d in draws)

    def test_covers_every_domain(self):
        """Test that every valid domain is drawn for an invalid source."""
        rng = np.random.default_rng(1)
        source = AttributeVector.of([1, 1, 0, 0, 0])
        draws = {sample_target_attrs(source, rng) for _ in range(10_000)}
        assert draws == set(valid_domains())

    def test_unlabeled_source(self):
        """Test that an unlabeled source may go to any domain."""
        rng = np.random.default_rng(2)
        assert sample_target_attrs(None, rng).is_valid_domain
