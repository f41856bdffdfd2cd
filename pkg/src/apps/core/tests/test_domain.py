"""
Tests for the shared domain types and run randomness.
"""

import numpy as np
import pytest
import torch

from apps.core.exceptions import ConfigError, FingerprintMismatchError, NonFiniteLossError, PreconditionError
from apps.core.models import (
    AttributeVector,
    DatasetSplit,
    ImageSample,
    parse_target,
    stack_attrs,
    valid_domains,
)
from apps.core.random import RunRandom


class TestAttributeVector:
    """Test attribute vectors and domain enumeration."""

    def test_wrong_length_rejected(self):
        """Test that a vector must carry exactly five bits."""
        with pytest.raises(ValueError, match="5 attribute bits"):
            AttributeVector((True, False))

    def test_valid_domains(self):
        """Test that twelve domains exist, each with one hair bit."""
        domains = valid_domains()
        assert len(domains) == 12
        assert len(set(domains)) == 12
        assert all(d.is_valid_domain for d in domains)

    def test_tensor_round_trip(self):
        """Test conversion to and from a float tensor."""
        vector = AttributeVector.of([0, 1, 0, 1, 1])
        assert AttributeVector.from_tensor(vector.to_tensor()) == vector

    def test_differing_bits(self):
        """Test the Hamming distance between two vectors."""
        a = AttributeVector.of([1, 0, 0, 0, 1])
        b = AttributeVector.of([0, 1, 0, 1, 1])
        assert a.differing_bits(b) == 3

    def test_describe(self):
        """Test the human-readable domain name."""
        assert AttributeVector.of([0, 1, 0, 0, 1]).describe() == "blond+female+young"
        assert str(AttributeVector.of([0, 1, 0, 0, 1])) == "01001"

    def test_stack_attrs(self):
        """Test stacking vectors into a [B, n] tensor."""
        batch = stack_attrs(valid_domains()[:3])
        assert batch.shape == (3, 5)
        assert batch.dtype == torch.float32


class TestParseTarget:
    """Test parsing of comma separated targets."""

    def test_defaults_to_female_young(self):
        """Test that unspecified gender and age default to female and young."""
        assert parse_target("blond") == AttributeVector.of([0, 1, 0, 0, 1])

    def test_full_target(self):
        """Test a target naming every attribute."""
        assert parse_target("brown, male, old") == AttributeVector.of([0, 0, 1, 1, 0])

    def test_inherits_from_base(self):
        """Test that unspecified bits come from the base vector."""
        base = AttributeVector.of([1, 0, 0, 1, 0])
        assert parse_target("blond", base) == AttributeVector.of([0, 1, 0, 1, 0])

    def test_unknown_token(self):
        """Test that an unknown attribute is rejected."""
        with pytest.raises(ValueError, match="redhead"):
            parse_target("redhead")


class TestDatasetSplit:
    """Test split validation."""

    def test_overlap_rejected(self):
        """Test that train and test may not share ids."""
        sample = ImageSample("a", None, data=torch.zeros(3, 4, 4))
        with pytest.raises(ValueError, match="overlap"):
            DatasetSplit((sample,), (sample,), ())

    def test_sample_without_pixels(self):
        """Test that a sample with neither data nor loader fails on access."""
        with pytest.raises(ValueError, match="neither pixels nor a loader"):
            _ = ImageSample("a", None).pixels

    def test_lazy_loader(self):
        """Test that pixels come from the loader when no data is held."""
        sample = ImageSample("a", None, loader=lambda: torch.ones(3, 4, 4))
        assert float(sample.pixels.sum()) == 48.0
        assert not sample.labeled


class TestRunRandom:
    """Test named random streams."""

    def test_same_name_same_stream(self):
        """Test that a stream is reproducible from the root seed."""
        a = RunRandom(7).numpy("x").random(5)
        b = RunRandom(7).numpy("x").random(5)
        np.testing.assert_array_equal(a, b)

    def test_names_are_independent(self):
        """Test that different names give different streams."""
        random = RunRandom(7)
        assert not np.array_equal(random.numpy("x").random(5), random.numpy("y").random(5))

    def test_seeds_differ(self):
        """Test that different root seeds give different streams."""
        assert RunRandom(1).seed_for("init") != RunRandom(2).seed_for("init")

    def test_torch_stream(self):
        """Test that torch generators are reproducible too."""
        a = torch.randn(4, generator=RunRandom(3).torch("s"))
        b = torch.randn(4, generator=RunRandom(3).torch("s"))
        assert torch.equal(a, b)

    def test_seeded_block_restores_global_state(self):
        """Test that seeded module init is reproducible and leaves the caller's generator alone."""
        torch.manual_seed(0)
        expected = torch.rand(2)
        torch.manual_seed(0)
        with RunRandom(4).seeded("init"):
            a = torch.nn.Linear(3, 3).weight.detach().clone()
        with RunRandom(4).seeded("init"):
            b = torch.nn.Linear(3, 3).weight.detach().clone()
        assert torch.equal(a, b)
        assert torch.equal(torch.rand(2), expected)


class TestExceptions:
    """Test the exception hierarchy."""

    def test_config_error_names_path(self):
        """Test that config errors carry the dotted path."""
        err = ConfigError("loss.cycle", "must be a number")
        assert err.path == "loss.cycle"
        assert "loss.cycle" in str(err)

    def test_fingerprint_mismatch_is_precondition(self):
        """Test that a fingerprint mismatch is a precondition failure."""
        err = FingerprintMismatchError("mismatch", required_stage="build-index")
        assert isinstance(err, PreconditionError)
        assert err.required_stage == "build-index"

    def test_non_finite_names_term(self):
        """Test that non-finite loss errors name the term."""
        err = NonFiniteLossError("cycle", float("nan"))
        assert err.term == "cycle"
        assert "cycle" in str(err)
