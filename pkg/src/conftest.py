"""
Pytest configuration and fixtures for the rgunit project.
"""

import pytest
import torch
from polyfactory import Use
from polyfactory.factories import DataclassFactory

from adaptor.storage.adaptor import ArtifactStore
from apps.core.models import DatasetSplit, valid_domains
from apps.core.random import RunRandom
from apps.datasets.toy import ToySpec, generate_toy_dataset
from apps.networks import NetworkConfig, RetrievalEmbedder, TranslationModel, preset
from apps.style_space import GMMStyleSpace

TOY_SIZE = 16


class ToySpecFactory(DataclassFactory[ToySpec]):
    """Random toy specs at the gradcheck resolution."""

    __random_seed__ = 0

    size = TOY_SIZE
    x = Use(lambda: ToySpecFactory.__random__.uniform(5.0, TOY_SIZE - 5.0))
    y = Use(lambda: ToySpecFactory.__random__.uniform(5.0, TOY_SIZE - 5.0))
    rotation = Use(lambda: ToySpecFactory.__random__.uniform(0.0, 90.0))
    background_seed = Use(lambda: ToySpecFactory.__random__.randrange(2**31))
    attrs = Use(lambda: ToySpecFactory.__random__.choice(valid_domains()))


@pytest.fixture
def toy_spec_factory():
    """
    Factory for random toy specs.
    """
    return ToySpecFactory


@pytest.fixture(scope="session")
def toy_split() -> DatasetSplit:
    """
    A small toy dataset at 16px: 36 train / 12 test images.
    """
    return generate_toy_dataset(48, TOY_SIZE, seed=0, test_fraction=0.25)


@pytest.fixture
def run_random() -> RunRandom:
    return RunRandom(0)


@pytest.fixture
def style_space() -> GMMStyleSpace:
    return GMMStyleSpace()


@pytest.fixture
def network_config() -> NetworkConfig:
    """
    The smallest network preset.
    """
    return preset("gradcheck")


@pytest.fixture
def model(network_config) -> TranslationModel:
    """
    A freshly initialised gradcheck translator.
    """
    torch.manual_seed(0)
    return TranslationModel(network_config)


@pytest.fixture
def embedder(network_config) -> RetrievalEmbedder:
    torch.manual_seed(1)
    return RetrievalEmbedder(network_config).eval()


@pytest.fixture
def store(tmp_path) -> ArtifactStore:
    """
    An empty run directory.
    """
    return ArtifactStore(tmp_path / "run")


@pytest.fixture(scope="session")
def tiny_flat_config() -> dict:
    """
    Flat overrides that shrink every stage to a handful of steps.
    """
    return {
        "network.preset": "gradcheck",
        "data.toy_count": 40,
        "data.toy_test_fraction": 0.25,
        "data.batch_size": 4,
        "optim.base_steps": 2,
        "optim.checkpoint_every": 0,
        "retrieval.steps": 2,
        "retrieval.batch_size": 4,
        "guidance.steps": 2,
        "guidance.r": 2,
        "evaluation.k": 3,
        "evaluation.lpips_inputs": 2,
        "evaluation.samples_per_domain": 2,
        "evaluation.classifier_steps": 2,
        "evaluation.classifier_batch_size": 4,
        "evaluation.seeds": [0],
        "evaluation.scarcity_fractions": [0.5],
        "evaluation.retrieved_counts": [1],
    }
