"""
Finite-difference checks of every loss term's gradient on the smallest networks.
"""

import numpy as np
import pytest
import torch

from apps.translation.trainer import DISCRIMINATOR_TERMS, GENERATOR_TERMS, TranslationTrainer, make_batch

EPS = 1e-6
PROBED = (
    "content_encoder.net.0.0.weight",
    "style_encoder.mean_head.weight",
    "style_encoder.std_head.bias",
    "generator.mapping.0.weight",
    "generator.image_head.0.weight",
    "generator.mask_head.0.bias",
    "discriminator.trunk.0.0.weight",
    "discriminator.domain_head.weight",
)
PROBES_PER_PARAMETER = 3


def within_tolerance(analytic: float, numeric: float) -> bool:
    return abs(analytic - numeric) <= 1e-3 * max(abs(analytic), abs(numeric)) + 1e-8


@pytest.fixture
def setup(model, style_space, toy_split):
    model = model.double()
    trainer = TranslationTrainer(model, style_space)
    pixels = torch.stack([s.pixels for s in toy_split.train[:2]]).double()
    attrs = torch.stack([s.attrs.to_tensor() for s in toy_split.train[:2]])
    batch = make_batch(pixels, attrs, np.random.default_rng(0))
    parameters = dict(model.named_parameters())
    chooser = torch.Generator().manual_seed(0)
    probes = [
        (name, int(i))
        for name in PROBED
        for i in torch.randperm(parameters[name].numel(), generator=chooser)[:PROBES_PER_PARAMETER]
    ]
    return trainer, batch, parameters, probes


def losses(trainer, batch, side: str):
    generator = torch.Generator().manual_seed(0)
    if side == "generator":
        return trainer.generator_losses(batch.x, batch.source, batch.target, generator)
    return trainer.discriminator_losses(batch.x, batch.source, batch.target, generator)


@pytest.mark.parametrize("side, terms", [("generator", GENERATOR_TERMS), ("discriminator", DISCRIMINATOR_TERMS)])
def test_gradients_match_finite_differences(setup, side, terms):
    """Test analytic against central-difference gradients for each loss term."""
    trainer, batch, parameters, probes = setup
    tensors = [parameters[name] for name in PROBED]

    breakdown = losses(trainer, batch, side)
    analytic = {}
    for term in terms:
        value = getattr(breakdown, term)
        if not value.requires_grad:
            analytic[term] = {probe: 0.0 for probe in probes}
            continue
        grads = torch.autograd.grad(value, tensors, retain_graph=True, allow_unused=True)
        by_name = dict(zip(PROBED, grads))
        analytic[term] = {
            (name, i): 0.0 if by_name[name] is None else float(by_name[name].reshape(-1)[i]) for name, i in probes
        }

    numeric: dict[str, dict[tuple[str, int], float]] = {term: {} for term in terms}
    with torch.no_grad():
        for name, i in probes:
            flat = parameters[name].view(-1)
            original = float(flat[i])
            flat[i] = original + EPS
            plus = losses(trainer, batch, side).as_floats()
            flat[i] = original - EPS
            minus = losses(trainer, batch, side).as_floats()
            flat[i] = original
            for term in terms:
                numeric[term][(name, i)] = (plus[term] - minus[term]) / (2 * EPS)

    for term in terms:
        passed = [within_tolerance(analytic[term][p], numeric[term][p]) for p in probes]
        assert np.mean(passed) >= 0.95, term
