"""
Triplet construction from a frozen translator.

The anchor pairs an image's content with a style drawn from the target
domain; the positive re-encodes the translation of that pair. Negatives
come in four flavours that vary whether content, style or both differ
from the anchor.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from enum import StrEnum

import numpy as np
import torch

from apps.core.models import AttributeVector, ImageSample, stack_attrs, valid_domains
from apps.datasets.domains import sample_target_attrs
from apps.networks import TranslationModel
from apps.style_space import GMMStyleSpace

logger = logging.getLogger(__name__)


class NegativeStrategy(StrEnum):
    EASY = "easy"
    MEDIUM = "medium"
    HARD_STYLE = "hard_style"
    HARD_SAMEDOMAIN = "hard_samedomain"


# Each mix is a list of categories drawn uniformly; variants inside a
# category share its probability.
STRATEGY_MIXES: dict[str, tuple[tuple[NegativeStrategy, ...], ...]] = {
    "easy": ((NegativeStrategy.EASY,),),
    "medium": ((NegativeStrategy.EASY,), (NegativeStrategy.MEDIUM,)),
    "hard": ((NegativeStrategy.EASY,), (NegativeStrategy.MEDIUM,), (NegativeStrategy.HARD_STYLE,)),
    "all": (
        (NegativeStrategy.EASY,),
        (NegativeStrategy.MEDIUM,),
        (NegativeStrategy.HARD_STYLE, NegativeStrategy.HARD_SAMEDOMAIN),
    ),
}


def draw_strategy(mix: str, rng: np.random.Generator) -> NegativeStrategy:
    try:
        categories = STRATEGY_MIXES[mix]
    except KeyError:
        raise ValueError(f"unknown strategy mix {mix!r}; choose from {sorted(STRATEGY_MIXES)}") from None
    category = categories[int(rng.integers(len(categories)))]
    return category[int(rng.integers(len(category)))]


@dataclass(frozen=True)
class EmbedderInput:
    """A (content code, style vector) pair, batched: [B,C,h,w] and [B,d]."""

    content: torch.Tensor
    style: torch.Tensor

    def __len__(self) -> int:
        return self.content.shape[0]

    def select(self, rows: Sequence[int]) -> "EmbedderInput":
        index = torch.as_tensor(list(rows), dtype=torch.long, device=self.content.device)
        return EmbedderInput(self.content[index], self.style[index])


@dataclass(frozen=True)
class Triplet:
    anchor: EmbedderInput
    positive: EmbedderInput
    negative: EmbedderInput
    strategy: NegativeStrategy


@dataclass(frozen=True)
class TripletBatch:
    """Row i of anchor, positive and negative forms one triplet tagged strategies[i]."""

    anchor: EmbedderInput
    positive: EmbedderInput
    negative: EmbedderInput
    strategies: tuple[NegativeStrategy, ...]

    def __len__(self) -> int:
        return len(self.strategies)

    def __getitem__(self, i: int) -> Triplet:
        return Triplet(
            self.anchor.select([i]), self.positive.select([i]), self.negative.select([i]), self.strategies[i]
        )


class TripletBuilder:
    """
    Builds triplets with a frozen translator. `pool` is the set random
    negatives x_r are drawn from; it must be labeled.
    """

    def __init__(
        self,
        model: TranslationModel,
        style_space: GMMStyleSpace,
        pool: Sequence[ImageSample],
        mix: str = "all",
    ) -> None:
        if mix not in STRATEGY_MIXES:
            raise ValueError(f"unknown strategy mix {mix!r}; choose from {sorted(STRATEGY_MIXES)}")
        self.model = model
        self.style_space = style_space
        self.pool = [s for s in pool if s.attrs is not None]
        if not self.pool:
            raise ValueError("the negative pool holds no labeled images")
        self.mix = mix

    @property
    def device(self) -> torch.device:
        return next(self.model.parameters()).device

    def _styles(self, attrs: Sequence[AttributeVector], generator: torch.Generator | None) -> torch.Tensor:
        return self.style_space.sample_style(stack_attrs(attrs), generator).to(self.device)

    def _reencode(self, content: torch.Tensor, style: torch.Tensor, x_in: torch.Tensor) -> EmbedderInput:
        generated = self.model.decode(content, style, x_in).composite
        return EmbedderInput(self.model.encode_content(generated), self.model.encode_style(generated).mean)

    def random_image(self, target: AttributeVector, rng: np.random.Generator) -> ImageSample:
        """A pool image whose domain differs from `target`."""
        candidates = [s for s in self.pool if s.attrs != target]
        if not candidates:
            raise ValueError(f"no pool image outside domain {target}")
        return candidates[int(rng.integers(len(candidates)))]

    @torch.no_grad()
    def make_anchor(
        self, x: torch.Tensor, targets: Sequence[AttributeVector], generator: torch.Generator | None = None
    ) -> EmbedderInput:
        return EmbedderInput(self.model.encode_content(x), self._styles(targets, generator))

    @torch.no_grad()
    def make_positive(self, x: torch.Tensor, anchor: EmbedderInput) -> EmbedderInput:
        """Translate x with the anchor style and re-encode the result."""
        return self._reencode(anchor.content, anchor.style, x)

    @torch.no_grad()
    def make_negative(
        self,
        x: torch.Tensor,
        anchor: EmbedderInput,
        sources: Sequence[AttributeVector | None],
        targets: Sequence[AttributeVector],
        strategy: NegativeStrategy | str,
        rng: np.random.Generator,
        generator: torch.Generator | None = None,
    ) -> EmbedderInput:
        strategy = NegativeStrategy(strategy)
        if strategy in (NegativeStrategy.EASY, NegativeStrategy.MEDIUM):
            x_r = torch.stack([self.random_image(t, rng).pixels for t in targets]).to(x)
            c_r = self.model.encode_content(x_r)
            if strategy is NegativeStrategy.EASY:
                return EmbedderInput(c_r, self.model.encode_style(x_r).mean)
            return self._reencode(c_r, anchor.style, x_r)

        if strategy is NegativeStrategy.HARD_STYLE:
            others = [[d for d in valid_domains() if d != t] for t in targets]
            styles = [o[int(rng.integers(len(o)))] for o in others]
        else:
            if any(s is None for s in sources):
                raise ValueError("same-domain hard negatives need labeled anchors")
            styles = [s for s in sources if s is not None]
        return self._reencode(anchor.content, self._styles(styles, generator), x)

    @torch.no_grad()
    def build(
        self,
        x: torch.Tensor,
        sources: Sequence[AttributeVector],
        rng: np.random.Generator,
        generator: torch.Generator | None = None,
    ) -> TripletBatch:
        """One triplet per image, each with its own target domain and negative strategy."""
        targets = [sample_target_attrs(s, rng) for s in sources]
        strategies = tuple(draw_strategy(self.mix, rng) for _ in sources)

        anchor = self.make_anchor(x, targets, generator)
        positive = self.make_positive(x, anchor)

        content = torch.empty_like(anchor.content)
        style = torch.empty_like(anchor.style)
        for strategy in NegativeStrategy:
            rows = [i for i, s in enumerate(strategies) if s is strategy]
            if not rows:
                continue
            index = torch.as_tensor(rows, dtype=torch.long, device=x.device)
            negative = self.make_negative(
                x[index],
                anchor.select(rows),
                [sources[i] for i in rows],
                [targets[i] for i in rows],
                strategy,
                rng,
                generator,
            )
            content[index] = negative.content
            style[index] = negative.style
        return TripletBatch(anchor, positive, EmbedderInput(content, style), strategies)
