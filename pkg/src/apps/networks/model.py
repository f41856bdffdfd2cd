"""
Container for the translator's networks plus freeze/checksum helpers.
"""

import hashlib
import logging
from collections.abc import Iterator, Sequence

import torch
from torch import nn

from apps.style_space import StylePosterior

from .config import NetworkConfig
from .discriminator import Discriminator, DiscriminatorOutput
from .encoders import ContentEncoder, StyleEncoder
from .fusion import ContentFusion
from .generator import Generator, GeneratorOutput

logger = logging.getLogger(__name__)


def parameter_checksum(*modules: nn.Module) -> str:
    """SHA-256 over every parameter and buffer, in state-dict order."""
    digest = hashlib.sha256()
    for module in modules:
        for name, tensor in module.state_dict().items():
            digest.update(name.encode("utf-8"))
            digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


class TranslationModel(nn.Module):
    """E_c, E_s, G, D and (from stage 3 on) the fusion block f."""

    def __init__(self, config: NetworkConfig) -> None:
        super().__init__()
        self.config = config
        self.content_encoder = ContentEncoder(config)
        self.style_encoder = StyleEncoder(config)
        self.generator = Generator(config)
        self.discriminator = Discriminator(config)
        self.fusion: ContentFusion | None = None

    def attach_fusion(self, n_retrieved: int) -> ContentFusion:
        self.fusion = ContentFusion(self.config.content_channels, n_retrieved)
        return self.fusion

    def encode_content(self, x: torch.Tensor) -> torch.Tensor:
        return self.content_encoder(x)

    def encode_style(self, x: torch.Tensor) -> StylePosterior:
        return self.style_encoder(x)

    def decode(self, content: torch.Tensor, style: torch.Tensor, x_in: torch.Tensor) -> GeneratorOutput:
        return self.generator(content, style, x_in)

    def discriminate(self, x: torch.Tensor) -> DiscriminatorOutput:
        return self.discriminator(x)

    def fuse_content(self, c_in: torch.Tensor, retrieved: Sequence[torch.Tensor]) -> torch.Tensor:
        if not retrieved:
            return c_in
        if self.fusion is None:
            raise RuntimeError("no fusion block attached; call attach_fusion first")
        return self.fusion(c_in, retrieved)

    def encoders(self) -> tuple[nn.Module, nn.Module]:
        return self.content_encoder, self.style_encoder

    def freeze_encoders(self) -> None:
        for module in self.encoders():
            module.requires_grad_(False)
        logger.info("Froze content and style encoders")

    def encoders_frozen(self) -> bool:
        return all(not p.requires_grad for m in self.encoders() for p in m.parameters())

    def translator_parameters(self) -> Iterator[nn.Parameter]:
        """Parameters updated by the generator objective."""
        for module in (self.content_encoder, self.style_encoder, self.generator, self.fusion):
            if module is not None:
                yield from (p for p in module.parameters() if p.requires_grad)

    def encoder_checksum(self) -> str:
        return parameter_checksum(*self.encoders())
