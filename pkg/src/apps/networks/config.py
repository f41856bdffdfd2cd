"""
Network hyper-parameters and presets.
"""

from dataclasses import asdict, dataclass, replace
from typing import Any


@dataclass(frozen=True)
class NetworkConfig:
    """
    Sizes of every network. Channel widths scale with `base_width`
    (64 gives 256-channel content codes, a
    512-channel discriminator trunk and a 512-unit retrieval MLP).
    """

    base_width: int = 64
    image_size: int = 128
    n_res: int = 4
    n_attrs: int = 5
    block_dim: int = 8
    embed_dim: int = 100
    dropout: float = 0.1

    def __post_init__(self) -> None:
        for name in ("base_width", "image_size", "n_res", "n_attrs", "block_dim", "embed_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.image_size % 16:
            raise ValueError(f"image_size must be divisible by 16, got {self.image_size}")

    @property
    def content_channels(self) -> int:
        return 4 * self.base_width

    @property
    def content_size(self) -> int:
        return self.image_size // 4

    @property
    def style_dim(self) -> int:
        return self.n_attrs * self.block_dim

    @property
    def adain_hidden(self) -> int:
        return 4 * self.base_width

    @property
    def retrieval_hidden(self) -> int:
        return 8 * self.base_width

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "NetworkConfig":
        return cls(**data)


PRESETS: dict[str, NetworkConfig] = {
    "full": NetworkConfig(),
    "toy": NetworkConfig(base_width=16, image_size=32, n_res=2),
    "gradcheck": NetworkConfig(base_width=8, image_size=16, n_res=1, embed_dim=16),
}


def preset(name: str, **overrides: Any) -> NetworkConfig:
    try:
        base = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown network preset {name!r}; choose from {sorted(PRESETS)}") from None
    return replace(base, **overrides) if overrides else base
