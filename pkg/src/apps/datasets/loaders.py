"""
Torch data pipeline over DatasetSplit samples.
"""

from collections.abc import Iterator, Sequence

import torch
from torch.utils.data import DataLoader, Dataset

from apps.core.models import ImageSample


class ImageDataset(Dataset[tuple[torch.Tensor, torch.Tensor, int]]):
    """Yields (pixels, attribute tensor, index); labels are required."""

    def __init__(self, samples: Sequence[ImageSample]) -> None:
        self.samples = list(samples)

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, index: int) -> tuple[torch.Tensor, torch.Tensor, int]:
        sample = self.samples[index]
        if sample.attrs is None:
            raise ValueError(f"sample {sample.id} carries no attributes")
        return sample.pixels, sample.attrs.to_tensor(), index


def infinite_batches(
    samples: Sequence[ImageSample], batch_size: int, generator: torch.Generator
) -> Iterator[tuple[torch.Tensor, torch.Tensor, torch.Tensor]]:
    """
    Endless seeded shuffled batches.

    Loading happens in the main process so iteration order depends only on
    the generator.
    """
    loader = DataLoader(
        ImageDataset(samples),
        batch_size=batch_size,
        shuffle=True,
        drop_last=len(samples) >= batch_size,
        generator=generator,
        num_workers=0,
    )
    while True:
        yield from loader


def stack_pixels(samples: Sequence[ImageSample]) -> torch.Tensor:
    return torch.stack([s.pixels for s in samples])
