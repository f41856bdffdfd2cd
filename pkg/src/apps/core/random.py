"""
Run-wide randomness.

Every random stream of a run derives from one root seed; streams are
addressed by name so adding a consumer never perturbs the others.
"""

import zlib
from collections.abc import Iterator
from contextlib import contextmanager

import numpy as np
import torch


class RunRandom:
    """Seeded root generator handing out named numpy / torch streams."""

    def __init__(self, seed: int) -> None:
        self.seed = seed

    def _sequence(self, name: str) -> np.random.SeedSequence:
        return np.random.SeedSequence([self.seed, zlib.crc32(name.encode("utf-8"))])

    def numpy(self, name: str) -> np.random.Generator:
        return np.random.default_rng(self._sequence(name))

    def torch(self, name: str, device: str | torch.device = "cpu") -> torch.Generator:
        state = self._sequence(name).generate_state(2, dtype=np.uint32)
        generator = torch.Generator(device=device)
        generator.manual_seed(int(state[0]) << 32 | int(state[1]))
        return generator

    def seed_for(self, name: str) -> int:
        return int(self._sequence(name).generate_state(1, dtype=np.uint32)[0])

    @contextmanager
    def seeded(self, name: str) -> Iterator[None]:
        """
        Seed torch's global generator from the named stream for the block.

        Module constructors draw their initial weights from the global
        generator; the caller's generator state is restored on exit.
        """
        with torch.random.fork_rng():
            torch.manual_seed(self.seed_for(name))
            yield
