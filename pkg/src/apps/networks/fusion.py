"""
Content fusion block f: merges retrieved content codes into the input's.
"""

from collections.abc import Sequence

import torch
from torch import nn

from apps.core.exceptions import ShapeError

# Scale applied to the default init of the retrieved-code half of the merge
# convolution, so a fresh block is nearly a pass-through of c_in.
RETRIEVED_INIT_SCALE = 1e-2


class ContentFusion(nn.Module):
    """
    c_total = merge(c_in ++ ReLU(reduce(r_1 ++ ... ++ r_n))).

    The merge convolution has no activation because content codes are
    signed.
    """

    def __init__(self, channels: int, n_retrieved: int) -> None:
        super().__init__()
        self.channels = channels
        self.n_retrieved = n_retrieved
        self.reduce = nn.Sequential(nn.Conv2d(n_retrieved * channels, channels, 3, 1, 1), nn.ReLU())
        self.merge = nn.Conv2d(2 * channels, channels, 3, 1, 1)
        self.reset_to_passthrough()

    @torch.no_grad()
    def reset_to_passthrough(self) -> None:
        weight = self.merge.weight
        weight[:, self.channels :].mul_(RETRIEVED_INIT_SCALE)
        weight[:, : self.channels].zero_()
        for c in range(self.channels):
            weight[c, c, 1, 1] = 1.0
        assert self.merge.bias is not None
        self.merge.bias.zero_()

    def forward(self, c_in: torch.Tensor, retrieved: Sequence[torch.Tensor]) -> torch.Tensor:
        if not retrieved:
            return c_in
        if len(retrieved) != self.n_retrieved:
            raise ShapeError(f"fusion expects {self.n_retrieved} retrieved codes, got {len(retrieved)}")
        for code in retrieved:
            if code.shape != c_in.shape:
                raise ShapeError(f"retrieved code {tuple(code.shape)} does not match {tuple(c_in.shape)}")
        reduced = self.reduce(torch.cat(list(retrieved), dim=1))
        return self.merge(torch.cat([c_in, reduced], dim=1))
