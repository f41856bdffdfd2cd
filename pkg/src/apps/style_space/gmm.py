"""
Gaussian-mixture style latent space.

One diagonal Gaussian component per domain. The style vector is split in
one block of `block_dim` dimensions per attribute; a block is centred on
`mean_on` when its attribute is set and on `mean_off` otherwise.
"""

from dataclasses import dataclass

import torch

from apps.core.models import N_ATTRS, AttributeVector, valid_domains

# A StyleCode is a float tensor [d] or a batch [B, d].
StyleCode = torch.Tensor


def _as_bits(attrs: AttributeVector | torch.Tensor) -> torch.Tensor:
    if isinstance(attrs, AttributeVector):
        return attrs.to_tensor()
    return attrs.to(torch.float32)


def diagonal_gaussian_kl(
    mu_q: torch.Tensor, std_q: torch.Tensor, mu_p: torch.Tensor, std_p: torch.Tensor
) -> torch.Tensor:
    """KL(q || p) of diagonal Gaussians, summed over the last dimension."""
    if bool((std_q <= 0).any()) or bool((std_p <= 0).any()):
        raise ValueError("standard deviations must be strictly positive")
    terms = torch.log(std_p / std_q) + (std_q**2 + (mu_q - mu_p) ** 2) / (2 * std_p**2) - 0.5
    return terms.sum(dim=-1)


@dataclass(frozen=True)
class StylePosterior:
    """Diagonal Gaussian predicted by the style encoder."""

    mean: torch.Tensor
    stddev: torch.Tensor

    def rsample(self, generator: torch.Generator | None = None) -> StyleCode:
        device = generator.device if generator is not None else self.mean.device
        eps = torch.randn(self.mean.shape, generator=generator, device=device, dtype=self.mean.dtype)
        eps = eps.to(self.mean.device)
        return self.mean + self.stddev * eps

    def detach(self) -> "StylePosterior":
        return StylePosterior(self.mean.detach(), self.stddev.detach())


@dataclass(frozen=True)
class GMMStyleSpace:
    n_attrs: int = N_ATTRS
    block_dim: int = 8
    mean_on: float = 1.0
    mean_off: float = -1.0
    stddev: float = 0.5

    def __post_init__(self) -> None:
        if self.stddev <= 0:
            raise ValueError(f"stddev must be positive, got {self.stddev}")
        if self.n_attrs <= 0 or self.block_dim <= 0:
            raise ValueError("n_attrs and block_dim must be positive")

    @property
    def d(self) -> int:
        return self.n_attrs * self.block_dim

    @property
    def weights(self) -> tuple[float, ...]:
        # Sampling is always domain-conditioned, so the mixture weights are inert.
        k = len(valid_domains())
        return tuple(1.0 / k for _ in range(k))

    def component_params(
        self, attrs: AttributeVector | torch.Tensor, dtype: torch.dtype = torch.float32
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Mean and stddev of the component of `attrs` ([n] or [B, n]) as [d] or [B, d]."""
        bits = _as_bits(attrs)
        if bits.shape[-1] != self.n_attrs:
            raise ValueError(f"expected {self.n_attrs} attribute bits, got {bits.shape[-1]}")
        on = bits.repeat_interleave(self.block_dim, dim=-1) > 0.5
        mean = torch.where(on, self.mean_on, self.mean_off).to(dtype)
        return mean, torch.full_like(mean, self.stddev)

    def sample_style(
        self,
        attrs: AttributeVector | torch.Tensor,
        generator: torch.Generator | None = None,
        stddev: float | None = None,
        dtype: torch.dtype = torch.float32,
    ) -> StyleCode:
        """Reparameterised draw s = mean + stddev * eps from the component of `attrs`."""
        mean, std = self.component_params(attrs, dtype)
        if stddev is not None:
            std = torch.full_like(mean, stddev)
        device = generator.device if generator is not None else mean.device
        eps = torch.randn(mean.shape, generator=generator, device=device, dtype=mean.dtype)
        return mean + std * eps.to(mean.device)

    def kl_to_component(self, posterior: StylePosterior, attrs: AttributeVector | torch.Tensor) -> torch.Tensor:
        """Closed-form KL(posterior || component), averaged over the batch."""
        mean, std = self.component_params(attrs, posterior.mean.dtype)
        mean = mean.to(posterior.mean.device)
        std = std.to(posterior.mean.device)
        return diagonal_gaussian_kl(posterior.mean, posterior.stddev, mean, std).mean()


def interpolate_styles(a: StyleCode, b: StyleCode, t: float) -> StyleCode:
    if a.shape != b.shape:
        raise ValueError(f"style codes differ in shape: {tuple(a.shape)} vs {tuple(b.shape)}")
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    if t == 0.0:
        return a.clone()
    if t == 1.0:
        return b.clone()
    return (1.0 - t) * a + t * b


def interpolation_path(steps: int) -> list[float]:
    """`steps` evenly spaced interpolation weights from 0 to 1 inclusive."""
    if steps < 2:
        raise ValueError("an interpolation path needs at least two steps")
    return [i / (steps - 1) for i in range(steps)]
