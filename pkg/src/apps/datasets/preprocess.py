"""
Image decoding and geometric preprocessing.
"""

import io

import torch
from PIL import Image, UnidentifiedImageError
from torchvision.transforms import functional as TF

from apps.core.exceptions import ImageDecodeError, ImageTooSmallError


def decode_image(raw: bytes) -> Image.Image:
    try:
        image = Image.open(io.BytesIO(raw))
        image.load()
    except (UnidentifiedImageError, OSError) as e:
        raise ImageDecodeError(f"cannot decode image: {e}") from e
    return image.convert("RGB")


def preprocess_image(raw: bytes, target: int, crop: int | None = None) -> torch.Tensor:
    """
    Center-crop to a square, resize to `target` and scale into [-1, 1].

    `crop` defaults to the shorter side (178 for CelebA's 178x218 frames).
    Returns a float tensor [3, target, target].
    """
    image = decode_image(raw)
    width, height = image.size
    side = crop if crop is not None else min(width, height)
    if width < side or height < side:
        raise ImageTooSmallError(f"image {width}x{height} is smaller than crop {side}x{side}")
    if (width, height) != (side, side):
        image = TF.center_crop(image, [side, side])
    if side != target:
        image = TF.resize(image, [target, target], interpolation=TF.InterpolationMode.BICUBIC)
    tensor = TF.pil_to_tensor(image).to(torch.float32)
    return (tensor / 127.5 - 1.0).clamp_(-1.0, 1.0)


def to_unit(image: torch.Tensor) -> torch.Tensor:
    """Map a [3,H,W] image in [-1, 1] or a [1,H,W] mask in [0, 1] to [3,H,W] in [0, 1]."""
    image = image.detach().cpu().float()
    if image.shape[0] == 1:
        return image.repeat(3, 1, 1).clamp(0.0, 1.0)
    return ((image + 1.0) / 2.0).clamp(0.0, 1.0)


def to_pil(pixels: torch.Tensor) -> Image.Image:
    """Encode an image or mask (see `to_unit`) as an 8-bit RGB image."""
    return TF.to_pil_image((to_unit(pixels) * 255.0).round().to(torch.uint8))


def random_mirror(batch: torch.Tensor, generator: torch.Generator) -> torch.Tensor:
    """Flip each image of a [B,3,H,W] batch horizontally with probability 1/2."""
    flip = torch.rand(batch.shape[0], generator=generator, device=generator.device) < 0.5
    flip = flip.to(batch.device)
    return torch.where(flip[:, None, None, None], batch.flip(-1), batch)
