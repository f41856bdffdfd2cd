"""
Image grids for qualitative results.
"""

import logging
from collections.abc import Sequence
from pathlib import Path

import torch
from PIL import Image, ImageDraw, ImageFont
from torchvision.transforms import functional as TF
from torchvision.utils import make_grid

from apps.datasets.preprocess import to_unit

logger = logging.getLogger(__name__)

LABEL_HEIGHT = 14


def tile(rows: Sequence[Sequence[torch.Tensor]], padding: int = 2) -> Image.Image:
    """Row-major tiling of [3,H,W] images in [-1,1] (or [1,H,W] masks in [0,1])."""
    if not rows or not rows[0]:
        raise ValueError("grid needs at least one row and one column")
    columns = len(rows[0])
    if any(len(r) != columns for r in rows):
        raise ValueError("all grid rows must have the same length")
    images = torch.stack([to_unit(image) for row in rows for image in row])
    grid = make_grid(images, nrow=columns, padding=padding, pad_value=1.0)
    return TF.to_pil_image((grid * 255.0).round().to(torch.uint8))


def emit_grid(
    rows: Sequence[Sequence[torch.Tensor]],
    path: Path,
    labels: Sequence[str] | None = None,
    padding: int = 2,
) -> Path:
    """Write the tiled rows as a PNG, with an optional label above each column."""
    body = tile(rows, padding)
    columns = len(rows[0])
    if labels is not None:
        if len(labels) != columns:
            raise ValueError(f"{len(labels)} labels for {columns} columns")
        canvas = Image.new("RGB", (body.width, body.height + LABEL_HEIGHT), "white")
        canvas.paste(body, (0, LABEL_HEIGHT))
        draw = ImageDraw.Draw(canvas)
        font = ImageFont.load_default()
        cell = (body.width - padding) / columns
        for i, label in enumerate(labels):
            draw.text((padding + i * cell, 1), label, fill="black", font=font)
        body = canvas
    path.parent.mkdir(parents=True, exist_ok=True)
    body.save(path, format="PNG")
    logger.info(f"Wrote {len(rows)}x{columns} grid to {path}")
    return path
