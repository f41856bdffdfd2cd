"""
Tests for the command-line entry point and image grids.
"""

import json

import pytest
import torch
from PIL import Image

from main.cli import EXIT_OK, EXIT_PRECONDITION, EXIT_USAGE, build_parser, main
from main.grids import LABEL_HEIGHT, emit_grid, tile


def tiny_args(tiny_flat_config: dict) -> list[str]:
    return [arg for key, value in tiny_flat_config.items() for arg in ("--set", f"{key}={json.dumps(value)}")]


class TestParser:
    """Test argument parsing."""

    def test_options_before_and_after_subcommand(self, tmp_path):
        """Test that run options are accepted on both sides of the subcommand."""
        args = build_parser().parse_args(
            ["--out", str(tmp_path), "--set", "seed=1", "train-base", "--set", "guidance.r=2"]
        )
        assert args.out == tmp_path
        assert args.overrides == ["seed=1"]
        assert args.sub_overrides == ["guidance.r=2"]

    def test_subcommand_out(self, tmp_path):
        """Test that --out after the subcommand is kept."""
        args = build_parser().parse_args(["evaluate", "--out", str(tmp_path)])
        assert args.out == tmp_path


class TestMain:
    """Test exit codes."""

    def test_unknown_command(self):
        """Test that an unknown subcommand is a usage error."""
        assert main(["fly"]) == EXIT_USAGE

    def test_translate_needs_target(self, tmp_path):
        """Test that translate without a target is a usage error."""
        assert main(["--out", str(tmp_path), "translate", "--input", "x.png"]) == EXIT_USAGE

    def test_bad_interpolation(self, tmp_path):
        """Test that an interpolation needs two targets."""
        assert main(["--out", str(tmp_path), "translate", "--input", "x.png", "--interpolate", "blond"]) == EXIT_USAGE

    def test_missing_predecessor(self, tmp_path):
        """Test that fine-tuning without a base checkpoint is a precondition failure."""
        assert main(["--out", str(tmp_path), "train-guided"]) == EXIT_PRECONDITION

    def test_unknown_config_key(self, tmp_path):
        """Test that a misspelt override is a config failure."""
        assert main(["--out", str(tmp_path), "make-toy", "--set", "loss.cylce=1"]) == EXIT_PRECONDITION

    def test_make_toy(self, tmp_path, tiny_flat_config, capsys):
        """Test that make-toy renders the dataset and prints a JSON summary."""
        code = main(["--out", str(tmp_path), "--seed", "2", "make-toy", *tiny_args(tiny_flat_config)])
        assert code == EXIT_OK
        summary = json.loads(capsys.readouterr().out)
        assert summary == {"train": 30, "test": 10, "image_size": 16}
        assert (tmp_path / "toy" / "manifest.json").exists()
        assert json.loads((tmp_path / "config.json").read_text())["seed"] == 2


class TestGrids:
    """Test grid rendering."""

    def test_tile_layout(self):
        """Test the size of a three by six grid of 16px images."""
        rows = [[torch.zeros(3, 16, 16)] * 6 for _ in range(3)]
        image = tile(rows)
        assert image.size == (6 * 18 + 2, 3 * 18 + 2)

    def test_pixel_range(self):
        """Test that -1 maps to black and masks map to white at 1."""
        image = tile([[-torch.ones(3, 4, 4), torch.ones(1, 4, 4)]], padding=0)
        assert image.getpixel((0, 0)) == (0, 0, 0)
        assert image.getpixel((4, 0)) == (255, 255, 255)

    def test_labels(self, tmp_path):
        """Test that labels add a header band."""
        path = emit_grid([[torch.zeros(3, 16, 16)] * 2], tmp_path / "g.png", ["input", "t=0.00"])
        with Image.open(path) as image:
            assert image.size == (2 * 18 + 2, 18 + 2 + LABEL_HEIGHT)

    def test_ragged_rows(self):
        """Test that rows of different lengths are rejected."""
        with pytest.raises(ValueError, match="same length"):
            tile([[torch.zeros(3, 4, 4)], [torch.zeros(3, 4, 4)] * 2])

    def test_label_count(self, tmp_path):
        """Test that one label per column is required."""
        with pytest.raises(ValueError, match="labels"):
            emit_grid([[torch.zeros(3, 4, 4)]], tmp_path / "g.png", ["a", "b"])

    def test_render_is_deterministic(self, tmp_path):
        """Test that the same rows and labels render to identical bytes."""
        generator = torch.Generator().manual_seed(0)
        rows = [[torch.rand(3, 16, 16, generator=generator) * 2 - 1 for _ in range(3)] for _ in range(2)]
        labels = ["input", "blond", "male"]
        first = emit_grid(rows, tmp_path / "a.png", labels)
        second = emit_grid(rows, tmp_path / "b.png", labels)
        assert first.read_bytes() == second.read_bytes()
