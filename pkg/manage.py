#!/usr/bin/env python
"""Run a pipeline stage from the repository root: ./manage.py --out runs/toy train-base"""
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent / "src"))

from main.cli import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
