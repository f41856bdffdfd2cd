"""
Exception hierarchy shared by every stage of the pipeline.
"""

from collections.abc import Sequence


class RGUnitError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(RGUnitError):
    """Invalid experiment configuration; `path` is the dotted key at fault."""

    def __init__(self, path: str, message: str) -> None:
        self.path = path
        super().__init__(f"{path}: {message}")


class DatasetError(RGUnitError):
    """Base class for data ingestion problems."""


class AttributeFileError(DatasetError):
    """Malformed attribute table."""

    def __init__(self, column: str, message: str) -> None:
        self.column = column
        super().__init__(f"column {column!r}: {message}")


class MissingImagesError(DatasetError):
    """Rows of the attribute table reference images that do not exist."""

    def __init__(self, filenames: Sequence[str]) -> None:
        self.filenames = list(filenames)
        shown = ", ".join(self.filenames[:10])
        more = f" (+{len(self.filenames) - 10} more)" if len(self.filenames) > 10 else ""
        super().__init__(f"missing image files: {shown}{more}")


class ImageDecodeError(DatasetError):
    """Raw bytes could not be decoded as an image."""


class ImageTooSmallError(DatasetError):
    """Image is smaller than the requested crop."""


class ShapeError(RGUnitError, ValueError):
    """Tensor shapes violate a network or metric contract."""


class PreconditionError(RGUnitError):
    """A stage was started without the artifacts of its predecessor."""

    def __init__(self, message: str, required_stage: str | None = None) -> None:
        self.required_stage = required_stage
        super().__init__(message)


class FingerprintMismatchError(PreconditionError):
    """Two artifacts that must come from the same checkpoint disagree."""


class EncodersNotFrozenError(RGUnitError):
    """Stage-3 fine-tuning found trainable encoder parameters."""


class NonFiniteLossError(RGUnitError):
    """A loss term became NaN or infinite."""

    def __init__(self, term: str, value: float) -> None:
        self.term = term
        self.value = value
        super().__init__(f"non-finite loss term {term!r}: {value}")
