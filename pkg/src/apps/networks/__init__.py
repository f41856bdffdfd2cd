from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import PRESETS, NetworkConfig, preset
from .discriminator import Discriminator, DiscriminatorOutput
from .embedder import RetrievalEmbedder
from .encoders import ContentEncoder, StyleEncoder
from .fusion import ContentFusion
from .generator import Generator, GeneratorOutput
from .model import TranslationModel, parameter_checksum

__all__ = [
    "PRESETS",
    "Checkpoint",
    "ContentEncoder",
    "ContentFusion",
    "Discriminator",
    "DiscriminatorOutput",
    "Generator",
    "GeneratorOutput",
    "NetworkConfig",
    "RetrievalEmbedder",
    "StyleEncoder",
    "TranslationModel",
    "load_checkpoint",
    "parameter_checksum",
    "preset",
    "save_checkpoint",
]
