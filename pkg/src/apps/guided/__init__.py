from .guidance import GuidanceConfig, RetrievalGuide, RetrievalMode
from .trainer import GuidedTrainer, prepare_for_guidance

__all__ = ["GuidanceConfig", "GuidedTrainer", "RetrievalGuide", "RetrievalMode", "prepare_for_guidance"]
