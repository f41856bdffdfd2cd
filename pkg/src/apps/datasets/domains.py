"""
Translation target sampling.
"""

import numpy as np

from apps.core.models import AttributeVector, valid_domains


def sample_target_attrs(source: AttributeVector | None, rng: np.random.Generator) -> AttributeVector:
    """Uniformly pick a valid domain that differs from `source` in at least one bit."""
    candidates = [d for d in valid_domains() if d != source]
    return candidates[int(rng.integers(len(candidates)))]
