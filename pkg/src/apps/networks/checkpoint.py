"""
Checkpoint archives: named parameter tensors + NetworkConfig + step counter.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import torch
from torch import nn

from .config import NetworkConfig
from .model import parameter_checksum

logger = logging.getLogger(__name__)


@dataclass
class Checkpoint:
    network_config: NetworkConfig
    state: dict[str, dict[str, torch.Tensor]]
    step: int
    fingerprint: str
    extra: dict[str, Any] = field(default_factory=dict)

    def load_into(self, **modules: nn.Module) -> None:
        for name, module in modules.items():
            if name not in self.state:
                raise KeyError(f"checkpoint has no state for {name!r}; has {sorted(self.state)}")
            module.load_state_dict(self.state[name])


def save_checkpoint(
    path: Path,
    network_config: NetworkConfig,
    step: int,
    extra: dict[str, Any] | None = None,
    **modules: nn.Module,
) -> str:
    """Write a checkpoint and return its parameter fingerprint."""
    fingerprint = parameter_checksum(*(modules[k] for k in sorted(modules)))
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "network_config": network_config.to_dict(),
            "state": {name: m.state_dict() for name, m in modules.items()},
            "step": step,
            "fingerprint": fingerprint,
            "extra": extra or {},
        },
        path,
    )
    logger.info(f"Wrote checkpoint {path} at step {step} ({fingerprint[:12]})")
    return fingerprint


def load_checkpoint(path: Path, map_location: str | torch.device = "cpu") -> Checkpoint:
    payload = torch.load(path, map_location=map_location, weights_only=True)
    return Checkpoint(
        network_config=NetworkConfig.from_dict(payload["network_config"]),
        state=payload["state"],
        step=int(payload["step"]),
        fingerprint=payload["fingerprint"],
        extra=payload.get("extra", {}),
    )
