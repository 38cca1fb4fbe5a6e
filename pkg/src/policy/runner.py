from pathlib import Path
from typing import List, Optional

import numpy as np
import torch

from ..arena.world import ActionCommand, WorldState
from ..config.settings import SensorConfig
from ..sensors.encoder import encode_observation
from .distribution import ActionDistribution, sample_action
from .network import history_tensor
from .serialization import PolicyParams, load_params


class PolicyRunner:
    """Inference wrapper binding a trained network to its observation encoder."""

    def __init__(self, params: PolicyParams, sensors: Optional[SensorConfig] = None, deterministic: bool = True, seed: int = 0):
        self.params = params
        self.spec = params.spec
        self.sensors = sensors or SensorConfig()
        self.network = params.build().eval()
        self.deterministic = deterministic
        self.generator = torch.Generator().manual_seed(seed)

    @classmethod
    def from_file(cls, path: Path, sensors: Optional[SensorConfig] = None, **kwargs) -> "PolicyRunner":
        return cls(load_params(path), sensors, **kwargs)

    @property
    def max_seq(self) -> int:
        return self.spec.window

    def observe(self, world: WorldState, agent_id: int) -> np.ndarray:
        return encode_observation(world, agent_id, self.spec.observation, self.sensors)

    def distribution(self, history: List[np.ndarray]) -> ActionDistribution:
        obs, mask = history_tensor([history], self.spec.window, self.spec.input_width)
        with torch.no_grad():
            mean, log_std, shoot_logit, _ = self.network(obs, mask)
        return ActionDistribution(mean, log_std, shoot_logit)

    def act(self, history: List[np.ndarray]) -> ActionCommand:
        action, _ = sample_action(self.distribution(history), self.generator, self.deterministic)
        return action
