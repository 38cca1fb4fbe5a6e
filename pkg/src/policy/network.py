"""
Policy/value network.

Each observation in the history is encoded by a tanh MLP. With attention on,
a single-head scaled dot-product block lets the newest encoding attend over
the whole (left-padded, masked) window; otherwise the newest encoding is the
feature. Heads map the feature to a 2-d Gaussian mean, an optional shoot
logit and a scalar value; the Gaussian log-std is a free parameter.
"""
import hashlib
import json
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, model_validator
from torch import nn

from ..config.settings import SensorConfig
from ..errors import PolicyShapeError, UnknownSkillError
from ..sensors.encoder import observation_width

LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0


class NetworkSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    input_width: int
    observation: str = "core"
    mlp_depth: int = 2
    mlp_width: int = 128
    attention: bool = True
    attention_dim: int = 60
    max_seq: int = 20
    shoot_head: bool = False
    seed: int = 0

    @model_validator(mode="after")
    def _check(self) -> "NetworkSpec":
        for name in ("input_width", "mlp_depth", "mlp_width", "attention_dim", "max_seq"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        return self

    @property
    def window(self) -> int:
        return self.max_seq if self.attention else 1

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(exclude={"seed"}), sort_keys=True, separators=(",", ":"))

    def spec_hash(self) -> bytes:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).digest()


def spec_for_skill(skill: str, sensors: Optional[SensorConfig] = None, seed: int = 0) -> NetworkSpec:
    """Network shape per skill: Combat is a small MLP, the rest attend over history."""
    sensors = sensors or SensorConfig()
    observation = {
        "combat": "core",
        "flee": "core",
        "advance": "core",
        "hide": "hide",
        "collect": "collect",
        "curriculum": "curriculum",
    }.get(skill)
    if observation is None:
        raise UnknownSkillError(f"No network spec for skill '{skill}'")
    width = observation_width(observation, sensors)
    if skill == "combat":
        return NetworkSpec(
            input_width=width, observation=observation, mlp_width=64, attention=False, shoot_head=True, seed=seed
        )
    return NetworkSpec(input_width=width, observation=observation, shoot_head=skill == "curriculum", seed=seed)


class PolicyNetwork(nn.Module):
    def __init__(self, spec: NetworkSpec):
        super().__init__()
        self.spec = spec
        layers: List[nn.Module] = []
        width = spec.input_width
        for _ in range(spec.mlp_depth):
            layers += [nn.Linear(width, spec.mlp_width), nn.Tanh()]
            width = spec.mlp_width
        self.encoder = nn.Sequential(*layers)
        if spec.attention:
            self.query = nn.Linear(width, spec.attention_dim)
            self.key = nn.Linear(width, spec.attention_dim)
            self.value_proj = nn.Linear(width, spec.attention_dim)
            width = spec.attention_dim
        self.mean_head = nn.Linear(width, 2)
        self.log_std = nn.Parameter(torch.zeros(2))
        self.shoot_head = nn.Linear(width, 1) if spec.shoot_head else None
        self.value_head = nn.Linear(width, 1)
        self._initialize(spec.seed)

    def _initialize(self, seed: int) -> None:
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            for module in self.encoder:
                if isinstance(module, nn.Linear):
                    nn.init.orthogonal_(module.weight, gain=5.0 / 3.0)
                    nn.init.zeros_(module.bias)
            if self.spec.attention:
                for module in (self.query, self.key, self.value_proj):
                    nn.init.orthogonal_(module.weight, gain=1.0)
                    nn.init.zeros_(module.bias)
            heads = [(self.mean_head, 0.01), (self.value_head, 1.0)]
            if self.shoot_head is not None:
                heads.append((self.shoot_head, 0.01))
            for module, gain in heads:
                nn.init.orthogonal_(module.weight, gain=gain)
                nn.init.zeros_(module.bias)

    def features(self, obs: torch.Tensor, mask: torch.Tensor) -> Tuple[torch.Tensor, Optional[torch.Tensor]]:
        """obs (B, T, W) oldest->newest with padding on the left; mask (B, T) marks real rows."""
        encoded = self.encoder(obs)
        if not self.spec.attention:
            return encoded[:, -1], None
        q = self.query(encoded[:, -1])
        k = self.key(encoded)
        v = self.value_proj(encoded)
        logits = torch.einsum("bd,btd->bt", q, k) / math.sqrt(self.spec.attention_dim)
        logits = logits.masked_fill(~mask, float("-inf"))
        weights = torch.softmax(logits, dim=-1)
        return torch.einsum("bt,btd->bd", weights, v), weights

    def forward(self, obs: torch.Tensor, mask: torch.Tensor):
        """Returns (mean, log_std, shoot_logit or None, value)."""
        if obs.dim() != 3 or obs.shape[-1] != self.spec.input_width:
            raise PolicyShapeError(
                f"Expected observations of shape (B, T, {self.spec.input_width}), got {tuple(obs.shape)}"
            )
        if obs.shape[1] == 0 or not bool(mask[:, -1].all()):
            raise PolicyShapeError("Observation history is empty")
        feature, _ = self.features(obs, mask)
        mean = self.mean_head(feature)
        log_std = self.log_std.clamp(LOG_STD_MIN, LOG_STD_MAX).expand_as(mean)
        shoot_logit = self.shoot_head(feature).squeeze(-1) if self.shoot_head is not None else None
        value = self.value_head(feature).squeeze(-1)
        return mean, log_std, shoot_logit, value


def history_tensor(
    histories: Sequence[Sequence[np.ndarray]], window: int, width: int, dtype: torch.dtype = torch.float32
) -> Tuple[torch.Tensor, torch.Tensor]:
    """Stack observation histories into a left-padded (B, window, width) tensor and its mask."""
    batch = len(histories)
    obs = np.zeros((batch, window, width))
    mask = np.zeros((batch, window), dtype=bool)
    for b, history in enumerate(histories):
        recent = list(history)[-window:]
        if not recent:
            raise PolicyShapeError("Observation history is empty")
        rows = np.asarray(recent, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != width:
            raise PolicyShapeError(f"Observation width {rows.shape[-1]} does not match network input {width}")
        obs[b, window - len(rows):] = rows
        mask[b, window - len(rows):] = True
    return torch.as_tensor(obs, dtype=dtype), torch.as_tensor(mask)


def parameter_layout(net: nn.Module) -> List[Tuple[str, Tuple[int, ...]]]:
    return [(name, tuple(p.shape)) for name, p in net.named_parameters()]


def flatten_parameters(net: nn.Module) -> np.ndarray:
    return torch.nn.utils.parameters_to_vector(net.parameters()).detach().cpu().numpy().astype(np.float32)


def assign_parameters(net: nn.Module, vector: np.ndarray) -> None:
    expected = sum(p.numel() for p in net.parameters())
    if vector.size != expected:
        raise PolicyShapeError(f"Parameter vector has {vector.size} entries, network needs {expected}")
    dtype = next(net.parameters()).dtype
    with torch.no_grad():
        torch.nn.utils.vector_to_parameters(torch.as_tensor(vector, dtype=dtype), net.parameters())
