from dataclasses import dataclass
from typing import Optional, Tuple

import torch
import torch.nn.functional as F
from torch.distributions import Normal

from ..arena.world import ActionCommand


@dataclass
class ActionDistribution:
    """Diagonal Gaussian over (lateral, forward) plus an optional Bernoulli shoot bit."""

    mean: torch.Tensor  # (B, 2)
    log_std: torch.Tensor  # (B, 2)
    shoot_logit: Optional[torch.Tensor] = None  # (B,)

    @property
    def std(self) -> torch.Tensor:
        return self.log_std.exp()

    @property
    def shoot_prob(self) -> Optional[torch.Tensor]:
        return None if self.shoot_logit is None else torch.sigmoid(self.shoot_logit)

    def log_prob(self, movement: torch.Tensor, shoot: Optional[torch.Tensor] = None) -> torch.Tensor:
        """Joint log-probability of raw (unclamped) movement and the shoot bit."""
        total = Normal(self.mean, self.std).log_prob(movement).sum(-1)
        if self.shoot_logit is not None and shoot is not None:
            fired = shoot.to(torch.bool)
            # where() rather than a product so an infinite logit never meets 0 * -inf
            total = total + torch.where(fired, F.logsigmoid(self.shoot_logit), F.logsigmoid(-self.shoot_logit))
        return total

    def entropy(self) -> torch.Tensor:
        total = Normal(self.mean, self.std).entropy().sum(-1)
        if self.shoot_logit is not None:
            p = torch.sigmoid(self.shoot_logit)
            total = total - (p * F.logsigmoid(self.shoot_logit) + (1 - p) * F.logsigmoid(-self.shoot_logit))
        return total

    def kl_from(self, old: "ActionDistribution") -> torch.Tensor:
        """KL(old || self), summed over action components."""
        var_ratio = (old.std / self.std) ** 2
        gauss = 0.5 * (var_ratio + ((old.mean - self.mean) / self.std) ** 2 - 1.0 - var_ratio.log())
        total = gauss.sum(-1)
        if self.shoot_logit is not None and old.shoot_logit is not None:
            p = torch.sigmoid(old.shoot_logit)
            total = total + p * (F.logsigmoid(old.shoot_logit) - F.logsigmoid(self.shoot_logit))
            total = total + (1 - p) * (F.logsigmoid(-old.shoot_logit) - F.logsigmoid(-self.shoot_logit))
        return total

    def sample(self, generator: Optional[torch.Generator] = None) -> Tuple[torch.Tensor, Optional[torch.Tensor]]:
        noise = torch.randn(self.mean.shape, generator=generator, dtype=self.mean.dtype)
        movement = self.mean + self.std * noise
        shoot = None
        if self.shoot_logit is not None:
            draw = torch.rand(self.shoot_logit.shape, generator=generator, dtype=self.shoot_logit.dtype)
            shoot = (draw < torch.sigmoid(self.shoot_logit)).to(self.mean.dtype)
        return movement, shoot

    def mode(self) -> Tuple[torch.Tensor, Optional[torch.Tensor]]:
        shoot = None if self.shoot_logit is None else (self.shoot_logit > 0).to(self.mean.dtype)
        return self.mean, shoot

    def detach(self) -> "ActionDistribution":
        return ActionDistribution(
            self.mean.detach(),
            self.log_std.detach(),
            None if self.shoot_logit is None else self.shoot_logit.detach(),
        )


def to_command(movement: torch.Tensor, shoot: Optional[torch.Tensor]) -> ActionCommand:
    """Single-row raw sample to a clamped ActionCommand."""
    lateral, forward = (float(x) for x in movement.reshape(-1)[:2])
    fired = bool(shoot.reshape(-1)[0] > 0.5) if shoot is not None else False
    return ActionCommand(lateral, forward, fired).clamped()


def sample_action(
    dist: ActionDistribution, generator: Optional[torch.Generator] = None, deterministic: bool = False
) -> Tuple[ActionCommand, float]:
    """Draw one action (batch of one); the log-prob is of the pre-clamp sample."""
    movement, shoot = dist.mode() if deterministic else dist.sample(generator)
    log_prob = dist.log_prob(movement, shoot)
    return to_command(movement, shoot), float(log_prob.reshape(-1)[0])
