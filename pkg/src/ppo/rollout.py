"""
Rollout collection.

Environments step in lock-step so one batched forward pass serves all of
them. Records are stored env-major: all steps of env 0, then env 1, and so
on. Attention windows are replayed from stored observation rows, so each
env segment also keeps up to `window - 1` rows of context from before the
batch started.
"""
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, List, Optional, Sequence

import numpy as np
import torch

from ..policy.distribution import ActionDistribution, to_command
from ..policy.network import PolicyNetwork, history_tensor

logger = logging.getLogger(__name__)


@dataclass
class EpisodeStat:
    env_index: int
    episode_id: int
    length: int
    total_reward: float
    terminated: bool


@dataclass
class RolloutBatch:
    obs: np.ndarray  # (rows, W) observation rows, context included
    obs_index: np.ndarray  # (T,) row of the observation each action was taken on
    window_start: np.ndarray  # (T,) first row belonging to the same episode
    movement: np.ndarray  # (T, 2) raw pre-clamp samples
    shoot: np.ndarray  # (T,)
    log_probs: np.ndarray
    values: np.ndarray
    rewards: np.ndarray
    terminated: np.ndarray
    truncated: np.ndarray
    cut: np.ndarray  # advantage recursion stops after this record
    next_values: np.ndarray
    episode_ids: np.ndarray
    old_mean: np.ndarray
    old_log_std: np.ndarray
    old_shoot_logit: Optional[np.ndarray]
    episodes: List[EpisodeStat] = field(default_factory=list)
    advantages: Optional[np.ndarray] = None
    returns: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.rewards)

    @property
    def dones(self) -> np.ndarray:
        return self.terminated | self.truncated

    def windows(self, window: int) -> List[np.ndarray]:
        """Observation history (oldest first) behind every record."""
        out = []
        for idx, start in zip(self.obs_index, self.window_start):
            lo = max(int(start), int(idx) - window + 1)
            out.append(self.obs[lo:int(idx) + 1])
        return out


class _EnvSlot:
    def __init__(self, env, window: int, seed: int):
        self.env = env
        obs, _ = env.reset(seed=seed)
        self.history: Deque[np.ndarray] = deque([obs], maxlen=window)
        self.episode_id = 0
        self.length = 0
        self.total_reward = 0.0


class RolloutWorker:
    """Owns N environments and their in-progress episodes across batches."""

    def __init__(self, envs: Sequence, window: int, seed: int):
        self.window = window
        self.slots = [_EnvSlot(env, window, seed + i) for i, env in enumerate(envs)]

    @property
    def n_envs(self) -> int:
        return len(self.slots)

    def _forward(self, network: PolicyNetwork, histories: List[Sequence[np.ndarray]]):
        dtype = next(network.parameters()).dtype
        obs, mask = history_tensor(histories, self.window, network.spec.input_width, dtype)
        with torch.no_grad():
            return network(obs, mask)

    def collect(self, network: PolicyNetwork, n_steps: int, generator: torch.Generator) -> RolloutBatch:
        n = self.n_envs
        rows: List[List[np.ndarray]] = [list(slot.history) for slot in self.slots]
        ep_start = [0] * n
        per_env = [dict(idx=[], start=[], mv=[], sh=[], lp=[], v=[], r=[], term=[], trunc=[], nv=[], ep=[],
                        mean=[], lstd=[], logit=[]) for _ in range(n)]
        episodes: List[EpisodeStat] = []
        has_shoot = network.spec.shoot_head

        for _ in range(n_steps):
            mean, log_std, shoot_logit, value = self._forward(network, [s.history for s in self.slots])
            dist = ActionDistribution(mean, log_std, shoot_logit)
            movement, shoot = dist.sample(generator)
            log_prob = dist.log_prob(movement, shoot)
            for i, slot in enumerate(self.slots):
                rec = per_env[i]
                rec["idx"].append(len(rows[i]) - 1)
                rec["start"].append(ep_start[i])
                rec["mv"].append(movement[i].numpy())
                rec["sh"].append(float(shoot[i]) if shoot is not None else 0.0)
                rec["lp"].append(float(log_prob[i]))
                rec["v"].append(float(value[i]))
                rec["ep"].append(slot.episode_id)
                rec["mean"].append(mean[i].numpy())
                rec["lstd"].append(log_std[i].numpy())
                rec["logit"].append(float(shoot_logit[i]) if has_shoot else 0.0)

                command = to_command(movement[i], shoot[i] if shoot is not None else None)
                obs, reward, terminated, truncated, _ = slot.env.step(command)
                slot.length += 1
                slot.total_reward += reward
                rec["r"].append(float(reward))
                rec["term"].append(bool(terminated))
                rec["trunc"].append(bool(truncated))
                rec["nv"].append(None)

                if terminated or truncated:
                    if truncated and not terminated:
                        final = list(slot.history) + [obs]
                        rec["nv"][-1] = float(self._forward(network, [final])[3][0])
                    else:
                        rec["nv"][-1] = 0.0
                    episodes.append(EpisodeStat(i, slot.episode_id, slot.length, slot.total_reward, bool(terminated)))
                    obs, _ = slot.env.reset()
                    slot.history.clear()
                    slot.episode_id += 1
                    slot.length = 0
                    slot.total_reward = 0.0
                    ep_start[i] = len(rows[i])
                slot.history.append(obs)
                rows[i].append(obs)

        tail_values = self._forward(network, [s.history for s in self.slots])[3]
        return self._assemble(rows, per_env, tail_values, episodes, has_shoot)

    def _assemble(self, rows, per_env, tail_values, episodes, has_shoot) -> RolloutBatch:
        obs_blocks, columns = [], {k: [] for k in per_env[0]}
        cut, offset = [], 0
        for i, rec in enumerate(per_env):
            steps = len(rec["r"])
            for t in range(steps):
                if rec["nv"][t] is None:
                    rec["nv"][t] = rec["v"][t + 1] if t + 1 < steps else float(tail_values[i])
            for key in ("idx", "start"):
                rec[key] = [x + offset for x in rec[key]]
            for key, values in rec.items():
                columns[key].extend(values)
            cut.extend(rec["term"][t] or rec["trunc"][t] or t == steps - 1 for t in range(steps))
            obs_blocks.append(np.asarray(rows[i], dtype=float))
            offset += len(rows[i])
        return RolloutBatch(
            obs=np.concatenate(obs_blocks),
            obs_index=np.asarray(columns["idx"], dtype=np.int64),
            window_start=np.asarray(columns["start"], dtype=np.int64),
            movement=np.asarray(columns["mv"], dtype=float).reshape(-1, 2),
            shoot=np.asarray(columns["sh"], dtype=float),
            log_probs=np.asarray(columns["lp"], dtype=float),
            values=np.asarray(columns["v"], dtype=float),
            rewards=np.asarray(columns["r"], dtype=float),
            terminated=np.asarray(columns["term"], dtype=bool),
            truncated=np.asarray(columns["trunc"], dtype=bool),
            cut=np.asarray(cut, dtype=bool),
            next_values=np.asarray(columns["nv"], dtype=float),
            episode_ids=np.asarray(columns["ep"], dtype=np.int64),
            old_mean=np.asarray(columns["mean"], dtype=float).reshape(-1, 2),
            old_log_std=np.asarray(columns["lstd"], dtype=float).reshape(-1, 2),
            old_shoot_logit=np.asarray(columns["logit"], dtype=float) if has_shoot else None,
            episodes=episodes,
        )


def collect_rollouts(
    envs: Sequence, network: PolicyNetwork, n_steps: int, seed: int = 0, generator: Optional[torch.Generator] = None
) -> RolloutBatch:
    """One-shot collection of n_steps from each env (fresh episodes, seeded)."""
    worker = RolloutWorker(envs, network.spec.window, seed)
    generator = generator or torch.Generator().manual_seed(seed)
    return worker.collect(network, n_steps, generator)
