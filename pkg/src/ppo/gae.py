import numpy as np

from .rollout import RolloutBatch


def gae_advantages(
    rewards: np.ndarray,
    values: np.ndarray,
    next_values: np.ndarray,
    cut: np.ndarray,
    gamma: float,
    lam: float,
) -> np.ndarray:
    """Backward GAE recursion.

    next_values already holds 0 after a terminal step and the bootstrap value
    after a truncation or a batch end; `cut` stops the recursion at those.
    """
    advantages = np.zeros(len(rewards))
    running = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        delta = rewards[t] + gamma * next_values[t] - values[t]
        running = delta + gamma * lam * (0.0 if cut[t] else running)
        advantages[t] = running
    return advantages


def compute_gae(batch: RolloutBatch, gamma: float, lam: float, normalize: bool = True) -> RolloutBatch:
    """Fill advantages and returns; returns = raw advantages + values."""
    raw = gae_advantages(batch.rewards, batch.values, batch.next_values, batch.cut, gamma, lam)
    batch.returns = raw + batch.values
    if normalize:
        raw = (raw - raw.mean()) / (raw.std() + 1e-8)
    batch.advantages = raw
    return batch
