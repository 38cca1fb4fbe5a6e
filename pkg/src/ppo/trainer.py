"""
PPO updates and the skill training loop.
"""
import json
import logging
from functools import partial
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import torch
from torch import nn

from ..config.settings import PpoConfig, Settings, config_hash
from ..errors import NonFiniteLossError
from ..policy.distribution import ActionDistribution
from ..policy.network import NetworkSpec, PolicyNetwork, history_tensor, spec_for_skill
from ..policy.serialization import PolicyParams, save_params
from ..sensors.schema import write_schema
from ..skills.environments import make_skill_env
from .gae import compute_gae
from .rollout import RolloutBatch, RolloutWorker

logger = logging.getLogger(__name__)


def _dtype(config: PpoConfig) -> torch.dtype:
    return torch.float64 if config.dtype == "float64" else torch.float32


class PpoLearner:
    """Clipped-surrogate updates with an adaptive KL penalty."""

    def __init__(self, network: PolicyNetwork, config: PpoConfig, generator: torch.Generator):
        self.network = network
        self.config = config
        self.generator = generator
        self.kl_coeff = config.kl_coeff
        params = list(network.parameters())
        if config.optimizer == "sgd":
            self.optimizer = torch.optim.SGD(params, lr=config.learning_rate)
        else:
            self.optimizer = torch.optim.Adam(params, lr=config.learning_rate)

    def _batch_tensors(self, batch: RolloutBatch) -> Dict[str, torch.Tensor]:
        dtype = next(self.network.parameters()).dtype
        spec = self.network.spec
        obs, mask = history_tensor(batch.windows(spec.window), spec.window, spec.input_width, dtype)
        t = {
            "obs": obs,
            "mask": mask,
            "movement": torch.as_tensor(batch.movement, dtype=dtype),
            "shoot": torch.as_tensor(batch.shoot, dtype=dtype),
            "old_log_probs": torch.as_tensor(batch.log_probs, dtype=dtype),
            "advantages": torch.as_tensor(batch.advantages, dtype=dtype),
            "returns": torch.as_tensor(batch.returns, dtype=dtype),
            "old_mean": torch.as_tensor(batch.old_mean, dtype=dtype),
            "old_log_std": torch.as_tensor(batch.old_log_std, dtype=dtype),
        }
        if batch.old_shoot_logit is not None:
            t["old_shoot_logit"] = torch.as_tensor(batch.old_shoot_logit, dtype=dtype)
        return t

    def loss(self, t: Dict[str, torch.Tensor], idx: torch.Tensor) -> Tuple[torch.Tensor, Dict[str, torch.Tensor]]:
        cfg = self.config
        mean, log_std, shoot_logit, value = self.network(t["obs"][idx], t["mask"][idx])
        dist = ActionDistribution(mean, log_std, shoot_logit)
        old = ActionDistribution(
            t["old_mean"][idx], t["old_log_std"][idx], t["old_shoot_logit"][idx] if "old_shoot_logit" in t else None
        )
        log_prob = dist.log_prob(t["movement"][idx], t["shoot"][idx])
        ratio = torch.exp(log_prob - t["old_log_probs"][idx])
        adv = t["advantages"][idx]
        surrogate = torch.min(ratio * adv, torch.clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip) * adv)
        policy_loss = -surrogate.mean()
        value_loss = torch.clamp((value - t["returns"][idx]) ** 2, 0.0, cfg.vf_clip).mean()
        kl = dist.kl_from(old).mean()
        entropy = dist.entropy().mean()
        total = policy_loss + cfg.vf_coeff * value_loss + self.kl_coeff * kl - cfg.entropy_coeff * entropy
        parts = {
            "policy_loss": policy_loss.detach(),
            "value_loss": value_loss.detach(),
            "kl": kl.detach(),
            "entropy": entropy.detach(),
            "clip_fraction": ((ratio.detach() - 1.0).abs() > cfg.clip).to(ratio.dtype).mean(),
        }
        return total, parts

    def update(self, batch: RolloutBatch) -> Dict[str, float]:
        cfg = self.config
        t = self._batch_tensors(batch)
        n = len(batch)
        sums: Dict[str, float] = {}
        first_clip = None
        last_epoch_kl: List[float] = []
        grad_norm = 0.0
        for epoch in range(cfg.epochs):
            perm = torch.randperm(n, generator=self.generator)
            last_epoch_kl = []
            for mb, start in enumerate(range(0, n, cfg.minibatch)):
                idx = perm[start:start + cfg.minibatch]
                total, parts = self.loss(t, idx)
                if not torch.isfinite(total):
                    diagnostics = {k: float(v) for k, v in parts.items()}
                    diagnostics.update(epoch=epoch, minibatch=mb, kl_coeff=self.kl_coeff)
                    raise NonFiniteLossError(f"Non-finite PPO loss at epoch {epoch}, minibatch {mb}", diagnostics)
                self.optimizer.zero_grad()
                total.backward()
                grad_norm = float(nn.utils.clip_grad_norm_(self.network.parameters(), cfg.grad_clip))
                self.optimizer.step()
                if first_clip is None:
                    first_clip = float(parts["clip_fraction"])
                for k, v in parts.items():
                    sums[k] = sums.get(k, 0.0) + float(v)
                sums["updates"] = sums.get("updates", 0.0) + 1.0
                last_epoch_kl.append(float(parts["kl"]))

        updates = sums.pop("updates", 1.0)
        stats = {k: v / updates for k, v in sums.items()}
        sampled_kl = float(np.mean(last_epoch_kl)) if last_epoch_kl else 0.0
        if sampled_kl > 2.0 * cfg.kl_target:
            self.kl_coeff *= cfg.kl_increase
        elif sampled_kl < 0.5 * cfg.kl_target:
            self.kl_coeff *= cfg.kl_decrease
        stats.update(
            first_clip_fraction=first_clip if first_clip is not None else 0.0,
            sampled_kl=sampled_kl,
            kl_coeff=self.kl_coeff,
            grad_norm=grad_norm,
        )
        return stats


def ppo_update(
    params: PolicyParams,
    batch: RolloutBatch,
    config: PpoConfig,
    generator: Optional[torch.Generator] = None,
    kl_coeff: Optional[float] = None,
) -> Tuple[PolicyParams, Dict[str, float]]:
    """Functional form: returns new parameters, leaves `params` untouched."""
    network = params.build().to(_dtype(config))
    learner = PpoLearner(network, config, generator or torch.Generator().manual_seed(0))
    if kl_coeff is not None:
        learner.kl_coeff = kl_coeff
    stats = learner.update(batch)
    return PolicyParams.from_network(network), stats


def _summarize(batch: RolloutBatch) -> Dict[str, Any]:
    episodes = batch.episodes
    if not episodes:
        return {"episodes": 0, "reward_mean": None, "length_mean": None, "terminal_rate": None}
    return {
        "episodes": len(episodes),
        "reward_mean": float(np.mean([e.total_reward for e in episodes])),
        "length_mean": float(np.mean([e.length for e in episodes])),
        "terminal_rate": float(np.mean([e.terminated for e in episodes])),
    }


class PPOTrainer:
    """Collect -> GAE -> update loop with checkpoints and a JSON-lines metric stream."""

    def __init__(
        self,
        env_factory: Callable[[int], Any],
        spec: NetworkSpec,
        config: PpoConfig,
        seed: int,
        total_steps: int,
        out_dir: Optional[Path] = None,
        label: str = "policy",
        initial: Optional[PolicyParams] = None,
        metadata: Optional[Dict[str, Any]] = None,
    ):
        torch.set_num_threads(config.num_threads)
        self.spec = spec
        self.config = config
        self.seed = seed
        self.total_steps = total_steps
        self.label = label
        self.metadata = dict(metadata or {})
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.network = (initial.build() if initial is not None else PolicyNetwork(spec)).to(_dtype(config))
        self.generator = torch.Generator().manual_seed(seed)
        envs = [env_factory(seed * 1000 + i) for i in range(config.n_envs)]
        self.worker = RolloutWorker(envs, spec.window, seed * 1000)
        self.learner = PpoLearner(self.network, config, self.generator)
        self.steps_done = 0
        self.iteration = 0
        self.metrics: List[Dict[str, Any]] = []

    @property
    def metrics_path(self) -> Optional[Path]:
        return None if self.out_dir is None else self.out_dir / "metrics.jsonl"

    def params(self) -> PolicyParams:
        return PolicyParams.from_network(self.network)

    def train_batch(self) -> Dict[str, Any]:
        batch = self.worker.collect(self.network, self.config.steps_per_env, self.generator)
        compute_gae(batch, self.config.gamma, self.config.gae_lambda)
        stats = self.learner.update(batch)
        self.steps_done += len(batch)
        self.iteration += 1
        record = {"label": self.label, "iteration": self.iteration, "steps": self.steps_done, **_summarize(batch)}
        record.update(stats)
        self.metrics.append(record)
        self._append_metric(record)
        logger.info(
            "%s iter %d steps %d reward_mean %s length_mean %s kl %.5f",
            self.label,
            self.iteration,
            self.steps_done,
            record["reward_mean"],
            record["length_mean"],
            record["sampled_kl"],
        )
        return record

    def _append_metric(self, record: Dict[str, Any]) -> None:
        if self.metrics_path is None:
            return
        self.metrics_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.metrics_path, "a", encoding="utf-8") as f:
            f.write(json.dumps(record) + "\n")

    def train(self) -> PolicyParams:
        if self.iteration == 0 and self.metrics_path is not None and self.metrics_path.exists():
            self.metrics_path.unlink()
        while self.steps_done < self.total_steps:
            self.train_batch()
            if self.out_dir is not None and self.iteration % self.config.checkpoint_every == 0:
                self.save_checkpoint()
        params = self.params()
        if self.out_dir is not None:
            self.save_checkpoint()
            save_params(params, self.out_dir / f"{self.label}.sbrl", self._sidecar())
        return params

    def _sidecar(self) -> Dict[str, Any]:
        return {**self.metadata, "label": self.label, "training_steps": self.steps_done, "seed": self.seed}

    def save_checkpoint(self) -> Path:
        directory = self.out_dir / "checkpoints"
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / f"iter_{self.iteration:05d}.pt"
        save_params(self.params(), path.with_suffix(".sbrl"), self._sidecar())
        torch.save(
            {
                "spec": self.spec.model_dump(),
                "config": self.config.model_dump(),
                "seed": self.seed,
                "total_steps": self.total_steps,
                "label": self.label,
                "metadata": self.metadata,
                "network": self.network.state_dict(),
                "optimizer": self.learner.optimizer.state_dict(),
                "kl_coeff": self.learner.kl_coeff,
                "generator": self.generator.get_state(),
                "worker": self.worker,
                "steps_done": self.steps_done,
                "iteration": self.iteration,
                "metrics": self.metrics,
            },
            path,
        )
        logger.debug("checkpoint written to %s", path)
        return path

    @classmethod
    def from_checkpoint(cls, path: Path, out_dir: Optional[Path] = None, total_steps: Optional[int] = None) -> "PPOTrainer":
        """Rebuild a trainer so the continued run matches an uninterrupted one."""
        state = torch.load(path, weights_only=False)
        config = PpoConfig.model_validate(state["config"])
        torch.set_num_threads(config.num_threads)
        trainer = cls.__new__(cls)
        trainer.spec = NetworkSpec.model_validate(state["spec"])
        trainer.config = config
        trainer.seed = state["seed"]
        trainer.total_steps = total_steps if total_steps is not None else state["total_steps"]
        trainer.label = state["label"]
        trainer.metadata = state["metadata"]
        trainer.out_dir = Path(out_dir) if out_dir is not None else Path(path).parent.parent
        trainer.network = PolicyNetwork(trainer.spec).to(_dtype(config))
        trainer.network.load_state_dict(state["network"])
        trainer.generator = torch.Generator()
        trainer.generator.set_state(state["generator"])
        trainer.worker = state["worker"]
        trainer.learner = PpoLearner(trainer.network, config, trainer.generator)
        trainer.learner.optimizer.load_state_dict(state["optimizer"])
        trainer.learner.kl_coeff = state["kl_coeff"]
        trainer.steps_done = state["steps_done"]
        trainer.iteration = state["iteration"]
        trainer.metrics = list(state["metrics"])
        if trainer.metrics_path is not None:
            trainer.metrics_path.parent.mkdir(parents=True, exist_ok=True)
            with open(trainer.metrics_path, "w", encoding="utf-8") as f:
                for record in trainer.metrics:
                    f.write(json.dumps(record) + "\n")
        return trainer


def train_skill(
    skill: str,
    settings: Settings,
    seed: int,
    out_dir: Optional[Path],
    total_steps: Optional[int] = None,
) -> Tuple[PolicyParams, Optional[Path]]:
    """Train one skill policy; returns the parameters and the metrics file."""
    env_config = settings.skill(skill)
    steps = total_steps if total_steps is not None else env_config.total_steps
    spec = spec_for_skill(skill, settings.sensors, seed=seed)
    factory = partial(make_skill_env, env_config, settings=settings)
    trainer = PPOTrainer(
        factory,
        spec,
        settings.ppo,
        seed,
        steps,
        out_dir,
        label=skill,
        metadata={"skill": skill, "config_hash": config_hash(settings)},
    )
    if out_dir is not None:
        write_schema(Path(out_dir) / f"{skill}.schema.toml", spec.observation, settings.sensors)
    logger.info("training %s for %d steps (%d envs, batch %d)", skill, steps, settings.ppo.n_envs, settings.ppo.train_batch)
    return trainer.train(), trainer.metrics_path
