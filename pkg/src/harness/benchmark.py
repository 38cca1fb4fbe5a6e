"""
Throughput benchmark: simulation steps per second with N controlled agents.

Controlled agents all target one extra idle dummy; damage is zero and ammo
unlimited so nothing ends the run early.
"""
import logging
import os
import platform
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
import torch

from ..arena.simulator import spawn_episode, step
from ..config.settings import Settings
from .controllers import AgentSpec, IdleController, build_controller

logger = logging.getLogger(__name__)


@dataclass
class BenchResult:
    agent: str
    n_agents: int
    n_steps: int
    rates: List[float] = field(default_factory=list)

    @property
    def mean(self) -> float:
        return float(np.mean(self.rates))

    @property
    def std(self) -> float:
        return float(np.std(self.rates))

    def row(self) -> Dict[str, object]:
        return {
            "agent": self.agent,
            "n_agents": self.n_agents,
            "n_steps": self.n_steps,
            "repeats": len(self.rates),
            "mean_steps_per_s": self.mean,
            "std_steps_per_s": self.std,
            **machine_metadata(),
        }


def machine_metadata() -> Dict[str, object]:
    return {
        "host": platform.node(),
        "platform": platform.platform(),
        "python": platform.python_version(),
        "torch": torch.__version__,
        "cpu_count": os.cpu_count(),
    }


def _bench_world(settings: Settings, n_agents: int, seed: int):
    arena = settings.arena.model_copy(
        update={"n_agents": n_agents + 1, "damage": 0.0, "unlimited_ammo": True, "min_separation": 0.0, "max_separation": None}
    )
    world = spawn_episode(arena, seed)
    dummy = n_agents
    for agent in world.agents[:dummy]:
        agent.target = dummy
    world.agents[dummy].target = 0
    return world


def bench_throughput(
    spec: Optional[AgentSpec],
    n_agents: int,
    n_steps: int,
    repeats: int,
    settings: Optional[Settings] = None,
    seed: int = 0,
) -> BenchResult:
    """Time `n_steps` of stepping per repeat; `spec` None means idle (no-model) agents."""
    settings = settings or Settings()
    label = "no-model" if spec is None or spec.kind == "idle" else spec.describe()
    result = BenchResult(label, n_agents, n_steps)
    for repeat in range(repeats):
        world = _bench_world(settings, n_agents, seed + repeat)
        controllers = [
            IdleController() if spec is None else build_controller(spec, settings) for _ in range(n_agents)
        ]
        dummy = IdleController()
        start = time.perf_counter()
        for _ in range(n_steps):
            actions = {i: controllers[i].act(world, i) for i in range(n_agents)}
            actions[n_agents] = dummy.act(world, n_agents)
            world, _ = step(world, actions)
        elapsed = time.perf_counter() - start
        result.rates.append(n_steps / elapsed)
        logger.info("%s x%d repeat %d: %.1f steps/s", label, n_agents, repeat, result.rates[-1])
    return result


def write_bench_csv(results: List[BenchResult], path) -> None:
    pd.DataFrame([r.row() for r in results]).to_csv(path, index=False)
