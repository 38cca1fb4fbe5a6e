"""
Builders shared by the test modules.
"""
from typing import Optional, Sequence, Tuple

import numpy as np

from src.arena.geometry import Vec2
from src.arena.world import AgentState, AmmoStation, Obstacle, WorldState
from src.config.settings import ArenaConfig


def build_world(
    positions: Sequence[Tuple[float, float]],
    obstacles: Sequence[Tuple[float, float, float, float]] = (),
    stations: Sequence[Tuple[float, float]] = (),
    facings: Optional[Sequence[Tuple[float, float]]] = None,
    targets: Optional[Sequence[Optional[int]]] = None,
    **arena,
) -> WorldState:
    """Hand-placed world: agent i targets i + 1 (mod n) and faces east unless told otherwise."""
    n = len(positions)
    config = ArenaConfig(obstacles=list(obstacles), ammo_stations=list(stations), n_agents=n, **arena)
    if targets is None:
        targets = [None] if n == 1 else [(i + 1) % n for i in range(n)]
    agents = []
    for i, p in enumerate(positions):
        facing = Vec2(*facings[i]) if facings is not None else Vec2(1.0, 0.0)
        agents.append(
            AgentState(
                id=i,
                position=Vec2(*p),
                facing=facing,
                health=config.max_health,
                ammo=config.start_ammo,
                speed=config.move_speed,
                team=i,
                target=targets[i],
                unlimited_ammo=config.unlimited_ammo,
                health_history=(config.max_health,),
            )
        )
    return WorldState(
        config=config,
        seed=0,
        step=0,
        agents=agents,
        projectiles=[],
        obstacles=tuple(Obstacle(*o) for o in obstacles),
        ammo_stations=[AmmoStation(Vec2(*s)) for s in stations],
        rng=np.random.default_rng(0),
    )


class CountingEnv:
    """Tiny stand-in environment for rollout tests.

    Observations are 4 values derived from the step counter; reward is 1 per
    step. Episodes terminate after `terminate_at` steps or truncate after
    `truncate_at`, whichever comes first.
    """

    def __init__(self, terminate_at: int = 5, truncate_at: int = 1000, width: int = 4):
        self.terminate_at = terminate_at
        self.truncate_at = truncate_at
        self.width = width
        self.t = 0
        self.rng = np.random.default_rng(0)

    def _obs(self) -> np.ndarray:
        base = np.linspace(-0.5, 0.5, self.width)
        return np.clip(base + 0.1 * self.t + 0.01 * self.rng.standard_normal(self.width), -1.0, 1.0)

    def reset(self, *, seed: Optional[int] = None, options=None):
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.t = 0
        return self._obs(), {}

    def step(self, action):
        self.t += 1
        reward = 1.0 + 0.1 * float(action.forward)
        terminated = self.t >= self.terminate_at
        truncated = not terminated and self.t >= self.truncate_at
        return self._obs(), reward, terminated, truncated, {}


def counting_env_factory(seed: int) -> CountingEnv:
    env = CountingEnv()
    env.reset(seed=seed)
    return env
