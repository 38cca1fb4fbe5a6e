"""
World state containers.

Every container here is plain data; `simulator.step` clones a world before
mutating it so callers can keep the previous snapshot.
"""
import copy
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..config.settings import ArenaConfig
from .geometry import Vec2


@dataclass(frozen=True)
class Obstacle:
    x0: float
    y0: float
    x1: float
    y1: float

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.x0, self.y0, self.x1, self.y1)

    def contains(self, p: Vec2) -> bool:
        return self.x0 < p.x < self.x1 and self.y0 < p.y < self.y1


@dataclass
class AmmoStation:
    position: Vec2
    respawn_timer: int = 0

    @property
    def available(self) -> bool:
        return self.respawn_timer == 0


@dataclass
class Projectile:
    position: Vec2
    velocity: Vec2
    owner: int


@dataclass
class AgentState:
    id: int
    position: Vec2
    facing: Vec2
    health: float
    ammo: int
    speed: float
    team: int
    target: Optional[int] = None
    cooldown: int = 0
    damage_dealt: float = 0.0
    unlimited_ammo: bool = False
    health_history: Tuple[float, ...] = ()

    @property
    def alive(self) -> bool:
        return self.health > 0.0

    @property
    def health_history_min(self) -> float:
        return min(self.health_history) if self.health_history else self.health

    def window_min(self, window: int) -> float:
        """Minimum health over the trailing `window` steps, current step included."""
        recent = self.health_history[-window:] if window > 0 else ()
        return min(recent) if recent else self.health


@dataclass(frozen=True)
class ActionCommand:
    lateral: float = 0.0
    forward: float = 0.0
    shoot: bool = False

    def is_finite(self) -> bool:
        return math.isfinite(self.lateral) and math.isfinite(self.forward)

    def clamped(self) -> "ActionCommand":
        return ActionCommand(
            lateral=min(1.0, max(-1.0, self.lateral)),
            forward=min(1.0, max(-1.0, self.forward)),
            shoot=bool(self.shoot),
        )


NOOP = ActionCommand()


@dataclass
class AgentEvents:
    wall_collisions: int = 0
    shots_fired: int = 0
    hits_landed: List[int] = field(default_factory=list)
    hits_taken: List[int] = field(default_factory=list)
    kills: List[int] = field(default_factory=list)
    ammo_pickups: List[int] = field(default_factory=list)


@dataclass
class StepEvents:
    agents: Dict[int, AgentEvents]
    distance_to_opponent: Dict[int, float] = field(default_factory=dict)
    in_sight: Dict[Tuple[int, int], bool] = field(default_factory=dict)
    deaths: List[int] = field(default_factory=list)

    def of(self, agent_id: int) -> AgentEvents:
        return self.agents[agent_id]


@dataclass
class WorldState:
    config: ArenaConfig
    seed: int
    step: int
    agents: List[AgentState]
    projectiles: List[Projectile]
    obstacles: Tuple[Obstacle, ...]
    ammo_stations: List[AmmoStation]
    rng: np.random.Generator
    _rects: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    @property
    def arena_side(self) -> float:
        return self.config.arena_side

    @property
    def rects(self) -> np.ndarray:
        """Obstacles as an (M, 4) array, cached; obstacles never change in an episode."""
        if self._rects is None:
            self._rects = np.array([o.as_tuple() for o in self.obstacles], dtype=float).reshape(-1, 4)
        return self._rects

    def agent(self, agent_id: int) -> AgentState:
        return self.agents[agent_id]

    def target_of(self, agent_id: int) -> Optional[AgentState]:
        target = self.agents[agent_id].target
        return None if target is None else self.agents[target]

    def live_agents(self) -> List[AgentState]:
        return [a for a in self.agents if a.alive]

    def available_stations(self) -> List[Tuple[int, AmmoStation]]:
        return [(i, s) for i, s in enumerate(self.ammo_stations) if s.available]

    def clone(self) -> "WorldState":
        return WorldState(
            config=self.config,
            seed=self.seed,
            step=self.step,
            agents=[copy.copy(a) for a in self.agents],
            projectiles=[copy.copy(p) for p in self.projectiles],
            obstacles=self.obstacles,
            ammo_stations=[copy.copy(s) for s in self.ammo_stations],
            rng=copy.deepcopy(self.rng),
            _rects=self._rects,
        )
