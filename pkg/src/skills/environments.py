"""
Skill-training environments.

Agent 0 is the learner; agent 1 is the scripted player (pursuer, target or
shooter) driven by a behavior tree, or idle when no tree is configured.
"""
import logging
from typing import Any, Dict, Optional, Sequence, Union

import gymnasium as gym
import numpy as np
from gymnasium import spaces

from ..arena.simulator import spawn_episode, step
from ..arena.world import NOOP, ActionCommand, WorldState
from ..btree.controller import TreeController
from ..config.settings import (
    BTConfig,
    CurriculumPhaseConfig,
    PhaseRewardSpec,
    SensorConfig,
    Settings,
    SkillEnvConfig,
)
from ..errors import UnknownSkillError
from ..sensors.encoder import encode_observation, observation_width
from .rewards import Transition, phase_reward, skill_reward

logger = logging.getLogger(__name__)

LEARNER, PLAYER = 0, 1
SKILL_IDS = ("flee", "advance", "combat", "hide", "collect")


class SkillEnv(gym.Env):
    """Gymnasium environment wrapping one arena episode per reset."""

    metadata = {"render_modes": []}

    def __init__(
        self,
        config: SkillEnvConfig,
        sensors: Optional[SensorConfig] = None,
        btree: Optional[BTConfig] = None,
        phase: Optional[PhaseRewardSpec] = None,
        step_cap: Optional[int] = None,
    ):
        if phase is None and config.skill not in SKILL_IDS:
            raise UnknownSkillError(f"Unknown skill '{config.skill}'. Expected one of {', '.join(SKILL_IDS)}")
        self.config = config
        self.sensors = sensors or SensorConfig()
        self.btree = btree or BTConfig()
        self.phase = phase
        self.max_episode_steps = min(config.max_episode_steps, step_cap or config.max_episode_steps)
        self.arena = config.arena.model_copy(update={"n_agents": 2})
        width = observation_width(config.observation, self.sensors)
        self.observation_space = spaces.Box(low=-1.0, high=1.0, shape=(width,), dtype=np.float64)
        self.action_space = spaces.Box(
            low=np.array([-1.0, -1.0, 0.0]), high=np.array([1.0, 1.0, 1.0]), dtype=np.float64
        )
        self.world: Optional[WorldState] = None
        self.opponent: Optional[TreeController] = None
        if config.opponent.tree is not None:
            self.opponent = TreeController.from_text(
                config.opponent.tree, config=self.btree, fire_on_sight=config.opponent.fire_on_sight
            )
        self.episode_return = 0.0

    def _spawn(self, episode_seed: int) -> WorldState:
        world = spawn_episode(self.arena, episode_seed)
        learner, player = world.agents[LEARNER], world.agents[PLAYER]
        if self.config.agent_speed is not None:
            learner.speed = self.config.agent_speed
        if self.config.agent_start_ammo is not None:
            learner.ammo = self.config.agent_start_ammo
        learner.unlimited_ammo = self.config.agent_unlimited_ammo
        player.speed = self.config.opponent.speed
        player.unlimited_ammo = self.config.opponent.unlimited_ammo
        return world

    def observe(self) -> np.ndarray:
        return encode_observation(self.world, LEARNER, self.config.observation, self.sensors)

    def reset(self, *, seed: Optional[int] = None, options: Optional[Dict[str, Any]] = None):
        super().reset(seed=seed)
        episode_seed = int(self.np_random.integers(0, 2**31 - 1))
        self.world = self._spawn(episode_seed)
        if self.opponent is not None:
            self.opponent.reset()
        self.episode_return = 0.0
        return self.observe(), {"episode_seed": episode_seed}

    def _opponent_action(self) -> ActionCommand:
        if self.opponent is None or not self.world.agents[PLAYER].alive:
            return NOOP
        return self.opponent.act(self.world, PLAYER)

    def step(self, action: Union[ActionCommand, Sequence[float]]):
        if not isinstance(action, ActionCommand):
            values = list(action)
            action = ActionCommand(float(values[0]), float(values[1]), len(values) > 2 and values[2] > 0.5)
        actions = {}
        if self.world.agents[LEARNER].alive:
            actions[LEARNER] = action
        if self.world.agents[PLAYER].alive:
            actions[PLAYER] = self._opponent_action()
        before = self.world
        self.world, events = step(before, actions)
        transition = Transition(events, before, self.world, LEARNER, PLAYER)

        if self.phase is not None:
            reward, terminated = phase_reward(self.phase, transition)
        else:
            reward, terminated = skill_reward(self.config.skill, transition, self.config.rewards)
        # a learner killed outside its table's terminal ends the episode without a terminal reward
        truncated = not terminated and (
            self.world.step >= self.max_episode_steps or transition.agent_dead
        )
        self.episode_return += reward
        info = {
            "step": self.world.step,
            "terminal": terminated,
            "hits_landed": transition.hits_landed,
            "hits_taken": transition.hits_taken,
            "episode_return": self.episode_return,
        }
        return self.observe(), reward, terminated, truncated, info


def make_skill_env(
    config: Union[str, SkillEnvConfig], seed: int, settings: Optional[Settings] = None
) -> SkillEnv:
    """Build and seed the environment for one of the five skills."""
    settings = settings or Settings()
    if isinstance(config, str):
        config = settings.skill(config)
    env = SkillEnv(config, settings.sensors, settings.btree, step_cap=settings.ppo.max_episode_steps)
    env.reset(seed=seed)
    return env


def make_curriculum_env(phase: Union[int, CurriculumPhaseConfig], seed: int, settings: Optional[Settings] = None) -> SkillEnv:
    settings = settings or Settings()
    if isinstance(phase, int):
        matches = [p for p in settings.curriculum.phases if p.phase == phase]
        if not matches:
            raise UnknownSkillError(f"Unknown curriculum phase {phase}")
        phase = matches[0]
    env = SkillEnv(
        phase.env, settings.sensors, settings.btree, phase=phase.rewards, step_cap=settings.ppo.max_episode_steps
    )
    env.reset(seed=seed)
    return env
