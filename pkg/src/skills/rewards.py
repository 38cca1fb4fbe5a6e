"""
Reward tables.

Components of one step are added in a fixed order: the per-step term first,
then event terms, then the terminal term. Keeping that order makes rewards
exact sums of the configured constants.
"""
from dataclasses import dataclass
from typing import Tuple

from ..arena.world import StepEvents, WorldState
from ..config.settings import PhaseRewardSpec, RewardSpec
from ..errors import UnknownSkillError


@dataclass
class Transition:
    """One step as seen by the learner (`agent_id`) facing `opponent_id`."""

    events: StepEvents
    before: WorldState
    after: WorldState
    agent_id: int = 0
    opponent_id: int = 1

    @property
    def distance(self) -> float:
        return self.events.distance_to_opponent.get(
            self.agent_id,
            self.after.agents[self.agent_id].position.distance_to(self.after.agents[self.opponent_id].position),
        )

    @property
    def agent_sees_player(self) -> bool:
        return self.events.in_sight.get((self.agent_id, self.opponent_id), False)

    @property
    def player_sees_agent(self) -> bool:
        return self.events.in_sight.get((self.opponent_id, self.agent_id), False)

    @property
    def hits_landed(self) -> int:
        return sum(1 for victim in self.events.of(self.agent_id).hits_landed if victim == self.opponent_id)

    @property
    def hits_taken(self) -> int:
        return len(self.events.of(self.agent_id).hits_taken)

    @property
    def wall_collisions(self) -> int:
        return self.events.of(self.agent_id).wall_collisions

    @property
    def reloaded(self) -> bool:
        return bool(self.events.of(self.agent_id).ammo_pickups)

    @property
    def reloaded_when_empty(self) -> bool:
        agent = self.before.agents[self.agent_id]
        return self.reloaded and agent.ammo == 0 and not agent.unlimited_ammo

    @property
    def opponent_dead(self) -> bool:
        return not self.after.agents[self.opponent_id].alive

    @property
    def agent_dead(self) -> bool:
        return not self.after.agents[self.agent_id].alive


def _terminal(skill: str, t: Transition, rewards: RewardSpec) -> bool:
    if skill == "flee":
        return t.distance < rewards.flee_distance
    if skill == "advance":
        return t.agent_sees_player
    if skill == "combat":
        return t.opponent_dead
    if skill == "hide":
        return t.player_sees_agent
    if skill == "collect":
        return t.reloaded
    raise UnknownSkillError(f"Unknown skill '{skill}'")


def skill_reward(skill: str, transition: Transition, rewards: RewardSpec) -> Tuple[float, bool]:
    done = _terminal(skill, transition, rewards)
    reward = rewards.step
    if transition.wall_collisions:
        reward += rewards.wall_collision * transition.wall_collisions
    if transition.hits_landed:
        reward += rewards.hit_landed * transition.hits_landed
    if transition.hits_taken:
        reward += rewards.hit_taken * transition.hits_taken
    if done:
        reward += rewards.terminal
    return reward, done


def phase_reward(rewards: PhaseRewardSpec, transition: Transition) -> Tuple[float, bool]:
    """Curriculum reward; any death ends the episode."""
    reward = rewards.step_penalty
    if transition.hits_landed:
        reward += rewards.shot_landed * transition.hits_landed
    if transition.wall_collisions:
        reward += rewards.wall_collision * transition.wall_collisions
    if transition.hits_taken:
        reward += rewards.shot_taken * transition.hits_taken
    if transition.reloaded_when_empty:
        reward += rewards.move_when_empty
    if transition.agent_dead:
        reward += rewards.death_penalty
    return reward, transition.agent_dead or transition.opponent_dead
