"""
Task leaves: scripted routines for the pure-BT agent and the adapter that
runs a learned policy in place of one.
"""
import logging
import math
from typing import Optional

from ..arena.geometry import Vec2
from ..arena.simulator import line_of_sight, movement_frame
from ..arena.world import NOOP, ActionCommand, AgentState, WorldState
from ..config.settings import BTConfig
from .eqs import EqsCriteria, eqs_query
from .nodes import Blackboard, Task
from .planner import plan_path

logger = logging.getLogger(__name__)


def target_of(world: WorldState, agent_id: int, blackboard: Blackboard) -> Optional[AgentState]:
    if blackboard.target_id is not None:
        return world.agents[blackboard.target_id]
    return world.target_of(agent_id)


def aim_error_deg(agent: AgentState, point: Vec2) -> float:
    offset = point - agent.position
    if offset.x == 0.0 and offset.y == 0.0:
        return 0.0
    return math.degrees(abs(math.atan2(agent.facing.cross(offset), agent.facing.dot(offset))))


def _can_fire_at(world: WorldState, agent: AgentState, target: AgentState, tolerance_deg: float) -> bool:
    return (
        target.alive
        and aim_error_deg(agent, target.position) < tolerance_deg
        and line_of_sight(world, agent.position, target.position)
    )


def to_command(world: WorldState, agent_id: int, direction: Vec2, shoot: bool = False) -> ActionCommand:
    """Express a world-space unit direction on the agent's (lateral, forward) axes."""
    if direction.x == 0.0 and direction.y == 0.0:
        return ActionCommand(0.0, 0.0, shoot)
    forward, right = movement_frame(world, agent_id)
    return ActionCommand(direction.dot(right), direction.dot(forward), shoot)


def follow_path(world: WorldState, agent_id: int, goal: Vec2, blackboard: Blackboard, config: BTConfig) -> Vec2:
    """Unit direction toward the next waypoint on a (cached) path to `goal`; zero once there."""
    position = world.agents[agent_id].position
    if position.distance_to(goal) <= config.waypoint_tolerance:
        blackboard.clear_navigation()
        return Vec2(0.0, 0.0)

    stale = (
        not blackboard.path
        or blackboard.path_goal is None
        or blackboard.path_goal.distance_to(goal) > config.path_cell
        or world.step - (blackboard.path_step or 0) >= config.replan_steps
    )
    if stale:
        blackboard.path = plan_path(world, position, goal, config.path_cell)[1:]
        blackboard.path_goal = goal
        blackboard.path_step = world.step
        if not blackboard.path:
            logger.debug("no path for agent %d to %s, heading straight", agent_id, goal)

    while len(blackboard.path) > 1 and position.distance_to(blackboard.path[0]) <= config.waypoint_tolerance:
        blackboard.path.pop(0)
    waypoint = blackboard.path[0] if blackboard.path else goal
    if blackboard.path and len(blackboard.path) == 1:
        waypoint = goal
    return (waypoint - position).normalized()


def _combat(world: WorldState, agent_id: int, blackboard: Blackboard, config: BTConfig) -> ActionCommand:
    agent = world.agents[agent_id]
    target = target_of(world, agent_id, blackboard)
    shoot = target is not None and _can_fire_at(world, agent, target, config.aim_tolerance_deg)
    return ActionCommand(0.0, 0.0, shoot)


def _search(world: WorldState, agent_id: int, blackboard: Blackboard, config: BTConfig) -> ActionCommand:
    agent = world.agents[agent_id]
    target = target_of(world, agent_id, blackboard)
    if target is None:
        return NOOP
    goal = target.position
    if blackboard.last_seen is not None:
        if agent.position.distance_to(blackboard.last_seen) > config.waypoint_tolerance:
            goal = blackboard.last_seen
        else:
            blackboard.last_seen = None
    direction = follow_path(world, agent_id, goal, blackboard, config)
    shoot = blackboard.fire_on_sight and _can_fire_at(world, agent, target, config.aim_tolerance_deg)
    return to_command(world, agent_id, direction, shoot)


def _eqs_move(kind: str, world: WorldState, agent_id: int, blackboard: Blackboard, config: BTConfig) -> ActionCommand:
    fresh = (
        blackboard.eqs_point is not None
        and blackboard.eqs_kind == kind
        and world.step - (blackboard.eqs_step or 0) < config.eqs_requery_steps
    )
    if not fresh:
        weights = config.flee_weights if kind == "flee" else config.hide_weights
        criteria = EqsCriteria(kind, dict(weights), config.eqs_wall_margin)
        blackboard.eqs_point = eqs_query(world, agent_id, criteria, config.eqs_samples, config.eqs_radii)
        blackboard.eqs_step = world.step
        blackboard.eqs_kind = kind
    direction = follow_path(world, agent_id, blackboard.eqs_point, blackboard, config)
    return to_command(world, agent_id, direction)


def _collect(world: WorldState, agent_id: int, blackboard: Blackboard, config: BTConfig) -> ActionCommand:
    position = world.agents[agent_id].position
    stations = world.available_stations()
    if not stations:
        return NOOP
    _, nearest = min(stations, key=lambda item: (position.distance_to(item[1].position), item[0]))
    direction = follow_path(world, agent_id, nearest.position, blackboard, config)
    return to_command(world, agent_id, direction)


def scripted_task(
    kind: str, world: WorldState, agent_id: int, blackboard: Blackboard, config: Optional[BTConfig] = None
) -> ActionCommand:
    config = config or BTConfig()
    if kind == "combat":
        return _combat(world, agent_id, blackboard, config)
    if kind == "search":
        return _search(world, agent_id, blackboard, config)
    if kind in ("flee", "hide"):
        return _eqs_move(kind, world, agent_id, blackboard, config)
    if kind == "collect":
        return _collect(world, agent_id, blackboard, config)
    raise ValueError(f"Unknown scripted task '{kind}'")


def run_task(task: Task, world: WorldState, agent_id: int, blackboard: Blackboard, config: BTConfig) -> ActionCommand:
    # observation windows belong to one uninterrupted activation of a leaf
    if blackboard.active_leaf != task.id:
        blackboard.histories.clear()
        blackboard.active_leaf = task.id
    if task.policy is None:
        return scripted_task(task.kind, world, agent_id, blackboard, config)
    runner = task.policy
    history = blackboard.history(task.id, runner.max_seq)
    history.append(runner.observe(world, agent_id))
    return runner.act(list(history))
