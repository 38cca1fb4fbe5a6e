import math
from typing import Optional

import numpy as np

from ..arena.geometry import HitCategory, Vec2
from ..arena.simulator import CATEGORY_ORDER, cast_rays, line_of_sight, raycast
from ..arena.world import WorldState
from ..config.settings import SensorConfig
from ..errors import ConfigError, MissingTargetError

RAY_FEATURES = 4  # distance, target, obstacle, ammo
CORE_SCALARS = 4  # health_frac, ammo_frac, dir_to_target (2)
HIDE_AUX_WIDTH = 2
COLLECT_AUX_WIDTH = 3

# Channel of each hit category inside a ray's one-hot; walls read as obstacles.
_CHANNEL = {
    CATEGORY_ORDER.index(HitCategory.WALL): 2,
    CATEGORY_ORDER.index(HitCategory.OBSTACLE): 2,
    CATEGORY_ORDER.index(HitCategory.AGENT): 1,
    CATEGORY_ORDER.index(HitCategory.AMMO): 3,
}


def core_width(sensors: SensorConfig) -> int:
    return sensors.ray_count * RAY_FEATURES + CORE_SCALARS


def observation_width(kind: str, sensors: SensorConfig) -> int:
    widths = {
        "core": core_width(sensors),
        "hide": core_width(sensors) + HIDE_AUX_WIDTH,
        "collect": core_width(sensors) + COLLECT_AUX_WIDTH,
        "curriculum": core_width(sensors) + HIDE_AUX_WIDTH + COLLECT_AUX_WIDTH,
    }
    if kind not in widths:
        raise ConfigError(f"Unknown observation kind '{kind}'. Expected one of {sorted(widths)}")
    return widths[kind]


def _to_facing_frame(v: Vec2, facing: Vec2) -> Vec2:
    """Express a world vector with x along facing and y to its left."""
    return Vec2(v.dot(facing), facing.cross(v))


def encode_core(
    world: WorldState, agent_id: int, max_ray_range: float, sensors: Optional[SensorConfig] = None
) -> np.ndarray:
    """Ray fan plus own-state scalars.

    Ray k points `k * 360 / ray_count` degrees counterclockwise from facing.
    """
    sensors = sensors or SensorConfig()
    agent = world.agents[agent_id]
    target = world.target_of(agent_id)
    if target is None:
        raise MissingTargetError(f"Agent {agent_id} has no designated target to encode against")

    n = sensors.ray_count
    base = agent.facing.angle()
    angles = base + np.arange(n) * (2.0 * math.pi / n)
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    origins = np.tile(np.array([agent.position], dtype=float), (n, 1))
    hits = cast_rays(world, origins, dirs, max_ray_range, HitCategory.ALL, ignore=agent_id)

    rays = np.zeros((n, RAY_FEATURES))
    hit = hits.codes >= 0
    rays[:, 0] = np.where(hit, np.clip(hits.distances / max_ray_range, 0.0, 1.0), 1.0)
    for code, channel in _CHANNEL.items():
        rays[hits.codes == code, channel] = 1.0

    health_frac = min(1.0, max(0.0, agent.health / sensors.health_norm))
    ammo_frac = 1.0 if agent.unlimited_ammo else min(1.0, max(0.0, agent.ammo / sensors.ammo_norm))
    toward = _to_facing_frame(target.position - agent.position, agent.facing).normalized()
    if toward == Vec2(0.0, 0.0):
        toward = Vec2(1.0, 0.0)
    return np.concatenate([rays.ravel(), [health_frac, ammo_frac, toward.x, toward.y]])


def encode_hide_aux(world: WorldState, agent_id: int) -> np.ndarray:
    """(player_sees_agent, fraction of the way to the player before the first blocker)."""
    agent = world.agents[agent_id]
    player = world.target_of(agent_id)
    if player is None:
        raise MissingTargetError(f"Agent {agent_id} has no designated player")
    offset = player.position - agent.position
    distance = offset.length()
    if distance == 0.0:
        return np.array([1.0, 1.0])
    sees = 1.0 if line_of_sight(world, player.position, agent.position) else 0.0
    blocker = raycast(world, agent.position, offset * (1.0 / distance), distance, HitCategory.SOLID)
    frac = 1.0 if blocker is None else min(1.0, max(0.0, blocker.distance / distance))
    return np.array([sees, frac])


def encode_collect_aux(world: WorldState, agent_id: int) -> np.ndarray:
    """Direction (facing frame) and diagonal-normalized distance to the nearest available station."""
    agent = world.agents[agent_id]
    best = None
    for _, station in world.available_stations():
        d = agent.position.distance_to(station.position)
        if best is None or d < best[0]:
            best = (d, station.position)
    if best is None:
        return np.array([0.0, 0.0, 1.0])
    distance, position = best
    direction = _to_facing_frame(position - agent.position, agent.facing).normalized()
    return np.array([direction.x, direction.y, min(1.0, distance / world.config.diagonal)])


def encode_observation(world: WorldState, agent_id: int, kind: str, sensors: SensorConfig) -> np.ndarray:
    """Full observation of one kind: core, hide, collect or curriculum."""
    observation_width(kind, sensors)
    parts = [encode_core(world, agent_id, sensors.ray_range, sensors)]
    if kind in ("hide", "curriculum"):
        parts.append(encode_hide_aux(world, agent_id))
    if kind in ("collect", "curriculum"):
        parts.append(encode_collect_aux(world, agent_id))
    return np.concatenate(parts)
