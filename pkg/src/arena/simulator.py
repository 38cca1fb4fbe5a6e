import logging
import math
from typing import Dict, List, Mapping, NamedTuple, Optional, Tuple

import numpy as np

from ..config.settings import ArenaConfig
from ..errors import InvalidActionError, SpawnError
from .geometry import (
    HitCategory,
    Vec2,
    inflate,
    point_in_rects,
    ray_disc_distances,
    ray_rect_distances,
    ray_wall_distances,
    segments_blocked,
    wrap_angle,
)
from .world import (
    ActionCommand,
    AgentEvents,
    AgentState,
    AmmoStation,
    Obstacle,
    Projectile,
    StepEvents,
    WorldState,
)

logger = logging.getLogger(__name__)

# Tie order when two categories are hit at exactly the same distance.
CATEGORY_ORDER = (HitCategory.WALL, HitCategory.OBSTACLE, HitCategory.AGENT, HitCategory.AMMO)


class Hit(NamedTuple):
    distance: float
    category: HitCategory
    agent_id: Optional[int] = None


class RayHits(NamedTuple):
    """Vectorized raycast result; misses carry distance inf and code -1."""

    distances: np.ndarray
    codes: np.ndarray
    agent_ids: np.ndarray


def _default_targets(n: int) -> List[Optional[int]]:
    if n == 1:
        return [None]
    if n == 2:
        return [1, 0]
    return [(i + 1) % n for i in range(n)]


def _sample_obstacles(config: ArenaConfig, rng: np.random.Generator) -> List[Obstacle]:
    side = config.arena_side
    obstacles = [Obstacle(*o) for o in config.obstacles]
    lo, hi = config.obstacle_size
    for _ in range(config.random_obstacles):
        w = float(rng.uniform(lo, hi))
        h = float(rng.uniform(lo, hi))
        x0 = float(rng.uniform(0.0, side - w))
        y0 = float(rng.uniform(0.0, side - h))
        obstacles.append(Obstacle(x0, y0, x0 + w, y0 + h))
    lo, hi = config.wall_length
    for _ in range(config.wall_segments):
        length = min(float(rng.uniform(lo, hi)), side * 0.9)
        if rng.random() < 0.5:
            w, h = length, config.wall_thickness
        else:
            w, h = config.wall_thickness, length
        x0 = float(rng.uniform(0.0, side - w))
        y0 = float(rng.uniform(0.0, side - h))
        obstacles.append(Obstacle(x0, y0, x0 + w, y0 + h))
    return obstacles


def _sample_free_point(
    rng: np.random.Generator, side: float, margin: float, blocked: np.ndarray, tries: int = 64
) -> Optional[Vec2]:
    for _ in range(tries):
        p = rng.uniform(margin, side - margin, size=2)
        if not point_in_rects(p[None, :], blocked)[0]:
            return Vec2(float(p[0]), float(p[1]))
    return None


def spawn_episode(config: ArenaConfig, seed: int) -> WorldState:
    """Build a fresh world by rejection sampling; same (config, seed) -> same world."""
    rng = np.random.default_rng(seed)
    side = config.arena_side
    radius = config.agent_radius
    n = config.n_agents
    targets = _default_targets(n)

    for attempt in range(config.spawn_attempts):
        obstacles = _sample_obstacles(config, rng)
        rects = np.array([o.as_tuple() for o in obstacles], dtype=float).reshape(-1, 4)
        blocked = inflate(rects, radius)

        stations = [AmmoStation(Vec2(*p)) for p in config.ammo_stations]
        for _ in range(config.random_ammo_stations):
            p = _sample_free_point(rng, side, config.station_radius, blocked)
            if p is None:
                break
            stations.append(AmmoStation(p))
        if len(stations) != len(config.ammo_stations) + config.random_ammo_stations:
            continue

        positions: List[Vec2] = []
        for _ in range(n):
            p = _sample_free_point(rng, side, radius, blocked)
            if p is None:
                break
            positions.append(p)
        if len(positions) != n or not _separation_ok(config, positions):
            continue
        if config.require_occluded and n >= 2:
            a, b = positions[0], positions[targets[0]]
            if not segments_blocked(np.array([a]), np.array([b]), rects)[0]:
                continue

        agents = []
        for i, p in enumerate(positions):
            target = targets[i]
            facing = (positions[target] - p).normalized() if target is not None else Vec2(1.0, 0.0)
            if facing == Vec2(0.0, 0.0):
                facing = Vec2(1.0, 0.0)
            agents.append(
                AgentState(
                    id=i,
                    position=p,
                    facing=facing,
                    health=config.max_health,
                    ammo=config.start_ammo,
                    speed=config.move_speed,
                    team=i,
                    target=target,
                    unlimited_ammo=config.unlimited_ammo,
                    health_history=(config.max_health,),
                )
            )
        if attempt:
            logger.debug("spawn seed=%d accepted after %d rejections", seed, attempt)
        return WorldState(
            config=config,
            seed=seed,
            step=0,
            agents=agents,
            projectiles=[],
            obstacles=tuple(obstacles),
            ammo_stations=stations,
            rng=rng,
        )
    raise SpawnError(
        f"Could not place agents after {config.spawn_attempts} attempts (seed {seed}); "
        "the spawn constraints are likely over-constrained"
    )


def _separation_ok(config: ArenaConfig, positions: List[Vec2]) -> bool:
    floor = max(config.min_separation, 2.0 * config.agent_radius)
    for i in range(len(positions)):
        for j in range(i + 1, len(positions)):
            d = positions[i].distance_to(positions[j])
            if d < floor:
                return False
            if config.max_separation is not None and d > config.max_separation:
                return False
    return True


def movement_frame(world: WorldState, agent_id: int) -> Tuple[Vec2, Vec2]:
    """(forward, right) axes: forward points at the designated target, else along facing."""
    agent = world.agents[agent_id]
    target = world.target_of(agent_id)
    forward = agent.facing
    if target is not None:
        toward = (target.position - agent.position).normalized()
        if toward != Vec2(0.0, 0.0):
            forward = toward
    return forward, forward.right()


def _validate_actions(world: WorldState, actions: Mapping[int, ActionCommand]) -> None:
    n = len(world.agents)
    for agent_id, cmd in actions.items():
        if not isinstance(agent_id, int) or not 0 <= agent_id < n:
            raise InvalidActionError(f"Action given for unknown agent id {agent_id!r}")
        if not cmd.is_finite():
            raise InvalidActionError(f"Non-finite action axes for agent {agent_id}: {cmd}")
    for agent in world.agents:
        if agent.alive and agent.id not in actions:
            raise InvalidActionError(f"Live agent {agent.id} has no action this step")


def _slide(config: ArenaConfig, blocked: np.ndarray, pos: Vec2, disp: Vec2) -> Tuple[Vec2, bool]:
    """Axis-separated swept move of a point against inflated obstacles and walls."""
    low, high = config.agent_radius, config.arena_side - config.agent_radius
    x, y = pos
    collided = False
    if disp.x != 0.0:
        nx = x + disp.x
        for x0, y0, x1, y1 in blocked:
            if y0 < y < y1:
                if disp.x > 0.0 and x <= x0 < nx:
                    nx, collided = x0, True
                elif disp.x < 0.0 and nx < x1 <= x:
                    nx, collided = x1, True
        if nx < low or nx > high:
            nx, collided = min(high, max(low, nx)), True
        x = float(nx)
    if disp.y != 0.0:
        ny = y + disp.y
        for x0, y0, x1, y1 in blocked:
            if x0 < x < x1:
                if disp.y > 0.0 and y <= y0 < ny:
                    ny, collided = y0, True
                elif disp.y < 0.0 and ny < y1 <= y:
                    ny, collided = y1, True
        if ny < low or ny > high:
            ny, collided = min(high, max(low, ny)), True
        y = float(ny)
    return Vec2(x, y), collided


def _slew(facing: Vec2, desired: Vec2, max_turn: float) -> Vec2:
    current = facing.angle()
    goal = desired.angle()
    diff = wrap_angle(goal - current)
    if abs(diff) <= max_turn:
        return Vec2.from_angle(goal)
    return Vec2.from_angle(current + math.copysign(max_turn, diff))


def step(world: WorldState, actions: Mapping[int, ActionCommand]) -> Tuple[WorldState, StepEvents]:
    """Advance one fixed tick of 1/tick_rate seconds."""
    _validate_actions(world, actions)
    cfg = world.config
    dt = cfg.dt
    new = world.clone()
    events = StepEvents(agents={a.id: AgentEvents() for a in new.agents})

    for agent in new.agents:
        agent.cooldown = max(0, agent.cooldown - 1)
    for station in new.ammo_stations:
        station.respawn_timer = max(0, station.respawn_timer - 1)

    blocked = inflate(world.rects, cfg.agent_radius)
    frames = {a.id: movement_frame(world, a.id) for a in world.agents if a.alive}
    for agent in new.agents:
        if not agent.alive:
            continue
        cmd = actions[agent.id].clamped()
        forward, right = frames[agent.id]
        move = right * cmd.lateral + forward * cmd.forward
        norm = move.length()
        if norm > 1.0:
            move = move * (1.0 / norm)
        disp = move * (agent.speed * dt)
        if disp.x == 0.0 and disp.y == 0.0:
            continue
        agent.position, collided = _slide(cfg, blocked, agent.position, disp)
        if collided:
            events.agents[agent.id].wall_collisions += 1

    max_turn = math.radians(cfg.turn_rate_deg) * dt
    for agent in new.agents:
        target = new.target_of(agent.id)
        if not agent.alive or target is None:
            continue
        desired = target.position - agent.position
        if desired.x == 0.0 and desired.y == 0.0:
            continue
        agent.facing = _slew(agent.facing, desired, max_turn)

    for agent in new.agents:
        if not (agent.alive and actions[agent.id].shoot and agent.cooldown == 0):
            continue
        if not agent.unlimited_ammo and agent.ammo <= 0:
            continue
        new.projectiles.append(
            Projectile(position=agent.position, velocity=agent.facing * cfg.projectile_speed, owner=agent.id)
        )
        if not agent.unlimited_ammo:
            agent.ammo -= 1
        agent.cooldown = cfg.cooldown_steps
        events.agents[agent.id].shots_fired += 1

    new.projectiles = _advance_projectiles(new, events, dt)

    for agent in new.agents:
        if not agent.alive:
            continue
        for index, station in enumerate(new.ammo_stations):
            if not station.available:
                continue
            if agent.position.distance_to(station.position) < cfg.agent_radius + cfg.station_radius:
                agent.ammo += cfg.ammo_quantum
                station.respawn_timer = cfg.ammo_respawn_steps
                events.agents[agent.id].ammo_pickups.append(index)

    for agent in new.agents:
        agent.health_history = (agent.health_history + (agent.health,))[-cfg.health_history:]

    for agent in new.agents:
        target = new.target_of(agent.id)
        if target is not None:
            events.distance_to_opponent[agent.id] = agent.position.distance_to(target.position)
    events.in_sight = sight_pairs(new)

    new.step = world.step + 1
    return new, events


def _advance_projectiles(world: WorldState, events: StepEvents, dt: float) -> List[Projectile]:
    cfg = world.config
    rects = world.rects
    survivors = []
    for proj in world.projectiles:
        travel = proj.velocity * dt
        length = travel.length()
        if length == 0.0:
            survivors.append(proj)
            continue
        origin = np.array([[proj.position.x, proj.position.y]])
        unit = np.array([[travel.x / length, travel.y / length]])

        t_obstacle = float(ray_rect_distances(origin, unit, rects).min(initial=np.inf))
        t_wall = float(ray_wall_distances(origin, unit, cfg.arena_side)[0])
        targets = [a for a in world.agents if a.alive and a.id != proj.owner]
        t_agent, victim = np.inf, None
        if targets:
            centers = np.array([[a.position.x, a.position.y] for a in targets])
            d = ray_disc_distances(origin, unit, centers, cfg.agent_radius)[0]
            k = int(np.argmin(d))
            t_agent, victim = float(d[k]), targets[k]

        blocker = min(t_obstacle, t_wall)
        if victim is not None and t_agent <= length and t_agent < blocker:
            _apply_hit(world, events, proj.owner, victim)
            continue
        if blocker <= length:
            continue
        survivors.append(Projectile(position=proj.position + travel, velocity=proj.velocity, owner=proj.owner))
    return survivors


def _apply_hit(world: WorldState, events: StepEvents, owner: int, victim: AgentState) -> None:
    dealt = min(world.config.damage, victim.health)
    victim.health = max(0.0, victim.health - world.config.damage)
    world.agents[owner].damage_dealt += dealt
    events.agents[owner].hits_landed.append(victim.id)
    events.agents[victim.id].hits_taken.append(owner)
    if victim.health <= 0.0:
        events.agents[owner].kills.append(victim.id)
        events.deaths.append(victim.id)


def sight_pairs(world: WorldState) -> Dict[Tuple[int, int], bool]:
    """Line of sight for every ordered pair of agents."""
    n = len(world.agents)
    if n < 2:
        return {}
    i_idx, j_idx = np.triu_indices(n, k=1)
    pos = np.array([[a.position.x, a.position.y] for a in world.agents])
    blocked = segments_blocked(pos[i_idx], pos[j_idx], world.rects)
    pairs = {}
    for i, j, b in zip(i_idx.tolist(), j_idx.tolist(), blocked.tolist()):
        pairs[(i, j)] = pairs[(j, i)] = not b
    return pairs


def line_of_sight(world: WorldState, a: Vec2, b: Vec2) -> bool:
    """True iff the open segment a->b crosses no obstacle interior; symmetric."""
    return not bool(segments_blocked(np.array([a], dtype=float), np.array([b], dtype=float), world.rects)[0])


def cast_rays(
    world: WorldState,
    origins: np.ndarray,
    dirs: np.ndarray,
    max_dist: float,
    mask: HitCategory = HitCategory.ALL,
    ignore: Optional[int] = None,
) -> RayHits:
    """Nearest hit per ray among walls, obstacles, live agent discs and available stations."""
    cfg = world.config
    n = len(origins)
    columns = []
    agent_ids = np.full(n, -1)
    for category in CATEGORY_ORDER:
        if not category & mask:
            columns.append(np.full(n, np.inf))
            continue
        if category is HitCategory.WALL:
            columns.append(ray_wall_distances(origins, dirs, cfg.arena_side))
        elif category is HitCategory.OBSTACLE:
            columns.append(ray_rect_distances(origins, dirs, world.rects).min(axis=1, initial=np.inf))
        elif category is HitCategory.AGENT:
            others = [a for a in world.agents if a.alive and a.id != ignore]
            if not others:
                columns.append(np.full(n, np.inf))
                continue
            centers = np.array([[a.position.x, a.position.y] for a in others])
            d = ray_disc_distances(origins, dirs, centers, cfg.agent_radius)
            k = np.argmin(d, axis=1)
            columns.append(d[np.arange(n), k])
            agent_ids = np.array([others[i].id for i in k])
        else:
            stations = [s for s in world.ammo_stations if s.available]
            if not stations:
                columns.append(np.full(n, np.inf))
                continue
            centers = np.array([[s.position.x, s.position.y] for s in stations])
            columns.append(ray_disc_distances(origins, dirs, centers, cfg.station_radius).min(axis=1))
    table = np.stack(columns, axis=1)
    best = np.argmin(table, axis=1)
    distances = table[np.arange(n), best]
    miss = distances > max_dist
    codes = np.where(miss, -1, best)
    agent_ids = np.where(codes == CATEGORY_ORDER.index(HitCategory.AGENT), agent_ids, -1)
    return RayHits(np.where(miss, np.inf, distances), codes, agent_ids)


def raycast(
    world: WorldState,
    origin: Vec2,
    direction: Vec2,
    max_dist: float,
    mask: HitCategory = HitCategory.ALL,
    ignore: Optional[int] = None,
) -> Optional[Hit]:
    hits = cast_rays(world, np.array([origin], dtype=float), np.array([direction], dtype=float), max_dist, mask, ignore)
    code = int(hits.codes[0])
    if code < 0:
        return None
    agent_id = int(hits.agent_ids[0])
    return Hit(float(hits.distances[0]), CATEGORY_ORDER[code], agent_id if agent_id >= 0 else None)
