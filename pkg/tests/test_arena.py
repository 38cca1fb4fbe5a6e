import math

import numpy as np
import pytest

from src.arena.geometry import HitCategory, Vec2, inflate, point_in_rects
from src.arena.simulator import cast_rays, line_of_sight, raycast, spawn_episode, step
from src.arena.trace import state_hash, trajectory_hash
from src.arena.world import NOOP, ActionCommand
from src.config.settings import ArenaConfig, eval_arena
from src.errors import InvalidActionError, SpawnError
from tests.helpers import build_world

SHOOT = ActionCommand(0.0, 0.0, True)


def _idle(world):
    return {a.id: NOOP for a in world.agents if a.alive}


def _run(world, actions, n):
    """Step n times with agent 0 taking `actions` and everyone else idle."""
    history = []
    for _ in range(n):
        moves = _idle(world)
        if world.agents[0].alive:
            moves[0] = actions
        world, events = step(world, moves)
        history.append(events)
    return world, history


class TestSpawn:
    def test_same_seed_same_world(self):
        config = eval_arena()
        assert state_hash(spawn_episode(config, 7)) == state_hash(spawn_episode(config, 7))

    def test_separation_and_free_placement(self):
        config = eval_arena()
        for seed in range(20):
            world = spawn_episode(config, seed)
            a, b = world.agents
            assert a.position.distance_to(b.position) >= config.min_separation
            for agent in world.agents:
                assert config.agent_radius <= agent.position.x <= config.arena_side - config.agent_radius
                for o in world.obstacles:
                    inside_x = o.x0 - config.agent_radius < agent.position.x < o.x1 + config.agent_radius
                    inside_y = o.y0 - config.agent_radius < agent.position.y < o.y1 + config.agent_radius
                    assert not (inside_x and inside_y)

    def test_agents_face_and_target_each_other(self):
        world = spawn_episode(ArenaConfig(), 3)
        a, b = world.agents
        assert (a.target, b.target) == (1, 0)
        toward = (b.position - a.position).normalized()
        assert a.facing.dot(toward) == pytest.approx(1.0)

    def test_require_occluded(self):
        config = eval_arena().model_copy(update={"require_occluded": True, "min_separation": 0.0})
        for seed in range(5):
            world = spawn_episode(config, seed)
            assert not line_of_sight(world, world.agents[0].position, world.agents[1].position)

    def test_over_constrained_spawn_raises(self):
        config = ArenaConfig(arena_side=1000.0, min_separation=2000.0, spawn_attempts=20)
        with pytest.raises(SpawnError):
            spawn_episode(config, 0)

    def test_random_obstacles_are_seeded(self):
        config = ArenaConfig(random_obstacles=5, wall_segments=3)
        first = spawn_episode(config, 11).obstacles
        assert first == spawn_episode(config, 11).obstacles
        assert first != spawn_episode(config, 12).obstacles


class TestMovement:
    def test_forward_moves_toward_target(self):
        world = build_world([(500.0, 500.0), (900.0, 500.0)])
        world, _ = _run(world, ActionCommand(0.0, 1.0), 1)
        assert world.agents[0].position == pytest.approx((520.0, 500.0))

    def test_lateral_moves_to_the_right(self):
        world = build_world([(500.0, 500.0), (900.0, 500.0)])
        world, _ = _run(world, ActionCommand(1.0, 0.0), 1)
        assert world.agents[0].position == pytest.approx((500.0, 480.0))

    def test_diagonal_input_is_normalized(self):
        world = build_world([(500.0, 500.0), (900.0, 500.0)])
        after, _ = _run(world, ActionCommand(1.0, 1.0), 1)
        moved = after.agents[0].position.distance_to(world.agents[0].position)
        assert moved == pytest.approx(20.0)

    def test_out_of_range_axes_are_clamped(self):
        world = build_world([(500.0, 500.0), (900.0, 500.0)])
        world, _ = _run(world, ActionCommand(0.0, 5.0), 1)
        assert world.agents[0].position == pytest.approx((520.0, 500.0))

    def test_wall_clamps_and_reports_collision(self):
        world = build_world([(60.0, 500.0), (900.0, 500.0)])
        world, history = _run(world, ActionCommand(0.0, -1.0), 1)
        assert world.agents[0].position.x == pytest.approx(50.0)
        assert history[0].of(0).wall_collisions == 1

    def test_obstacle_stops_at_inflated_face(self):
        world = build_world([(500.0, 500.0), (900.0, 500.0)], obstacles=[(560.0, 400.0, 700.0, 600.0)])
        world, history = _run(world, ActionCommand(0.0, 1.0), 1)
        assert world.agents[0].position.x == pytest.approx(510.0)
        assert history[0].of(0).wall_collisions == 1

    def test_facing_slews_at_turn_rate(self):
        world = build_world([(500.0, 500.0), (900.0, 500.0)], facings=[(0.0, 1.0), (-1.0, 0.0)])
        world, _ = _run(world, NOOP, 1)
        assert world.agents[0].facing.angle() == pytest.approx(math.radians(84.0))

    def test_step_leaves_the_previous_world_untouched(self):
        world = build_world([(500.0, 500.0), (900.0, 500.0)])
        before = state_hash(world)
        _run(world, ActionCommand(0.0, 1.0, True), 3)
        assert state_hash(world) == before

    def test_health_history_is_bounded(self):
        world = build_world([(500.0, 500.0), (900.0, 500.0)])
        world, _ = _run(world, NOOP, 120)
        assert len(world.agents[0].health_history) == world.config.health_history


class TestActions:
    def test_non_finite_axis(self):
        world = build_world([(500.0, 500.0), (900.0, 500.0)])
        with pytest.raises(InvalidActionError):
            step(world, {0: ActionCommand(float("nan"), 0.0), 1: NOOP})

    def test_missing_live_agent(self):
        world = build_world([(500.0, 500.0), (900.0, 500.0)])
        with pytest.raises(InvalidActionError):
            step(world, {0: NOOP})

    def test_unknown_agent(self):
        world = build_world([(500.0, 500.0), (900.0, 500.0)])
        with pytest.raises(InvalidActionError):
            step(world, {0: NOOP, 1: NOOP, 5: NOOP})


class TestCombat:
    def test_projectile_hits_on_the_third_step(self):
        world = build_world([(500.0, 500.0), (700.0, 500.0)])
        world, history = _run(world, SHOOT, 1)
        assert world.agents[0].ammo == 9
        assert world.agents[0].cooldown == 5
        world, more = _run(world, NOOP, 2)
        history += more
        assert [e.of(0).hits_landed for e in history] == [[], [], [1]]
        assert history[2].of(1).hits_taken == [0]
        assert world.agents[1].health == 90.0
        assert world.agents[0].damage_dealt == 10.0

    def test_cooldown_limits_fire_rate(self):
        world = build_world([(500.0, 500.0), (3500.0, 500.0)])
        world, history = _run(world, SHOOT, 10)
        assert sum(e.of(0).shots_fired for e in history) == 2
        assert world.agents[0].ammo == 8

    def test_empty_magazine_cannot_fire(self):
        world = build_world([(500.0, 500.0), (700.0, 500.0)], start_ammo=0)
        world, history = _run(world, SHOOT, 1)
        assert history[0].of(0).shots_fired == 0
        assert world.projectiles == []

    def test_unlimited_ammo_never_depletes(self):
        world = build_world([(500.0, 500.0), (3500.0, 500.0)], unlimited_ammo=True)
        world, _ = _run(world, SHOOT, 20)
        assert world.agents[0].ammo == 10

    def test_obstacle_absorbs_projectile(self):
        world = build_world([(500.0, 500.0), (700.0, 500.0)], obstacles=[(590.0, 400.0, 610.0, 600.0)])
        world, history = _run(world, SHOOT, 1)
        assert len(world.projectiles) == 1
        world, more = _run(world, NOOP, 1)
        assert world.projectiles == []
        assert all(not e.of(0).hits_landed for e in history + more)

    def test_lethal_hit_reports_death(self):
        world = build_world([(500.0, 500.0), (700.0, 500.0)])
        world.agents[1].health = 10.0
        world, history = _run(world, SHOOT, 3)
        assert history[2].deaths == [1]
        assert history[2].of(0).kills == [1]
        assert not world.agents[1].alive
        assert world.agents[1].health == 0.0


class TestAmmoStations:
    def test_pickup_and_respawn(self):
        world = build_world([(500.0, 500.0), (900.0, 900.0)], stations=[(530.0, 500.0)])
        world, history = _run(world, NOOP, 1)
        assert history[0].of(0).ammo_pickups == [0]
        assert world.agents[0].ammo == 20
        assert world.ammo_stations[0].respawn_timer == 300

        world, history = _run(world, NOOP, 1)
        assert history[0].of(0).ammo_pickups == []
        assert world.ammo_stations[0].respawn_timer == 299

        world, history = _run(world, NOOP, 299)
        assert sum(len(e.of(0).ammo_pickups) for e in history) == 1
        assert world.agents[0].ammo == 30


class TestRaycast:
    def test_nearest_category(self):
        world = build_world([(500.0, 500.0), (500.0, 900.0)], obstacles=[(700.0, 400.0, 800.0, 600.0)])
        hit = raycast(world, Vec2(500.0, 500.0), Vec2(1.0, 0.0), 2000.0, ignore=0)
        assert hit.category == HitCategory.OBSTACLE
        assert hit.distance == pytest.approx(200.0)

        hit = raycast(world, Vec2(500.0, 500.0), Vec2(0.0, 1.0), 2000.0, ignore=0)
        assert hit.category == HitCategory.AGENT
        assert hit.agent_id == 1
        assert hit.distance == pytest.approx(350.0)

    def test_mask_and_range(self):
        world = build_world([(500.0, 500.0), (500.0, 900.0)])
        hit = raycast(world, Vec2(500.0, 500.0), Vec2(0.0, 1.0), 4000.0, HitCategory.SOLID, ignore=0)
        assert hit.category == HitCategory.WALL
        assert hit.distance == pytest.approx(3500.0)
        assert raycast(world, Vec2(500.0, 500.0), Vec2(0.0, 1.0), 100.0, ignore=0) is None

    def test_cast_rays_batches(self):
        world = build_world([(500.0, 500.0), (500.0, 900.0)])
        origins = np.array([[500.0, 500.0]] * 2)
        dirs = np.array([[0.0, 1.0], [-1.0, 0.0]])
        hits = cast_rays(world, origins, dirs, 2000.0, ignore=0)
        assert hits.agent_ids.tolist() == [1, -1]
        assert hits.distances.tolist() == pytest.approx([350.0, 500.0])

    def test_line_of_sight_is_symmetric(self):
        world = build_world([(500.0, 500.0), (900.0, 500.0)], obstacles=[(650.0, 400.0, 750.0, 600.0)])
        a, b = world.agents[0].position, world.agents[1].position
        assert not line_of_sight(world, a, b)
        assert not line_of_sight(world, b, a)
        assert line_of_sight(world, a, Vec2(500.0, 900.0))


def test_replay_is_bit_identical():
    config = eval_arena()
    script = [ActionCommand(math.sin(k / 7.0), math.cos(k / 5.0), k % 3 == 0) for k in range(150)]

    def play():
        world = spawn_episode(config, 21)
        states = [world]
        for cmd in script:
            moves = _idle(world)
            for agent_id in moves:
                moves[agent_id] = cmd
            world, _ = step(world, moves)
            states.append(world)
        return trajectory_hash(states)

    assert play() == play()


def _random_rects(rng, n=6, side=4000.0):
    rects = []
    for _ in range(n):
        w, h = rng.uniform(100.0, 600.0, size=2)
        x0, y0 = rng.uniform(0.0, side - 600.0, size=2)
        rects.append((float(x0), float(y0), float(x0 + w), float(y0 + h)))
    return rects


def _free_point(rng, rects, margin, side=4000.0):
    grown = inflate(np.array(rects), margin)
    while True:
        p = rng.uniform(60.0, side - 60.0, size=2)
        if not point_in_rects(p[None, :], grown, strict=False)[0]:
            return float(p[0]), float(p[1])


def _first_entry(origin, direction, length, rects, spacing=0.25):
    """Marching reference: first sampled distance strictly inside any rectangle, inf if none."""
    t = np.arange(0.0, length + spacing, spacing)
    points = np.asarray(origin)[None, :] + t[:, None] * np.asarray(direction)[None, :]
    inside = np.flatnonzero(point_in_rects(points, rects, strict=True))
    return float(t[inside[0]]) if len(inside) else math.inf


class TestSampledReference:
    """Exact queries against fine marching on rectangles grown and shrunk by one unit."""

    def test_line_of_sight_matches_marching(self):
        rng = np.random.default_rng(11)
        outcomes = set()
        for _ in range(20):
            rects = _random_rects(rng)
            world = build_world([(10.0, 10.0)], obstacles=rects)
            grown, shrunk = inflate(world.rects, 1.0), inflate(world.rects, -1.0)
            for _ in range(25):
                a, b = _free_point(rng, rects, 2.0), _free_point(rng, rects, 2.0)
                delta = np.subtract(b, a)
                length = float(np.hypot(*delta))
                direction = delta / length
                visible = line_of_sight(world, Vec2(*a), Vec2(*b))
                assert visible == line_of_sight(world, Vec2(*b), Vec2(*a))
                if _first_entry(a, direction, length, shrunk) <= length:
                    assert not visible, (a, b)
                if _first_entry(a, direction, length, grown) > length:
                    assert visible, (a, b)
                outcomes.add(visible)
        assert outcomes == {True, False}

    def test_raycast_distance_matches_marching(self):
        rng = np.random.default_rng(12)
        max_dist, tol = 2000.0, 0.5
        hits = 0
        for _ in range(20):
            rects = _random_rects(rng)
            world = build_world([(10.0, 10.0)], obstacles=rects)
            grown, shrunk = inflate(world.rects, 1.0), inflate(world.rects, -1.0)
            for _ in range(25):
                origin = _free_point(rng, rects, 2.0)
                angle = rng.uniform(0.0, 2.0 * math.pi)
                direction = (math.cos(angle), math.sin(angle))
                hit = raycast(world, Vec2(*origin), Vec2(*direction), max_dist, HitCategory.OBSTACLE)
                early = _first_entry(origin, direction, max_dist + 2.0, grown)
                late = _first_entry(origin, direction, max_dist + 2.0, shrunk)
                if hit is None:
                    assert late > max_dist - tol
                    continue
                hits += 1
                assert hit.category == HitCategory.OBSTACLE
                assert early - tol <= hit.distance <= late + tol
        assert hits > 50


def _random_commands(rng, world):
    return {
        a.id: ActionCommand(float(rng.uniform(-1.5, 1.5)), float(rng.uniform(-1.5, 1.5)), bool(rng.random() < 0.3))
        for a in world.agents
        if a.alive
    }


def _random_arena(rng):
    return ArenaConfig(
        arena_side=float(rng.choice([2000.0, 4000.0])),
        random_obstacles=int(rng.integers(0, 5)),
        wall_segments=int(rng.integers(0, 3)),
        random_ammo_stations=int(rng.integers(0, 4)),
        n_agents=int(rng.integers(1, 4)),
        unlimited_ammo=bool(rng.random() < 0.2),
    )


def test_random_stepping_keeps_state_consistent():
    rng = np.random.default_rng(5)
    configs = [eval_arena(), ArenaConfig(random_obstacles=6, random_ammo_stations=4, n_agents=3, ammo_respawn_steps=40)]
    for config in configs:
        for seed in range(5):
            world = spawn_episode(config, seed)
            blocked = inflate(world.rects, config.agent_radius)
            for _ in range(200):
                new, events = step(world, _random_commands(rng, world))
                for old, agent in zip(world.agents, new.agents):
                    taken = len(events.of(agent.id).hits_taken)
                    assert 0.0 <= agent.health <= old.health <= config.max_health
                    assert agent.health == max(0.0, old.health - taken * config.damage)
                    gained = config.ammo_quantum * len(events.of(agent.id).ammo_pickups)
                    fired = 0 if agent.unlimited_ammo else events.of(agent.id).shots_fired
                    assert agent.ammo == old.ammo - fired + gained
                    assert agent.ammo >= 0
                    x, y = agent.position
                    r = config.agent_radius
                    assert r <= x <= config.arena_side - r and r <= y <= config.arena_side - r
                    assert not point_in_rects(np.array([[x, y]]), blocked, strict=True)[0]
                    assert agent.position.distance_to(old.position) <= agent.speed * config.dt + 1e-9
                    assert agent.facing.length() == pytest.approx(1.0)
                assert len(new.agents[0].health_history) <= config.health_history
                world = new


def test_replay_is_bit_identical_across_random_configs():
    rng = np.random.default_rng(2024)
    for _ in range(20):
        config = _random_arena(rng)
        seed = int(rng.integers(0, 2**31))
        action_seed = int(rng.integers(0, 2**31))

        def play():
            world = spawn_episode(config, seed)
            actions = np.random.default_rng(action_seed)
            states = [world]
            for _ in range(60):
                world, _ = step(world, _random_commands(actions, world))
                states.append(world)
            return trajectory_hash(states)

        assert play() == play(), (config, seed)
