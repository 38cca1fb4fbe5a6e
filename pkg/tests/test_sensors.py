import math
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np
import pytest

from src.arena.simulator import spawn_episode, step
from src.arena.world import ActionCommand
from src.config.settings import ArenaConfig, SensorConfig
from src.errors import ConfigError, MissingTargetError
from src.sensors.encoder import (
    encode_collect_aux,
    encode_core,
    encode_hide_aux,
    encode_observation,
    observation_width,
)
from src.sensors.schema import observation_schema, write_schema
from tests.helpers import build_world

SENSORS = SensorConfig()
DIAGONAL = 4000.0 * math.sqrt(2.0)


def _ray(obs, k):
    return obs[4 * k:4 * k + 4].tolist()


def test_widths():
    assert observation_width("core", SENSORS) == 148
    assert observation_width("hide", SENSORS) == 150
    assert observation_width("collect", SENSORS) == 151
    assert observation_width("curriculum", SENSORS) == 153
    with pytest.raises(ConfigError):
        observation_width("sonar", SENSORS)


def test_ray_fan_channels():
    world = build_world([(500.0, 500.0), (600.0, 500.0)], stations=[(500.0, 300.0)])
    obs = encode_core(world, 0, 2000.0)
    assert obs.shape == (148,)
    assert _ray(obs, 0) == pytest.approx([0.025, 1.0, 0.0, 0.0])  # opponent straight ahead
    assert _ray(obs, 9) == pytest.approx([1.0, 0.0, 0.0, 0.0])  # nothing within range to the north
    assert _ray(obs, 18) == pytest.approx([0.25, 0.0, 1.0, 0.0])  # west wall
    assert _ray(obs, 27) == pytest.approx([0.075, 0.0, 0.0, 1.0])  # station to the south


def test_rays_follow_facing():
    world = build_world([(500.0, 500.0), (500.0, 600.0)], facings=[(0.0, 1.0), (1.0, 0.0)])
    obs = encode_core(world, 0, 2000.0)
    assert _ray(obs, 0)[1] == 1.0


def test_own_state_scalars():
    world = build_world([(500.0, 500.0), (500.0, 900.0)])
    world.agents[0].health = 40.0
    world.agents[0].ammo = 5
    health, ammo, dx, dy = encode_core(world, 0, 2000.0)[-4:]
    assert (health, ammo) == pytest.approx((0.4, 0.5))
    # facing east, target due north: straight to the left
    assert (dx, dy) == pytest.approx((0.0, 1.0))

    world.agents[0].unlimited_ammo = True
    assert encode_core(world, 0, 2000.0)[-3] == 1.0


def test_values_stay_in_range():
    world = build_world([(100.0, 3900.0), (3900.0, 100.0)], obstacles=[(1000.0, 1000.0, 3000.0, 3000.0)])
    obs = encode_observation(world, 0, "curriculum", SENSORS)
    assert obs.shape == (153,)
    assert np.all(np.isfinite(obs))
    assert np.all(obs >= -1.0) and np.all(obs <= 1.0)


def test_missing_target():
    world = build_world([(500.0, 500.0)])
    with pytest.raises(MissingTargetError):
        encode_core(world, 0, 2000.0)


def test_hide_aux():
    open_world = build_world([(500.0, 500.0), (900.0, 500.0)])
    assert encode_hide_aux(open_world, 0).tolist() == [1.0, 1.0]

    covered = build_world([(500.0, 500.0), (900.0, 500.0)], obstacles=[(650.0, 400.0, 750.0, 600.0)])
    assert encode_hide_aux(covered, 0).tolist() == pytest.approx([0.0, 0.375])


def test_collect_aux_station_ahead():
    world = build_world([(500.0, 500.0), (2000.0, 2000.0)], stations=[(600.0, 500.0), (3000.0, 3000.0)])
    assert encode_collect_aux(world, 0).tolist() == pytest.approx([1.0, 0.0, 100.0 / DIAGONAL])


def test_collect_aux_skips_spent_stations():
    world = build_world([(500.0, 500.0), (2000.0, 2000.0)], stations=[(600.0, 500.0), (500.0, 900.0)])
    world.ammo_stations[0].respawn_timer = 10
    assert encode_collect_aux(world, 0).tolist() == pytest.approx([0.0, 1.0, 400.0 / DIAGONAL])

    world.ammo_stations[1].respawn_timer = 10
    assert encode_collect_aux(world, 0).tolist() == [0.0, 0.0, 1.0]


def test_schema_covers_the_vector(tmp_path):
    fields = observation_schema("curriculum", SENSORS)
    assert sum(f.width for f in fields) == 153
    assert [f.name for f in fields][-2:] == ["dir_to_ammo", "dist_to_ammo"]
    for prev, cur in zip(fields, fields[1:]):
        assert cur.offset == prev.offset + prev.width

    path = write_schema(tmp_path / "obs.toml", "hide", SENSORS)
    with open(path, "rb") as f:
        document = tomllib.load(f)
    assert document["width"] == 150
    assert document["fields"][-1]["name"] == "frac_dist_to_block"


RANDOM_ARENA = ArenaConfig(random_obstacles=6, wall_segments=2, random_ammo_stations=4, n_agents=2)


def _wander(world, rng, steps):
    for _ in range(steps):
        moves = {
            a.id: ActionCommand(float(rng.uniform(-1, 1)), float(rng.uniform(-1, 1)), bool(rng.random() < 0.2))
            for a in world.agents
            if a.alive
        }
        world, _ = step(world, moves)
    return world


def _quarter_turn(world):
    """The same world rotated 90 degrees counterclockwise about the arena centre."""
    side = world.arena_side

    def turn(x, y):
        return side - y, x

    return build_world(
        [turn(*a.position) for a in world.agents],
        obstacles=[(side - o.y1, o.x0, side - o.y0, o.x1) for o in world.obstacles],
        stations=[turn(*s.position) for s in world.ammo_stations],
        facings=[(-a.facing.y, a.facing.x) for a in world.agents],
        targets=[a.target for a in world.agents],
        arena_side=side,
    )


def test_random_worlds_stay_in_range():
    rng = np.random.default_rng(3)
    n = SENSORS.ray_count
    for seed in range(20):
        world = _wander(spawn_episode(RANDOM_ARENA, seed), rng, int(rng.integers(0, 60)))
        for agent in world.agents:
            if not agent.alive:
                continue
            obs = encode_observation(world, agent.id, "curriculum", SENSORS)
            assert np.all(np.isfinite(obs))
            assert np.all(obs >= -1.0) and np.all(obs <= 1.0)
            rays = obs[:4 * n].reshape(n, 4)
            assert np.all(rays[:, 0] >= 0.0)
            assert np.all(rays[:, 1:].sum(axis=1) <= 1.0)
            assert np.all(rays[rays[:, 1:].sum(axis=1) == 0.0, 0] == 1.0)
            assert 0.0 <= obs[4 * n] <= 1.0 and 0.0 <= obs[4 * n + 1] <= 1.0
            assert math.hypot(obs[4 * n + 2], obs[4 * n + 3]) == pytest.approx(1.0)


def test_rotating_the_world_leaves_the_observation_unchanged():
    for seed in range(10):
        world = spawn_episode(RANDOM_ARENA, seed)
        expected = encode_observation(world, 0, "curriculum", SENSORS)
        turned = world
        for _ in range(3):
            turned = _quarter_turn(turned)
            assert encode_observation(turned, 0, "curriculum", SENSORS) == pytest.approx(expected, abs=1e-6)
