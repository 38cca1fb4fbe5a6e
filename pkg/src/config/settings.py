import copy
import hashlib
import json
import math
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import tomli_w
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..errors import ConfigError, UnknownSkillError

PROJECT_ROOT = Path(__file__).resolve().parents[2]


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ArenaConfig(StrictModel):
    """Geometry, physics constants and spawn rules of one arena."""

    arena_side: float = 4000.0
    tick_rate: int = 30
    agent_radius: float = 50.0
    move_speed: float = 600.0
    turn_rate_deg: float = 180.0
    projectile_speed: float = 2000.0
    fire_interval: float = 0.15
    damage: float = 10.0
    max_health: float = 100.0
    start_ammo: int = 10
    ammo_quantum: int = 10
    ammo_respawn_steps: int = 300
    station_radius: float = 50.0
    n_agents: int = 2
    unlimited_ammo: bool = False
    health_history: int = 90

    obstacles: List[Tuple[float, float, float, float]] = Field(default_factory=list)
    random_obstacles: int = 0
    obstacle_size: Tuple[float, float] = (150.0, 400.0)
    wall_segments: int = 0
    wall_length: Tuple[float, float] = (200.0, 600.0)
    wall_thickness: float = 40.0

    ammo_stations: List[Tuple[float, float]] = Field(default_factory=list)
    random_ammo_stations: int = 0

    min_separation: float = 0.0
    max_separation: Optional[float] = None
    require_occluded: bool = False
    spawn_attempts: int = 1000

    @model_validator(mode="after")
    def _check(self) -> "ArenaConfig":
        if self.arena_side <= 0 or self.tick_rate <= 0:
            raise ValueError("arena_side and tick_rate must be positive")
        if self.agent_radius <= 0 or self.agent_radius * 2 >= self.arena_side:
            raise ValueError("agent_radius must be positive and fit the arena")
        if self.n_agents < 1:
            raise ValueError("n_agents must be at least 1")
        for x0, y0, x1, y1 in self.obstacles:
            if not (x0 < x1 and y0 < y1):
                raise ValueError(f"obstacle ({x0}, {y0}, {x1}, {y1}) needs min < max")
            if x0 < 0 or y0 < 0 or x1 > self.arena_side or y1 > self.arena_side:
                raise ValueError(f"obstacle ({x0}, {y0}, {x1}, {y1}) leaves the arena")
        for x, y in self.ammo_stations:
            if not (0 < x < self.arena_side and 0 < y < self.arena_side):
                raise ValueError(f"ammo station ({x}, {y}) leaves the arena")
        if self.max_separation is not None and self.max_separation < self.min_separation:
            raise ValueError("max_separation must be >= min_separation")
        return self

    @property
    def dt(self) -> float:
        return 1.0 / self.tick_rate

    @property
    def cooldown_steps(self) -> int:
        # round() guards against 0.15 * 30 landing a hair above 4.5
        return max(1, math.ceil(round(self.fire_interval * self.tick_rate, 9)))

    @property
    def diagonal(self) -> float:
        return self.arena_side * math.sqrt(2.0)


class SensorConfig(StrictModel):
    ray_count: int = 36
    ray_range: float = 2000.0
    ammo_norm: float = 10.0
    health_norm: float = 100.0


class BTConfig(StrictModel):
    tree_file: str = "configs/trees/default.tree"
    aggressive_tree_file: str = "configs/trees/aggressive.tree"
    healthy_window: int = 90
    healthy_fraction: float = 0.5
    aim_tolerance_deg: float = 5.0
    eqs_samples: int = 33
    eqs_radii: Tuple[float, ...] = (400.0, 800.0, 1200.0)
    eqs_requery_steps: int = 15
    eqs_wall_margin: float = 300.0
    flee_weights: Dict[str, float] = Field(
        default_factory=lambda: {"player_distance": 1.0, "wall_proximity": 0.5}
    )
    hide_weights: Dict[str, float] = Field(
        default_factory=lambda: {"occluded": 10.0, "player_distance": 1.0, "travel": 0.5}
    )
    path_cell: float = 100.0
    replan_steps: int = 30
    waypoint_tolerance: float = 30.0
    fire_on_sight: bool = False


class PpoConfig(StrictModel):
    learning_rate: float = 3e-4
    gamma: float = 0.99
    gae_lambda: float = 1.0
    clip: float = 0.3
    vf_coeff: float = 1.0
    vf_clip: float = 10.0
    entropy_coeff: float = 0.0
    kl_coeff: float = 0.2
    kl_target: float = 0.01
    kl_increase: float = 2.0
    kl_decrease: float = 0.5
    train_batch: int = 4000
    minibatch: int = 128
    epochs: int = 30
    max_episode_steps: int = 2000
    n_envs: int = 8
    grad_clip: float = 40.0
    optimizer: Literal["adam", "sgd"] = "adam"
    dtype: Literal["float32", "float64"] = "float32"
    checkpoint_every: int = 10
    num_threads: int = 1

    @model_validator(mode="after")
    def _check(self) -> "PpoConfig":
        if not 0.0 < self.clip < 1.0:
            raise ValueError("clip must lie in (0, 1)")
        for name in ("learning_rate", "train_batch", "minibatch", "epochs", "n_envs", "max_episode_steps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.train_batch % self.n_envs:
            raise ValueError("train_batch must be a multiple of n_envs")
        return self

    @property
    def steps_per_env(self) -> int:
        return self.train_batch // self.n_envs


class RewardSpec(StrictModel):
    step: float = 0.0
    wall_collision: float = 0.0
    hit_landed: float = 0.0
    hit_taken: float = 0.0
    terminal: float = 0.0
    flee_distance: float = 1000.0


class OpponentConfig(StrictModel):
    """Scripted player. `tree` is BT-DSL text; None keeps the player idle."""

    tree: Optional[str] = None
    speed: float = 600.0
    fire_on_sight: bool = False
    unlimited_ammo: bool = False


class SkillEnvConfig(StrictModel):
    skill: str
    observation: Literal["core", "hide", "collect", "curriculum"] = "core"
    arena: ArenaConfig = Field(default_factory=ArenaConfig)
    agent_speed: Optional[float] = None
    agent_start_ammo: Optional[int] = None
    agent_unlimited_ammo: bool = False
    opponent: OpponentConfig = Field(default_factory=OpponentConfig)
    rewards: RewardSpec = Field(default_factory=RewardSpec)
    max_episode_steps: int = 2000
    total_steps: int = 2_000_000


class PhaseRewardSpec(StrictModel):
    shot_landed: float = 1.0
    wall_collision: float = -0.01
    shot_taken: float = 0.0
    move_when_empty: float = 0.0
    step_penalty: float = 0.0
    death_penalty: float = 0.0


class CurriculumPhaseConfig(StrictModel):
    phase: int
    name: str
    rewards: PhaseRewardSpec
    env: SkillEnvConfig
    total_steps: int


class HarnessConfig(StrictModel):
    max_steps: int = 10_000
    episodes: int = 100
    max_restarts: int = 10
    bench_steps: int = 100_000
    bench_repeats: int = 5
    histogram_bins: int = 20
    workers: int = 1


EVAL_OBSTACLES = [
    (900.0, 900.0, 1300.0, 1100.0),
    (2700.0, 900.0, 3100.0, 1100.0),
    (900.0, 2900.0, 1300.0, 3100.0),
    (2700.0, 2900.0, 3100.0, 3100.0),
    (1800.0, 1800.0, 2200.0, 2200.0),
    (400.0, 1800.0, 600.0, 2200.0),
    (3400.0, 1800.0, 3600.0, 2200.0),
    (1800.0, 400.0, 2200.0, 600.0),
    (1800.0, 3400.0, 2200.0, 3600.0),
]

EVAL_STATIONS = [
    (500.0, 500.0),
    (3500.0, 500.0),
    (500.0, 3500.0),
    (3500.0, 3500.0),
    (2000.0, 1200.0),
    (2000.0, 2800.0),
    (1200.0, 2000.0),
    (2800.0, 2000.0),
]

AGGRESSIVE_TREE = "(selector (sequence (in-sight) (task combat)) (task search))"


def eval_arena() -> ArenaConfig:
    return ArenaConfig(obstacles=EVAL_OBSTACLES, ammo_stations=EVAL_STATIONS, min_separation=1000.0)


def default_skill_configs() -> Dict[str, SkillEnvConfig]:
    """Canonical skill environments; rewards follow the per-skill reward table."""
    return {
        "flee": SkillEnvConfig(
            skill="flee",
            arena=ArenaConfig(min_separation=1500.0),
            opponent=OpponentConfig(tree="(task search)", speed=300.0),
            rewards=RewardSpec(step=0.001, terminal=-1.0, flee_distance=1000.0),
            total_steps=2_000_000,
        ),
        "advance": SkillEnvConfig(
            skill="advance",
            arena=ArenaConfig(
                wall_segments=8, wall_length=(400.0, 1200.0), wall_thickness=60.0, require_occluded=True
            ),
            opponent=OpponentConfig(speed=0.0),
            rewards=RewardSpec(step=-0.001, wall_collision=-0.01, terminal=1.0),
            total_steps=4_000_000,
        ),
        "combat": SkillEnvConfig(
            skill="combat",
            arena=ArenaConfig(min_separation=500.0),
            agent_speed=0.0,
            agent_unlimited_ammo=True,
            opponent=OpponentConfig(speed=0.0),
            rewards=RewardSpec(step=-0.001, hit_landed=0.1, terminal=1.0),
            total_steps=2_000_000,
        ),
        "hide": SkillEnvConfig(
            skill="hide",
            observation="hide",
            arena=ArenaConfig(random_obstacles=10, obstacle_size=(200.0, 500.0), require_occluded=True),
            opponent=OpponentConfig(tree="(task search)", speed=100.0),
            rewards=RewardSpec(step=0.001, terminal=-1.0),
            total_steps=10_000_000,
        ),
        "collect": SkillEnvConfig(
            skill="collect",
            observation="collect",
            arena=ArenaConfig(
                wall_segments=8, wall_length=(400.0, 1200.0), wall_thickness=60.0, random_ammo_stations=1
            ),
            agent_start_ammo=0,
            opponent=OpponentConfig(tree="(task search)", speed=300.0, fire_on_sight=True, unlimited_ammo=True),
            rewards=RewardSpec(step=-0.001, wall_collision=-0.01, hit_taken=-0.1, terminal=1.0),
            total_steps=12_000_000,
        ),
    }


def default_curriculum_phases() -> List[CurriculumPhaseConfig]:
    shooter = OpponentConfig(tree="(task combat)", speed=0.0)
    aggressive = OpponentConfig(tree=AGGRESSIVE_TREE, speed=600.0, unlimited_ammo=True)
    combat_rewards = PhaseRewardSpec(shot_landed=1.0, wall_collision=-0.01, shot_taken=-0.1)
    survival_rewards = PhaseRewardSpec(
        shot_landed=1.0, wall_collision=-0.01, death_penalty=-10.0, step_penalty=-0.001
    )
    return [
        CurriculumPhaseConfig(
            phase=1,
            name="combat",
            rewards=combat_rewards,
            total_steps=6_000_000,
            env=SkillEnvConfig(
                skill="curriculum",
                observation="curriculum",
                arena=ArenaConfig(min_separation=500.0),
                agent_speed=0.0,
                agent_unlimited_ammo=True,
                opponent=shooter,
            ),
        ),
        CurriculumPhaseConfig(
            phase=2,
            name="advance",
            rewards=combat_rewards,
            total_steps=2_000_000,
            env=SkillEnvConfig(
                skill="curriculum",
                observation="curriculum",
                arena=ArenaConfig(
                    wall_segments=8, wall_length=(400.0, 1200.0), wall_thickness=60.0, require_occluded=True
                ),
                agent_unlimited_ammo=True,
                opponent=shooter,
            ),
        ),
        CurriculumPhaseConfig(
            phase=3,
            name="move",
            rewards=PhaseRewardSpec(
                shot_landed=1.0, wall_collision=-0.01, shot_taken=-0.1, move_when_empty=5.0, step_penalty=-0.01
            ),
            total_steps=10_000_000,
            env=SkillEnvConfig(skill="curriculum", observation="curriculum", arena=eval_arena(), opponent=shooter),
        ),
        CurriculumPhaseConfig(
            phase=4,
            name="survival",
            rewards=survival_rewards,
            total_steps=12_000_000,
            env=SkillEnvConfig(
                skill="curriculum",
                observation="curriculum",
                arena=eval_arena().model_copy(update={"ammo_stations": []}),
                agent_unlimited_ammo=True,
                opponent=aggressive,
            ),
        ),
        CurriculumPhaseConfig(
            phase=5,
            name="strategy",
            rewards=survival_rewards,
            total_steps=10_000_000,
            env=SkillEnvConfig(
                skill="curriculum",
                observation="curriculum",
                arena=eval_arena().model_copy(update={"random_obstacles": 6}),
                opponent=aggressive,
            ),
        ),
    ]


class CurriculumConfig(StrictModel):
    phases: List[CurriculumPhaseConfig] = Field(default_factory=default_curriculum_phases)


class Settings(StrictModel):
    """Root of every resolved run configuration."""

    arena: ArenaConfig = Field(default_factory=eval_arena)
    sensors: SensorConfig = Field(default_factory=SensorConfig)
    btree: BTConfig = Field(default_factory=BTConfig)
    ppo: PpoConfig = Field(default_factory=PpoConfig)
    skills: Dict[str, SkillEnvConfig] = Field(default_factory=default_skill_configs)
    curriculum: CurriculumConfig = Field(default_factory=CurriculumConfig)
    harness: HarnessConfig = Field(default_factory=HarnessConfig)

    @model_validator(mode="after")
    def _check_health_window(self) -> "Settings":
        arenas = [self.arena, *(s.arena for s in self.skills.values()), *(p.env.arena for p in self.curriculum.phases)]
        shortest = min(a.health_history for a in arenas)
        if self.btree.healthy_window > shortest:
            raise ValueError(
                f"btree.healthy_window ({self.btree.healthy_window}) exceeds the stored health history ({shortest} steps)"
            )
        return self

    def skill(self, name: str) -> SkillEnvConfig:
        if name not in self.skills:
            raise UnknownSkillError(f"Unknown skill '{name}'. Expected one of {sorted(self.skills)}")
        return self.skills[name]


def deep_merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    """Recursively merge `update` into a copy of `base`; lists are replaced."""
    merged = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        elif isinstance(value, list) and isinstance(merged.get(key), list) and key == "phases":
            merged[key] = [
                deep_merge(old, new) if isinstance(old, dict) and isinstance(new, dict) else new
                for old, new in zip(merged[key], value)
            ] + value[len(merged[key]):]
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def parse_override(text: str) -> Tuple[List[str], Any]:
    """Split `a.b.c=value`; the value is read as a TOML literal, else kept as a string."""
    if "=" not in text:
        raise ConfigError(f"Override '{text}' is not of the form key=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"Override '{text}' has an empty key")
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return key.split("."), value


def apply_overrides(data: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    data = copy.deepcopy(data)
    for text in overrides:
        path, value = parse_override(text)
        node = data
        for part in path[:-1]:
            if part.isdigit() and isinstance(node, list):
                node = node[int(part)]
                continue
            node = node.setdefault(part, {})
            if not isinstance(node, (dict, list)):
                raise ConfigError(f"Override '{text}' descends into a scalar at '{part}'")
        last = path[-1]
        if isinstance(node, list) and last.isdigit():
            node[int(last)] = value
        else:
            node[last] = value
    return data


def load_settings(path: Optional[os.PathLike] = None, overrides: Sequence[str] = ()) -> Settings:
    """Resolve defaults < file < overrides into a validated Settings."""
    data = Settings().model_dump(mode="json")
    if path is not None:
        try:
            with open(path, "rb") as f:
                file_data = tomllib.load(f)
        except FileNotFoundError as e:
            raise ConfigError(f"Config file not found: {path}") from e
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"Config file {path} is not valid TOML: {e}") from e
        data = deep_merge(data, file_data)
    data = apply_overrides(data, overrides)
    try:
        return Settings.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration: {e}") from e


def _strip_none(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _strip_none(v) for k, v in value.items() if v is not None}
    if isinstance(value, list):
        return [_strip_none(v) for v in value]
    return value


def dump_settings(settings: Settings, path: os.PathLike) -> None:
    """Write the resolved-config snapshot (TOML has no null, so unset options are omitted)."""
    data = _strip_none(settings.model_dump(mode="json"))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        tomli_w.dump(data, f)


def config_hash(model: BaseModel) -> str:
    payload = json.dumps(model.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def resolve_resource(path: os.PathLike) -> Path:
    """Find a shipped file relative to the working directory or the project root."""
    candidate = Path(path)
    if candidate.is_absolute() or candidate.exists():
        return candidate
    rooted = PROJECT_ROOT / candidate
    if rooted.exists():
        return rooted
    raise ConfigError(f"Resource not found: {path}")


def output_root() -> Path:
    return Path(os.getenv("SBRL_OUTPUT_ROOT", "results"))
