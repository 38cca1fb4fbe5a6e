"""
Head-to-head matches, replay traces and trace verification.
"""
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

from ..arena.simulator import spawn_episode, step
from ..arena.trace import TraceWriter, file_hash, read_trace, record_hash, state_hash
from ..arena.world import StepEvents, WorldState
from ..config.settings import ArenaConfig, Settings, config_hash
from ..errors import TraceVerificationError
from .controllers import AgentSpec, build_controller, parse_agent_spec

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MatchResult:
    winner: Optional[int]  # None on a draw or a restart
    steps: int
    damage_dealt: Tuple[float, float]
    restarted: bool
    seed: int

    def to_dict(self) -> dict:
        return asdict(self)


StepHook = Callable[[WorldState, StepEvents, Sequence], None]


def _match_world(specs: Sequence[AgentSpec], arena: ArenaConfig, seed: int) -> WorldState:
    world = spawn_episode(arena.model_copy(update={"n_agents": 2}), seed)
    for agent, spec in zip(world.agents, specs):
        if spec.unlimited_ammo:
            agent.unlimited_ammo = True
    return world


def run_match(
    spec_a: AgentSpec,
    spec_b: AgentSpec,
    arena: ArenaConfig,
    seed: int,
    settings: Optional[Settings] = None,
    max_steps: Optional[int] = None,
    on_step: Optional[StepHook] = None,
    controllers: Optional[Sequence] = None,
) -> MatchResult:
    """Play until one side dies or the step limit forces a restart."""
    settings = settings or Settings()
    limit = max_steps if max_steps is not None else settings.harness.max_steps
    if controllers is None:
        controllers = [build_controller(spec_a, settings), build_controller(spec_b, settings)]
    for controller in controllers:
        controller.reset()
    world = _match_world((spec_a, spec_b), arena, seed)

    while world.step < limit:
        actions = {a.id: controllers[a.id].act(world, a.id) for a in world.agents if a.alive}
        world, events = step(world, actions)
        if on_step is not None:
            on_step(world, events, controllers)
        if events.deaths:
            alive = [a.id for a in world.agents if a.alive]
            winner = alive[0] if len(alive) == 1 else None
            return MatchResult(winner, world.step, _damage(world), False, seed)
    logger.debug("seed %d hit the %d-step limit", seed, limit)
    return MatchResult(None, world.step, _damage(world), True, seed)


def _damage(world: WorldState) -> Tuple[float, float]:
    return (world.agents[0].damage_dealt, world.agents[1].damage_dealt)


def trace_match(
    spec_a: AgentSpec,
    spec_b: AgentSpec,
    arena: ArenaConfig,
    seed: int,
    out: Path,
    settings: Optional[Settings] = None,
    max_steps: Optional[int] = None,
) -> Tuple[MatchResult, str]:
    """Run a match writing a replay trace to `out` and tick traces beside it."""
    settings = settings or Settings()
    out = Path(out)
    limit = max_steps if max_steps is not None else settings.harness.max_steps
    header = {
        "seed": seed,
        "a": spec_a.describe(),
        "b": spec_b.describe(),
        "max_steps": limit,
        "arena": arena.model_dump(mode="json"),
        "config_hash": config_hash(settings),
    }
    controllers = [build_controller(spec_a, settings), build_controller(spec_b, settings)]
    tick_path = out.with_name(out.stem + ".ticks.jsonl")

    with TraceWriter(out, header) as writer, open(tick_path, "w", encoding="utf-8") as ticks:
        writer.record(_match_world((spec_a, spec_b), arena, seed))

        def on_step(world, events, ctrls):
            writer.record(world)
            for agent_id, ctrl in enumerate(ctrls):
                trace = ctrl.last_trace
                if trace is None:
                    continue
                record = {
                    "step": world.step - 1,
                    "agent": agent_id,
                    "in_sight": events.in_sight.get((agent_id, 1 - agent_id), False),
                    **trace.to_record(),
                }
                ticks.write(json.dumps(record) + "\n")

        result = run_match(spec_a, spec_b, arena, seed, settings, limit, on_step, controllers)
        digest = writer.close()
    logger.info("trace written to %s (%d steps, hash %s)", out, result.steps, digest[:12])
    return result, digest


def verify_trace(path: Path, settings: Optional[Settings] = None) -> str:
    """Re-simulate a trace and check every stored state; returns the file hash."""
    settings = settings or Settings()
    header, records = read_trace(path)
    recorded = header.get("config_hash")
    if recorded is not None and recorded != config_hash(settings):
        raise TraceVerificationError(
            f"{path}: recorded with config {recorded[:12]}, replaying with {config_hash(settings)[:12]}; "
            "pass the same --config and --override values used to record it"
        )
    for number, record in enumerate(records):
        content = {k: v for k, v in record.items() if k not in ("kind", "hash")}
        if record_hash(content) != record.get("hash"):
            raise TraceVerificationError(f"{path}: record {number} does not match its stored hash")

    arena = ArenaConfig.model_validate(header["arena"])
    specs = (parse_agent_spec(header["a"]), parse_agent_spec(header["b"]))
    replayed: List[str] = [state_hash(_match_world(specs, arena, header["seed"]))]

    def on_step(world, events, ctrls):
        replayed.append(state_hash(world))

    run_match(specs[0], specs[1], arena, header["seed"], settings, header["max_steps"], on_step)
    stored = [r["hash"] for r in records]
    if len(stored) != len(replayed):
        raise TraceVerificationError(f"{path}: trace has {len(stored)} states, replay produced {len(replayed)}")
    for number, (a, b) in enumerate(zip(stored, replayed)):
        if a != b:
            raise TraceVerificationError(f"{path}: state {number} diverges from the replay")
    return file_hash(path)
