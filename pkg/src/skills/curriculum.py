import json
import logging
from functools import partial
from pathlib import Path
from typing import Optional, Sequence

from ..config.settings import Settings, config_hash
from ..errors import ConfigError
from ..policy.network import spec_for_skill
from ..policy.serialization import PolicyParams, save_params
from ..ppo.trainer import PPOTrainer
from ..sensors.schema import write_schema
from .environments import make_curriculum_env

logger = logging.getLogger(__name__)


def run_curriculum(
    settings: Settings,
    seed: int,
    out_dir: Optional[Path] = None,
    phases: Optional[Sequence[int]] = None,
    steps_per_phase: Optional[int] = None,
) -> PolicyParams:
    """Train one policy through the phases in order, carrying parameters across boundaries."""
    spec = spec_for_skill("curriculum", settings.sensors, seed=seed)
    selected = [p for p in settings.curriculum.phases if phases is None or p.phase in phases]
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "metrics.jsonl").unlink(missing_ok=True)
        write_schema(out_dir / "curriculum.schema.toml", spec.observation, settings.sensors)

    params: Optional[PolicyParams] = None
    consumed = 0
    for phase in selected:
        budget = steps_per_phase if steps_per_phase is not None else phase.total_steps
        logger.info("curriculum phase %d (%s): %d steps", phase.phase, phase.name, budget)
        trainer = PPOTrainer(
            partial(make_curriculum_env, phase, settings=settings),
            spec,
            settings.ppo,
            seed + phase.phase,
            budget,
            None if out_dir is None else out_dir / f"phase{phase.phase}",
            label=f"phase{phase.phase}",
            initial=params,
            metadata={"skill": "curriculum", "phase": phase.phase, "config_hash": config_hash(settings)},
        )
        params = trainer.train()
        consumed += trainer.steps_done
        if out_dir is not None:
            with open(out_dir / "metrics.jsonl", "a", encoding="utf-8") as f:
                for record in trainer.metrics:
                    f.write(json.dumps({"phase": phase.phase, **record}) + "\n")
                boundary = {"event": "phase_end", "phase": phase.phase, "name": phase.name, "steps": consumed}
                f.write(json.dumps(boundary) + "\n")

    if params is None:
        raise ConfigError("No curriculum phases selected")
    if out_dir is not None:
        save_params(
            params,
            out_dir / "curriculum.sbrl",
            {"skill": "curriculum", "training_steps": consumed, "seed": seed, "config_hash": config_hash(settings)},
        )
    return params
