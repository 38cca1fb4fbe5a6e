"""
Agent specifications and the controllers built from them.
"""
import logging
from collections import deque
from pathlib import Path
from typing import Deque, Dict, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict

from ..arena.world import NOOP, ActionCommand, WorldState
from ..btree.controller import TreeController
from ..btree.nodes import task_leaves
from ..btree.parser import load_tree
from ..config.settings import Settings, resolve_resource
from ..errors import ConfigError
from ..policy.runner import PolicyRunner

logger = logging.getLogger(__name__)

AGENT_KINDS = ("bt", "hybrid", "curriculum", "static", "aggressive", "idle")

# Weight file each tree task loads in a hybrid agent.
TASK_SKILL_FILES = {
    "combat": "combat.sbrl",
    "search": "advance.sbrl",
    "flee": "flee.sbrl",
    "hide": "hide.sbrl",
    "collect": "collect.sbrl",
}


class AgentSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: str
    tree: Optional[str] = None
    models: Optional[str] = None

    @property
    def unlimited_ammo(self) -> bool:
        return self.kind == "aggressive"

    def describe(self) -> str:
        """Inverse of `parse_agent_spec`."""
        if self.kind == "hybrid" and self.tree:
            return f"hybrid:{self.models}@{self.tree}"
        extra = self.models or self.tree
        return f"{self.kind}:{extra}" if extra else self.kind


def parse_agent_spec(text: str) -> AgentSpec:
    """Read `bt`, `path.tree`, `bt:path.tree`, `hybrid:models_dir`, `curriculum:file.sbrl`,
    `static`, `aggressive` or `idle` (alias `no-model`)."""
    text = text.strip()
    kind, _, arg = text.partition(":")
    kind = {"no-model": "idle", "none": "idle"}.get(kind, kind)
    if kind not in AGENT_KINDS:
        if text.endswith(".tree"):
            return AgentSpec(kind="bt", tree=text)
        raise ConfigError(f"Unknown agent '{text}'. Expected one of {', '.join(AGENT_KINDS)} or a .tree file")
    if kind in ("bt", "aggressive"):
        return AgentSpec(kind=kind, tree=arg or None)
    if kind == "hybrid":
        if not arg:
            raise ConfigError("hybrid agents need a models directory, e.g. hybrid:results/skills")
        tree = None
        if "@" in arg:
            arg, tree = arg.split("@", 1)
        return AgentSpec(kind=kind, models=arg, tree=tree)
    if kind == "curriculum":
        if not arg:
            raise ConfigError("curriculum agents need a weight file, e.g. curriculum:results/curriculum.sbrl")
        return AgentSpec(kind=kind, models=arg)
    if arg:
        raise ConfigError(f"'{kind}' agents take no argument")
    return AgentSpec(kind=kind)


class IdleController:
    """Never moves, never shoots."""

    last_trace = None

    def reset(self) -> None:
        pass

    def act(self, world: WorldState, agent_id: int) -> ActionCommand:
        return NOOP


class PolicyController:
    """Whole-agent policy (curriculum baseline) with its own observation window."""

    last_trace = None

    def __init__(self, runner: PolicyRunner):
        self.runner = runner
        self.history: Deque[np.ndarray] = deque(maxlen=runner.max_seq)

    def reset(self) -> None:
        self.history.clear()

    def act(self, world: WorldState, agent_id: int) -> ActionCommand:
        self.history.append(self.runner.observe(world, agent_id))
        return self.runner.act(list(self.history))


def _hybrid_policies(spec: AgentSpec, tree, settings: Settings) -> Dict[str, PolicyRunner]:
    directory = Path(spec.models)
    if not directory.is_dir():
        raise ConfigError(f"Hybrid models directory not found: {directory}")
    policies = {}
    for kind in sorted({leaf.kind for leaf in task_leaves(tree)}):
        path = directory / TASK_SKILL_FILES[kind]
        if path.exists():
            policies[kind] = PolicyRunner.from_file(path, settings.sensors)
        else:
            logger.warning("no %s in %s, task '%s' stays scripted", path.name, directory, kind)
    if not policies:
        raise ConfigError(f"Hybrid models directory {directory} holds no skill weight files")
    return policies


def build_controller(spec: AgentSpec, settings: Settings, keep_traces: bool = False):
    if spec.kind in ("static", "idle"):
        return IdleController()
    if spec.kind == "curriculum":
        return PolicyController(PolicyRunner.from_file(resolve_resource(spec.models), settings.sensors))

    default_file = settings.btree.aggressive_tree_file if spec.kind == "aggressive" else settings.btree.tree_file
    tree = load_tree(resolve_resource(spec.tree or default_file))
    policies = _hybrid_policies(spec, tree, settings) if spec.kind == "hybrid" else None
    return TreeController(tree, config=settings.btree, policies=policies, keep_traces=keep_traces)
