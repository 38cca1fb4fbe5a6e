import logging
from pathlib import Path
from typing import Any, List, Mapping, Optional

from ..arena.simulator import line_of_sight
from ..arena.world import ActionCommand, WorldState
from ..config.settings import BTConfig, resolve_resource
from .engine import tick
from .nodes import Blackboard, Node, TickTrace, bind_policies
from .parser import load_tree, parse_tree
from .tasks import target_of

logger = logging.getLogger(__name__)


class TreeController:
    """Drives one agent with a behavior tree and its own blackboard."""

    def __init__(
        self,
        tree: Node,
        config: Optional[BTConfig] = None,
        policies: Optional[Mapping[str, Any]] = None,
        fire_on_sight: Optional[bool] = None,
        keep_traces: bool = False,
    ):
        self.config = config or BTConfig()
        self.tree = bind_policies(tree, policies) if policies else tree
        self.fire_on_sight = self.config.fire_on_sight if fire_on_sight is None else fire_on_sight
        self.keep_traces = keep_traces
        self.traces: List[TickTrace] = []
        self.last_trace: Optional[TickTrace] = None
        self.blackboard = self._fresh_blackboard()

    @classmethod
    def from_text(cls, text: str, **kwargs) -> "TreeController":
        return cls(parse_tree(text), **kwargs)

    @classmethod
    def from_file(cls, path: Path, **kwargs) -> "TreeController":
        return cls(load_tree(resolve_resource(path)), **kwargs)

    def _fresh_blackboard(self) -> Blackboard:
        return Blackboard(healthy_window=self.config.healthy_window, fire_on_sight=self.fire_on_sight)

    def reset(self) -> None:
        self.blackboard = self._fresh_blackboard()
        self.traces = []
        self.last_trace = None

    def observe(self, world: WorldState, agent_id: int) -> None:
        """Refresh the target memory from what the agent can currently see."""
        bb = self.blackboard
        target = target_of(world, agent_id, bb)
        if target is None or not target.alive:
            return
        if line_of_sight(world, world.agents[agent_id].position, target.position):
            bb.last_seen = target.position
            bb.last_seen_step = world.step

    def act(self, world: WorldState, agent_id: int) -> ActionCommand:
        self.observe(world, agent_id)
        action, trace = tick(self.tree, self.blackboard, world, agent_id, self.config)
        if trace.no_task:
            logger.warning("agent %d: tree reached no task at step %d", agent_id, world.step)
        self.last_trace = trace
        if self.keep_traces:
            self.traces.append(trace)
        return action

