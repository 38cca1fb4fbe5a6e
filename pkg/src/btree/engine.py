"""
Tick semantics.

Every tick starts at the root. A selector returns the first child status that
is not Failure, a sequence the first that is not Success. Task leaves report
Running and the first one reached supplies the agent's action.
"""
from typing import Callable, Optional, Tuple

from ..arena.simulator import line_of_sight
from ..arena.world import NOOP, ActionCommand, WorldState
from ..config.settings import BTConfig
from .nodes import Blackboard, Condition, Node, Selector, Sequence, Status, Task, TickTrace, TraceEntry
from .tasks import run_task, target_of

ConditionEvaluator = Callable[[Condition, WorldState, int, Blackboard], bool]
TaskRunner = Callable[[Task, WorldState, int, Blackboard], Tuple[Status, ActionCommand]]


def eval_condition(
    kind: str,
    world: WorldState,
    agent_id: int,
    blackboard: Blackboard,
    threshold: Optional[float] = None,
    config: Optional[BTConfig] = None,
) -> bool:
    config = config or BTConfig()
    agent = world.agents[agent_id]
    if kind == "healthy":
        floor = config.healthy_fraction * world.config.max_health
        return agent.health >= floor and agent.window_min(blackboard.healthy_window) >= floor
    if kind == "ammo-empty":
        return not agent.unlimited_ammo and agent.ammo == 0

    target = target_of(world, agent_id, blackboard)
    if target is None or not target.alive:
        return False
    if kind == "in-sight":
        return line_of_sight(world, agent.position, target.position)
    distance = agent.position.distance_to(target.position)
    if kind == "dist-lt":
        return distance < threshold
    if kind == "dist-gt":
        return distance > threshold
    raise ValueError(f"Unknown condition '{kind}'")


def tick(
    tree: Node,
    blackboard: Blackboard,
    world: WorldState,
    agent_id: int,
    config: Optional[BTConfig] = None,
    condition_evaluator: Optional[ConditionEvaluator] = None,
    task_runner: Optional[TaskRunner] = None,
) -> Tuple[ActionCommand, TickTrace]:
    config = config or BTConfig()
    if condition_evaluator is None:

        def condition_evaluator(node, w, i, bb):
            return eval_condition(node.kind, w, i, bb, node.threshold, config)

    if task_runner is None:

        def task_runner(node, w, i, bb):
            return Status.RUNNING, run_task(node, w, i, bb, config)

    trace = TickTrace()
    chosen = [NOOP]

    def visit(node: Node) -> Status:
        if isinstance(node, Selector):
            status = Status.FAILURE
            for child in node.children:
                status = visit(child)
                if status is not Status.FAILURE:
                    break
        elif isinstance(node, Sequence):
            status = Status.SUCCESS
            for child in node.children:
                status = visit(child)
                if status is not Status.SUCCESS:
                    break
        elif isinstance(node, Condition):
            value = bool(condition_evaluator(node, world, agent_id, blackboard))
            status = Status.SUCCESS if value != node.negate else Status.FAILURE
        else:
            status, action = task_runner(node, world, agent_id, blackboard)
            if status is Status.RUNNING and trace.active_task is None:
                trace.active_task = node.id
                trace.active_kind = node.kind
                chosen[0] = action
        trace.entries.append(TraceEntry(node.id, node.label, status))
        return status

    visit(tree)
    trace.no_task = trace.active_task is None
    return chosen[0], trace
