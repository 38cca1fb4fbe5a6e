"""
Behavior-tree node types, per-agent blackboard and tick traces.
"""
import enum
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Any, Deque, Dict, List, Mapping, NamedTuple, Optional, Tuple, Union

import numpy as np

from ..arena.geometry import Vec2

CONDITION_KINDS = ("dist-lt", "dist-gt", "in-sight", "healthy", "ammo-empty")
TASK_KINDS = ("combat", "search", "flee", "hide", "collect")
# Skill names that refer to the same task leaf.
TASK_ALIASES = {"advance": "search", "move": "collect"}


class Status(enum.Enum):
    SUCCESS = "success"
    FAILURE = "failure"
    RUNNING = "running"


@dataclass(frozen=True)
class Selector:
    id: int
    children: Tuple["Node", ...]

    @property
    def label(self) -> str:
        return "selector"


@dataclass(frozen=True)
class Sequence:
    id: int
    children: Tuple["Node", ...]

    @property
    def label(self) -> str:
        return "sequence"


@dataclass(frozen=True)
class Condition:
    id: int
    kind: str
    threshold: Optional[float] = None
    negate: bool = False

    @property
    def label(self) -> str:
        text = self.kind if self.threshold is None else f"{self.kind} {self.threshold:g}"
        return f"not {text}" if self.negate else text


@dataclass(frozen=True)
class Task:
    """Leaf that produces the action. `policy` set means the leaf runs a learned model."""

    id: int
    kind: str
    policy: Optional[Any] = field(default=None, compare=False)

    @property
    def label(self) -> str:
        return f"task {self.kind}" + (" [policy]" if self.policy is not None else "")


Node = Union[Selector, Sequence, Condition, Task]


def iter_nodes(node: Node):
    """Pre-order walk."""
    yield node
    if isinstance(node, (Selector, Sequence)):
        for child in node.children:
            yield from iter_nodes(child)


def task_leaves(node: Node) -> List[Task]:
    return [n for n in iter_nodes(node) if isinstance(n, Task)]


def bind_policies(node: Node, policies: Mapping[str, Any]) -> Node:
    """Copy of the tree with each task whose kind is in `policies` running that model."""
    if isinstance(node, Task):
        if node.kind in policies:
            return replace(node, policy=policies[node.kind])
        return node
    if isinstance(node, (Selector, Sequence)):
        return replace(node, children=tuple(bind_policies(c, policies) for c in node.children))
    return node


def to_dsl(node: Node) -> str:
    if isinstance(node, Selector):
        return "(selector " + " ".join(to_dsl(c) for c in node.children) + ")"
    if isinstance(node, Sequence):
        return "(sequence " + " ".join(to_dsl(c) for c in node.children) + ")"
    if isinstance(node, Condition):
        inner = f"({node.kind})" if node.threshold is None else f"({node.kind} {node.threshold:g})"
        return f"(not {inner})" if node.negate else inner
    return f"(task {node.kind})"


class TraceEntry(NamedTuple):
    node_id: int
    label: str
    status: Status


@dataclass
class TickTrace:
    """Completion-ordered node statuses for one tick."""

    entries: List[TraceEntry] = field(default_factory=list)
    active_task: Optional[int] = None
    active_kind: Optional[str] = None
    no_task: bool = False

    def status_of(self, node_id: int) -> Optional[Status]:
        for entry in self.entries:
            if entry.node_id == node_id:
                return entry.status
        return None

    def to_record(self) -> Dict[str, Any]:
        return {
            "active": self.active_kind,
            "active_id": self.active_task,
            "no_task": self.no_task,
            "nodes": [[e.node_id, e.label, e.status.value] for e in self.entries],
        }


@dataclass
class Blackboard:
    target_id: Optional[int] = None
    last_seen: Optional[Vec2] = None
    last_seen_step: Optional[int] = None
    healthy_window: int = 90
    fire_on_sight: bool = False

    eqs_point: Optional[Vec2] = None
    eqs_step: Optional[int] = None
    eqs_kind: Optional[str] = None

    path: List[Vec2] = field(default_factory=list)
    path_goal: Optional[Vec2] = None
    path_step: Optional[int] = None

    active_leaf: Optional[int] = None
    histories: Dict[int, Deque[np.ndarray]] = field(default_factory=dict)

    def history(self, leaf_id: int, maxlen: int) -> Deque[np.ndarray]:
        if leaf_id not in self.histories:
            self.histories[leaf_id] = deque(maxlen=maxlen)
        return self.histories[leaf_id]

    def clear_navigation(self) -> None:
        self.path = []
        self.path_goal = None
        self.path_step = None
