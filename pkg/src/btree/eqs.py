"""
Environment queries: sample candidate points around an agent and pick the
best one under a weighted score.
"""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ..arena.geometry import Vec2, distance_to_rects, inflate, point_in_rects, segments_blocked
from ..arena.world import WorldState
from ..errors import MissingTargetError


@dataclass(frozen=True)
class EqsCriteria:
    kind: str  # "flee" or "hide"
    weights: Dict[str, float] = field(default_factory=dict)
    wall_margin: float = 300.0

    def scaled(self, k: float) -> "EqsCriteria":
        return EqsCriteria(self.kind, {name: w * k for name, w in self.weights.items()}, self.wall_margin)


def query_rng(world: WorldState, agent_id: int) -> np.random.Generator:
    """Per-query generator derived from the episode seed; never advances the world's own stream."""
    return np.random.default_rng([abs(world.seed), world.step, agent_id])


def candidate_points(
    world: WorldState, agent_id: int, n_samples: int, radii: Sequence[float]
) -> List[Tuple[int, Vec2]]:
    """(index, point) for every valid candidate. Index 0 is the agent's own position."""
    origin = world.agents[agent_id].position
    raw = [origin]
    ring = n_samples - 1
    if ring > 0:
        phase = float(query_rng(world, agent_id).uniform(0.0, 2.0 * math.pi))
        for k in range(ring):
            angle = phase + 2.0 * math.pi * k / ring
            raw.append(origin + Vec2.from_angle(angle) * radii[k % len(radii)])

    r = world.config.agent_radius
    side = world.arena_side
    points = np.array(raw, dtype=float)
    inside = np.all((points >= r) & (points <= side - r), axis=1)
    clear = ~point_in_rects(points, inflate(world.rects, r), strict=True)
    valid = inside & clear
    valid[0] = True
    return [(i, raw[i]) for i in range(len(raw)) if valid[i]]


def score_candidates(world: WorldState, agent_id: int, points: List[Vec2], criteria: EqsCriteria) -> np.ndarray:
    agent = world.agents[agent_id]
    player = world.target_of(agent_id)
    if player is None:
        raise MissingTargetError(f"Agent {agent_id} has no player to query against")
    diag = world.config.diagonal
    pts = np.array(points, dtype=float)
    to_player = np.hypot(pts[:, 0] - player.position.x, pts[:, 1] - player.position.y) / diag
    w = criteria.weights

    if criteria.kind == "flee":
        side = world.arena_side
        wall = np.minimum.reduce([pts[:, 0], pts[:, 1], side - pts[:, 0], side - pts[:, 1]])
        obstacle = np.array([distance_to_rects(p, world.rects) for p in points])
        clearance = np.minimum(wall, obstacle)
        proximity = np.maximum(0.0, 1.0 - clearance / criteria.wall_margin)
        return w.get("player_distance", 0.0) * to_player - w.get("wall_proximity", 0.0) * proximity

    if criteria.kind == "hide":
        starts = np.tile(np.array([player.position], dtype=float), (len(pts), 1))
        occluded = segments_blocked(starts, pts, world.rects).astype(float)
        travel = np.hypot(pts[:, 0] - agent.position.x, pts[:, 1] - agent.position.y) / diag
        return (
            w.get("occluded", 0.0) * occluded
            + w.get("player_distance", 0.0) * to_player
            - w.get("travel", 0.0) * travel
        )
    raise ValueError(f"Unknown EQS criteria kind '{criteria.kind}'")


def argmax_lowest(scores: np.ndarray, rel_tol: float = 1e-9) -> int:
    """Index of the best score; near-ties within rel_tol go to the lowest index."""
    best = float(np.max(scores))
    tol = rel_tol * float(np.max(np.abs(scores)))
    return int(np.flatnonzero(scores >= best - tol)[0])


def eqs_query(
    world: WorldState,
    agent_id: int,
    criteria: EqsCriteria,
    n_samples: int,
    radii: Sequence[float] = (400.0, 800.0, 1200.0),
) -> Vec2:
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    candidates = candidate_points(world, agent_id, n_samples, radii)
    points = [p for _, p in candidates]
    scores = score_candidates(world, agent_id, points, criteria)
    return points[argmax_lowest(scores)]
