"""
Grid path planning for scripted movement.

The arena is rasterized into square cells; a cell is blocked when its centre
lies inside an obstacle inflated by the agent radius or closer to an arena
wall than the radius. Search is 8-connected A* without corner cutting.
"""
import heapq
import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..arena.geometry import Vec2, inflate, point_in_rects, segments_blocked
from ..arena.world import WorldState

Cell = Tuple[int, int]

_STEPS = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)]


@dataclass(frozen=True)
class OccupancyGrid:
    cell: float
    size: int
    blocked: np.ndarray  # (size, size) indexed [ix, iy]

    def center(self, c: Cell) -> Vec2:
        return Vec2((c[0] + 0.5) * self.cell, (c[1] + 0.5) * self.cell)

    def cell_of(self, p: Vec2) -> Cell:
        ix = min(self.size - 1, max(0, int(p.x // self.cell)))
        iy = min(self.size - 1, max(0, int(p.y // self.cell)))
        return ix, iy

    def free(self, c: Cell) -> bool:
        return 0 <= c[0] < self.size and 0 <= c[1] < self.size and not self.blocked[c]

    def neighbours(self, c: Cell):
        x, y = c
        for dx, dy in _STEPS:
            n = (x + dx, y + dy)
            if not self.free(n):
                continue
            if dx and dy and not (self.free((x + dx, y)) and self.free((x, y + dy))):
                continue
            yield n, (math.sqrt(2.0) if dx and dy else 1.0)


@lru_cache(maxsize=64)
def build_grid(obstacles: Tuple[Tuple[float, float, float, float], ...], side: float, radius: float, cell: float) -> OccupancyGrid:
    size = max(1, int(math.ceil(side / cell)))
    centers = (np.arange(size) + 0.5) * cell
    xs, ys = np.meshgrid(centers, centers, indexing="ij")
    points = np.stack([xs.ravel(), ys.ravel()], axis=1)
    rects = inflate(np.array(obstacles, dtype=float).reshape(-1, 4), radius)
    blocked = point_in_rects(points, rects, strict=False)
    near_wall = (points < radius).any(axis=1) | (points > side - radius).any(axis=1)
    return OccupancyGrid(cell, size, (blocked | near_wall).reshape(size, size))


def grid_for(world: WorldState, cell: float) -> OccupancyGrid:
    return build_grid(
        tuple(o.as_tuple() for o in world.obstacles), world.arena_side, world.config.agent_radius, cell
    )


def _octile(a: Cell, b: Cell) -> float:
    dx, dy = abs(a[0] - b[0]), abs(a[1] - b[1])
    return max(dx, dy) + (math.sqrt(2.0) - 1.0) * min(dx, dy)


def astar(grid: OccupancyGrid, start: Cell, goal: Cell) -> Tuple[List[Cell], float]:
    """Cheapest cell path in cell units; ([], inf) when unreachable."""
    if not (grid.free(start) and grid.free(goal)):
        return [], math.inf
    counter = itertools.count()
    frontier = [(_octile(start, goal), next(counter), start)]
    cost: Dict[Cell, float] = {start: 0.0}
    parent: Dict[Cell, Optional[Cell]] = {start: None}
    closed = set()
    while frontier:
        _, _, current = heapq.heappop(frontier)
        if current == goal:
            path = [current]
            while parent[path[-1]] is not None:
                path.append(parent[path[-1]])
            return path[::-1], cost[goal]
        if current in closed:
            continue
        closed.add(current)
        for nxt, step_cost in grid.neighbours(current):
            g = cost[current] + step_cost
            if g < cost.get(nxt, math.inf) - 1e-12:
                cost[nxt] = g
                parent[nxt] = current
                heapq.heappush(frontier, (g + _octile(nxt, goal), next(counter), nxt))
    return [], math.inf


def _nearest_free(grid: OccupancyGrid, c: Cell, max_ring: int = 3) -> Optional[Cell]:
    if grid.free(c):
        return c
    for ring in range(1, max_ring + 1):
        best = None
        for dx in range(-ring, ring + 1):
            for dy in range(-ring, ring + 1):
                if max(abs(dx), abs(dy)) != ring:
                    continue
                n = (c[0] + dx, c[1] + dy)
                if grid.free(n):
                    d = dx * dx + dy * dy
                    if best is None or d < best[0]:
                        best = (d, n)
        if best is not None:
            return best[1]
    return None


def _drop_collinear(points: List[Vec2]) -> List[Vec2]:
    if len(points) < 3:
        return points
    kept = [points[0]]
    for prev, cur, nxt in zip(points, points[1:], points[2:]):
        if abs((cur - prev).cross(nxt - cur)) > 1e-9:
            kept.append(cur)
    kept.append(points[-1])
    return kept


def plan_path(world: WorldState, start: Vec2, goal: Vec2, cell: float = 100.0) -> List[Vec2]:
    """Waypoints from start to goal, both included; empty when the goal is unreachable."""
    side = world.arena_side
    if not (0.0 <= goal.x <= side and 0.0 <= goal.y <= side):
        return []
    if point_in_rects(np.array([goal], dtype=float), world.rects, strict=True)[0]:
        return []
    inflated = inflate(world.rects, world.config.agent_radius)
    if not segments_blocked(np.array([start], dtype=float), np.array([goal], dtype=float), inflated)[0]:
        return [start, goal]

    grid = grid_for(world, cell)
    start_cell = _nearest_free(grid, grid.cell_of(start))
    goal_cell = _nearest_free(grid, grid.cell_of(goal))
    if start_cell is None or goal_cell is None:
        return []
    cells, _ = astar(grid, start_cell, goal_cell)
    if not cells:
        return []
    return _drop_collinear([start] + [grid.center(c) for c in cells[1:-1]] + [goal])
