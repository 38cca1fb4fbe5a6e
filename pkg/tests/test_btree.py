import heapq
import itertools
import math
from pathlib import Path

import numpy as np
import pytest

from src.arena.geometry import Vec2, segments_blocked
from src.arena.simulator import line_of_sight, spawn_episode
from src.arena.world import NOOP, ActionCommand
from src.btree.controller import TreeController
from src.btree.engine import eval_condition, tick
from src.btree.eqs import EqsCriteria, argmax_lowest, candidate_points, eqs_query
from src.btree.nodes import Blackboard, Condition, Selector, Status, Task, iter_nodes, task_leaves, to_dsl
from src.btree.parser import load_tree, parse_tree
from src.btree.planner import OccupancyGrid, astar, plan_path
from src.btree.tasks import aim_error_deg, to_command
from src.config.settings import PROJECT_ROOT, ArenaConfig, BTConfig
from src.errors import MissingTargetError, TreeParseError
from tests.helpers import build_world

DEFAULT_TREE = PROJECT_ROOT / "configs" / "trees" / "default.tree"
AGGRESSIVE = "(selector (sequence (in-sight) (task combat)) (task search))"


class TestParser:
    def test_default_tree_ids_are_preorder(self):
        tree = load_tree(DEFAULT_TREE)
        assert isinstance(tree, Selector) and tree.id == 0
        leaves = {leaf.id: leaf.kind for leaf in task_leaves(tree)}
        assert leaves == {6: "flee", 7: "hide", 10: "collect", 13: "combat", 14: "search"}
        guard = tree.children[0].children[0]
        assert guard == Condition(2, "healthy", None, True)

    def test_dsl_round_trip(self):
        tree = load_tree(DEFAULT_TREE)
        assert parse_tree(to_dsl(tree)) == tree

    def test_task_aliases(self):
        tree = parse_tree("(selector (task advance) (task move))")
        assert [leaf.kind for leaf in task_leaves(tree)] == ["search", "collect"]

    def test_comments_and_whitespace(self):
        tree = parse_tree("; guard\n(sequence\n  (dist-gt 2.5e2) ; far\n  (task combat))")
        assert tree.children[0].threshold == 250.0

    @pytest.mark.parametrize(
        "source, line, column",
        [
            ("(selector (task fly))", 1, 17),
            ("(sellector (task combat))", 1, 2),
            ("(selector\n  (dist-lt abc))", 2, 12),
            ("(selector (task combat)", 1, 1),
            ("(task combat) (task search)", 1, 15),
            ("(healthy 3)", 1, 10),
            ("(not (task combat))", 1, 6),
        ],
    )
    def test_errors_point_at_the_token(self, source, line, column):
        with pytest.raises(TreeParseError) as excinfo:
            parse_tree(source)
        assert (excinfo.value.line, excinfo.value.column) == (line, column)

    @pytest.mark.parametrize("source", ["", "(dist-lt)", "(selector)", "()", "combat", "(dist-lt inf)"])
    def test_malformed_sources(self, source):
        with pytest.raises(TreeParseError):
            parse_tree(source)


def _stub_tick(tree, truths, failing=()):
    def conditions(node, world, agent_id, bb):
        return truths[node.kind]

    def tasks(node, world, agent_id, bb):
        if node.kind in failing:
            return Status.FAILURE, NOOP
        return Status.RUNNING, ActionCommand(float(node.id), 0.0)

    return tick(tree, Blackboard(), None, 0, BTConfig(), conditions, tasks)


_LEAF_SOURCES = [
    "(healthy)",
    "(not (healthy))",
    "(in-sight)",
    "(ammo-empty)",
    "(not (in-sight))",
    "(dist-lt 500)",
    "(dist-gt 1200)",
    "(task combat)",
    "(task search)",
    "(task flee)",
    "(task hide)",
    "(task collect)",
]


def _random_source(rng, depth):
    """Random tree text; depth counts the composite levels still allowed."""
    if depth == 0 or rng.random() < 0.3:
        return _LEAF_SOURCES[rng.integers(len(_LEAF_SOURCES))]
    kind = "selector" if rng.random() < 0.5 else "sequence"
    children = [_random_source(rng, depth - 1) for _ in range(rng.integers(1, 4))]
    return f"({kind} " + " ".join(children) + ")"


def _direct(node, truths, outcomes):
    """(status, id of the running task that stopped the walk)."""
    if isinstance(node, Condition):
        return (Status.SUCCESS if truths[node.id] != node.negate else Status.FAILURE), None
    if isinstance(node, Task):
        status = outcomes[node.id]
        return status, (node.id if status is Status.RUNNING else None)
    keep_going = Status.FAILURE if isinstance(node, Selector) else Status.SUCCESS
    for child in node.children:
        status, running = _direct(child, truths, outcomes)
        if status is not keep_going:
            return status, running
    return keep_going, None


class TestEngine:
    def test_default_tree_truth_table(self):
        tree = load_tree(DEFAULT_TREE)
        for healthy, near, empty, seen in itertools.product([False, True], repeat=4):
            truths = {"healthy": healthy, "dist-lt": near, "ammo-empty": empty, "in-sight": seen}
            if not healthy:
                expected = "flee" if near else "hide"
            elif empty:
                expected = "collect"
            elif seen:
                expected = "combat"
            else:
                expected = "search"
            action, trace = _stub_tick(tree, truths)
            assert trace.active_kind == expected, truths
            assert action.lateral == float(trace.active_task)
            assert not trace.no_task

    def test_failed_task_falls_through(self):
        tree = parse_tree(AGGRESSIVE)
        _, trace = _stub_tick(tree, {"in-sight": True}, failing=("combat",))
        assert trace.active_kind == "search"
        assert trace.status_of(3) is Status.FAILURE
        assert trace.status_of(0) is Status.RUNNING

    def test_no_task_is_a_noop(self):
        tree = parse_tree("(sequence (in-sight) (task combat))")
        action, trace = _stub_tick(tree, {"in-sight": False})
        assert action == NOOP
        assert trace.no_task and trace.active_task is None
        assert trace.status_of(2) is None

    def test_trace_is_completion_ordered(self):
        tree = parse_tree(AGGRESSIVE)
        _, trace = _stub_tick(tree, {"in-sight": False})
        assert [e.node_id for e in trace.entries] == [2, 1, 4, 0]
        record = trace.to_record()
        assert record["active"] == "search" and record["nodes"][0] == [2, "in-sight", "failure"]

    def test_random_trees_match_a_direct_evaluator(self):
        rng = np.random.default_rng(8)
        for _ in range(200):
            tree = parse_tree(_random_source(rng, depth=3))
            for _ in range(8):
                truths = {n.id: bool(rng.random() < 0.5) for n in iter_nodes(tree) if isinstance(n, Condition)}
                outcomes = {
                    leaf.id: [Status.SUCCESS, Status.FAILURE, Status.RUNNING][rng.integers(3)] for leaf in task_leaves(tree)
                }

                def conditions(node, world, agent_id, bb):
                    return truths[node.id]

                def tasks(node, world, agent_id, bb):
                    return outcomes[node.id], ActionCommand(float(node.id), 0.0)

                action, trace = tick(tree, Blackboard(), None, 0, BTConfig(), conditions, tasks)
                status, running = _direct(tree, truths, outcomes)
                assert trace.status_of(tree.id) is status, to_dsl(tree)
                assert trace.active_task == running
                assert trace.no_task == (running is None)
                assert action == (NOOP if running is None else ActionCommand(float(running), 0.0))


class TestConditions:
    def test_health_window(self):
        world = build_world([(500.0, 500.0), (900.0, 500.0)])
        bb = Blackboard()
        assert eval_condition("healthy", world, 0, bb)
        agent = world.agents[0]
        agent.health = 40.0
        agent.health_history = agent.health_history + (40.0,)
        assert not eval_condition("healthy", world, 0, bb)
        agent.health = 100.0
        agent.health_history = agent.health_history + (100.0,)
        assert not eval_condition("healthy", world, 0, bb)

    def test_ammo_empty(self):
        world = build_world([(500.0, 500.0), (900.0, 500.0)])
        bb = Blackboard()
        assert not eval_condition("ammo-empty", world, 0, bb)
        world.agents[0].ammo = 0
        assert eval_condition("ammo-empty", world, 0, bb)
        world.agents[0].unlimited_ammo = True
        assert not eval_condition("ammo-empty", world, 0, bb)

    def test_distance_and_sight(self):
        world = build_world([(500.0, 500.0), (900.0, 500.0)], obstacles=[(650.0, 400.0, 750.0, 600.0)])
        bb = Blackboard()
        assert eval_condition("dist-lt", world, 0, bb, 1000.0)
        assert not eval_condition("dist-gt", world, 0, bb, 1000.0)
        assert not eval_condition("in-sight", world, 0, bb)
        world.agents[1].health = 0.0
        assert not eval_condition("dist-lt", world, 0, bb, 1000.0)


class TestEqs:
    def test_argmax_prefers_lowest_index(self):
        assert argmax_lowest(np.array([1.0, 3.0, 3.0])) == 1
        assert argmax_lowest(np.array([1.0, 3.0, 3.0 + 1e-12])) == 1
        assert argmax_lowest(np.array([0.0, 0.0])) == 0

    def test_single_sample_is_own_position(self):
        world = build_world([(500.0, 500.0), (900.0, 500.0)])
        criteria = EqsCriteria("flee", {"player_distance": 1.0})
        assert eqs_query(world, 0, criteria, 1) == Vec2(500.0, 500.0)

    def test_candidates_stay_inside_the_arena(self):
        world = build_world([(100.0, 100.0), (900.0, 500.0)])
        r = world.config.agent_radius
        for _, p in candidate_points(world, 0, 33, (400.0, 800.0, 1200.0)):
            assert r <= p.x <= world.arena_side - r and r <= p.y <= world.arena_side - r

    def test_query_is_deterministic(self):
        world = build_world([(1600.0, 2000.0), (2000.0, 2000.0)])
        criteria = EqsCriteria("flee", {"player_distance": 1.0, "wall_proximity": 0.5})
        assert eqs_query(world, 0, criteria, 33) == eqs_query(world, 0, criteria, 33)

    def test_flee_moves_away(self):
        world = build_world([(1600.0, 2000.0), (2000.0, 2000.0)])
        criteria = EqsCriteria("flee", {"player_distance": 1.0, "wall_proximity": 0.5})
        point = eqs_query(world, 0, criteria, 33)
        assert point.distance_to(Vec2(2000.0, 2000.0)) > 400.0

    def test_hide_finds_cover(self):
        world = build_world([(2000.0, 2000.0), (2000.0, 1000.0)], obstacles=[(1400.0, 2300.0, 2600.0, 2500.0)])
        criteria = EqsCriteria("hide", {"occluded": 10.0, "player_distance": 1.0, "travel": 0.5})
        point = eqs_query(world, 0, criteria, 33)
        assert not line_of_sight(world, Vec2(2000.0, 1000.0), point)

    def test_needs_a_player(self):
        world = build_world([(500.0, 500.0)])
        with pytest.raises(MissingTargetError):
            eqs_query(world, 0, EqsCriteria("hide", {"occluded": 1.0}), 5)

    @pytest.mark.parametrize("kind", ["flee", "hide"])
    def test_positive_weight_scaling_keeps_the_choice(self, kind):
        config = BTConfig()
        weights = config.flee_weights if kind == "flee" else config.hide_weights
        criteria = EqsCriteria(kind, weights, config.eqs_wall_margin)
        arena = ArenaConfig(random_obstacles=6, wall_segments=2)
        for seed in range(15):
            world = spawn_episode(arena, seed)
            chosen = eqs_query(world, 0, criteria, config.eqs_samples, config.eqs_radii)
            for k in (0.25, 2.0, 1024.0):
                assert eqs_query(world, 0, criteria.scaled(k), config.eqs_samples, config.eqs_radii) == chosen, (seed, k)


def _dijkstra(grid, start, goal):
    best = {start: 0.0}
    frontier = [(0.0, start)]
    while frontier:
        cost, cell = heapq.heappop(frontier)
        if cell == goal:
            return cost
        if cost > best[cell]:
            continue
        for nxt, step_cost in grid.neighbours(cell):
            if cost + step_cost < best.get(nxt, math.inf):
                best[nxt] = cost + step_cost
                heapq.heappush(frontier, (cost + step_cost, nxt))
    return math.inf


class TestPlanner:
    def test_astar_matches_dijkstra(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            blocked = rng.random((12, 12)) < 0.3
            blocked[0, 0] = blocked[11, 11] = False
            grid = OccupancyGrid(1.0, 12, blocked)
            cells, cost = astar(grid, (0, 0), (11, 11))
            expected = _dijkstra(grid, (0, 0), (11, 11))
            if math.isinf(expected):
                assert cells == [] and math.isinf(cost)
            else:
                assert cost == pytest.approx(expected)
                assert cells[0] == (0, 0) and cells[-1] == (11, 11)

    def test_no_corner_cutting(self):
        blocked = np.zeros((3, 3), dtype=bool)
        blocked[1, 0] = True
        grid = OccupancyGrid(1.0, 3, blocked)
        assert (1, 1) not in [n for n, _ in grid.neighbours((0, 0))]

    def test_clear_line_is_direct(self):
        world = build_world([(500.0, 500.0), (900.0, 500.0)])
        assert plan_path(world, Vec2(500.0, 500.0), Vec2(1500.0, 1500.0)) == [Vec2(500.0, 500.0), Vec2(1500.0, 1500.0)]

    def test_routes_around_a_wall(self):
        world = build_world([(1500.0, 2000.0), (2500.0, 2000.0)], obstacles=[(1900.0, 1000.0, 2100.0, 3000.0)])
        start, goal = Vec2(1500.0, 2000.0), Vec2(2500.0, 2000.0)
        path = plan_path(world, start, goal)
        assert path[0] == start and path[-1] == goal and len(path) > 2
        legs = np.array(path[:-1]), np.array(path[1:])
        assert not segments_blocked(legs[0], legs[1], world.rects).any()

    def test_goal_inside_obstacle(self):
        world = build_world([(500.0, 500.0), (900.0, 500.0)], obstacles=[(1900.0, 1000.0, 2100.0, 3000.0)])
        assert plan_path(world, Vec2(500.0, 500.0), Vec2(2000.0, 2000.0)) == []


class _StubRunner:
    max_seq = 3

    def __init__(self):
        self.lengths = []

    def observe(self, world, agent_id):
        return np.zeros(4)

    def act(self, history):
        self.lengths.append(len(history))
        return ActionCommand(0.5, 0.0, True)


class TestTasks:
    def test_to_command_projects_on_target_axes(self):
        world = build_world([(500.0, 500.0), (900.0, 500.0)])
        assert to_command(world, 0, Vec2(1.0, 0.0)) == ActionCommand(0.0, 1.0, False)
        assert to_command(world, 0, Vec2(0.0, -1.0)) == ActionCommand(1.0, 0.0, False)

    def test_aim_error(self):
        world = build_world([(500.0, 500.0), (900.0, 500.0)])
        assert aim_error_deg(world.agents[0], Vec2(900.0, 500.0)) == pytest.approx(0.0)
        assert aim_error_deg(world.agents[0], Vec2(500.0, 900.0)) == pytest.approx(90.0)

    def test_aggressive_fires_when_aimed(self):
        controller = TreeController.from_text(AGGRESSIVE)
        world = build_world([(500.0, 500.0), (900.0, 500.0)])
        action = controller.act(world, 0)
        assert action.shoot
        assert controller.last_trace.active_kind == "combat"

    def test_search_moves_toward_hidden_target(self):
        controller = TreeController.from_text(AGGRESSIVE)
        world = build_world([(500.0, 500.0), (1500.0, 500.0)], obstacles=[(900.0, 300.0, 1100.0, 700.0)])
        action = controller.act(world, 0)
        assert controller.last_trace.active_kind == "search"
        assert not action.shoot
        assert (action.lateral, action.forward) != (0.0, 0.0)

    def test_collect_heads_for_nearest_station(self):
        controller = TreeController.from_text("(task collect)")
        world = build_world([(500.0, 500.0), (3000.0, 3000.0)], stations=[(900.0, 500.0), (100.0, 3900.0)])
        world.agents[0].target = None
        action = controller.act(world, 0)
        assert (action.lateral, action.forward) == pytest.approx((0.0, 1.0))

    def test_policy_leaf_histories(self):
        stub = _StubRunner()
        controller = TreeController(parse_tree(AGGRESSIVE), policies={"combat": stub})
        assert [leaf.kind for leaf in task_leaves(controller.tree) if leaf.policy is not None] == ["combat"]
        world = build_world([(500.0, 500.0), (900.0, 500.0)])
        for _ in range(5):
            assert controller.act(world, 0) == ActionCommand(0.5, 0.0, True)
        assert stub.lengths == [1, 2, 3, 3, 3]

        hidden = build_world([(500.0, 500.0), (1500.0, 500.0)], obstacles=[(900.0, 300.0, 1100.0, 700.0)])
        controller.act(hidden, 0)
        controller.act(world, 0)
        assert stub.lengths[-1] == 1

    def test_controller_remembers_last_seen(self):
        controller = TreeController.from_text(AGGRESSIVE)
        world = build_world([(500.0, 500.0), (900.0, 500.0)])
        controller.act(world, 0)
        assert controller.blackboard.last_seen == Vec2(900.0, 500.0)
        controller.reset()
        assert controller.blackboard.last_seen is None


def test_shipped_trees_parse():
    for name in ("default.tree", "aggressive.tree"):
        tree = load_tree(Path(PROJECT_ROOT) / "configs" / "trees" / name)
        assert all(isinstance(leaf, Task) for leaf in task_leaves(tree))
