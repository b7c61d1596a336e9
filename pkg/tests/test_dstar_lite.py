import math

import numpy as np
import pytest

from pomapf.dstar_lite import DStarLitePlanner, GoalBlocked, StalePlanner
from pomapf.gridworld import Action, Coord, generate_map
from pomapf.shared_map import BLOCKED, FREE, UNKNOWN, BeliefMap, MapDelta, fuse

from helpers import dijkstra_cost

INF = math.inf


def known_empty(width, height):
    cells = np.full((height, width), FREE, dtype=np.int8)
    return BeliefMap(width, height, cells)


def reveal(belief, grid, cells):
    """Fuse ground-truth values for the given coordinates."""
    entries = [((r, c), int(grid.blocked[r, c])) for (r, c) in cells]
    return fuse(belief, MapDelta.from_entries(entries))


class TestInit:
    def test_queue_holds_goal_with_heuristic_key(self):
        belief = known_empty(3, 3)
        planner = DStarLitePlanner(belief, Coord(0, 0), Coord(2, 2))
        assert planner.queue_cells() == {Coord(2, 2)}
        assert planner.rhs_at(Coord(2, 2)) == 0
        assert planner.g_at(Coord(2, 2)) == INF
        assert planner.km == 0

    def test_goal_blocked_rejected(self):
        belief = known_empty(3, 3)
        belief.cells[2, 2] = BLOCKED
        with pytest.raises(GoalBlocked):
            DStarLitePlanner(belief, Coord(0, 0), Coord(2, 2))

    def test_start_equals_goal(self):
        belief = known_empty(3, 3)
        planner = DStarLitePlanner(belief, Coord(1, 1), Coord(1, 1))
        result = planner.compute_shortest_path()
        assert result.path_cost == 0
        assert result.next_action == Action.WAIT


class TestComputeShortestPath:
    def test_empty_grid_manhattan_cost(self):
        belief = known_empty(3, 3)
        planner = DStarLitePlanner(belief, Coord(0, 0), Coord(2, 2))
        assert planner.compute_shortest_path().path_cost == 4

    def test_unreachable_start(self):
        belief = known_empty(5, 5)
        for c in range(5):
            belief.cells[2, c] = BLOCKED
        planner = DStarLitePlanner(belief, Coord(0, 0), Coord(4, 4))
        result = planner.compute_shortest_path()
        assert result.path_cost == INF
        assert result.next_action is None

    def test_routes_around_wall(self):
        belief = known_empty(5, 5)
        for r in range(4):
            belief.cells[r, 2] = BLOCKED
        planner = DStarLitePlanner(belief, Coord(0, 0), Coord(0, 4))
        # around the wall: down to row 4 and back up
        assert planner.compute_shortest_path().path_cost == 12

    def test_matches_dijkstra_on_random_beliefs(self):
        rng = np.random.default_rng(77)
        for trial in range(100):
            grid = generate_map(20, 20, 0.3, int(rng.integers(2**31)))
            belief = BeliefMap.from_truth(grid)
            free = grid.free_cells()
            start = free[rng.integers(len(free))]
            goal = free[rng.integers(len(free))]
            planner = DStarLitePlanner(belief, start, goal)
            got = planner.compute_shortest_path().path_cost
            expected = dijkstra_cost(belief, start, goal)
            assert got == expected, f"trial {trial}: {start}->{goal} {got} != {expected}"

    def test_local_consistency_outside_queue(self):
        grid = generate_map(12, 12, 0.25, seed=5)
        belief = BeliefMap.from_truth(grid)
        free = grid.free_cells()
        planner = DStarLitePlanner(belief, free[0], free[-1])
        planner.compute_shortest_path()
        queued = planner.queue_cells()
        for r in range(12):
            for c in range(12):
                cell = Coord(r, c)
                if cell not in queued:
                    assert planner.g_at(cell) == planner.rhs_at(cell)


class TestApplyBeliefDelta:
    def test_empty_delta_is_identity(self):
        belief = known_empty(4, 4)
        planner = DStarLitePlanner(belief, Coord(0, 0), Coord(3, 3))
        before = planner.compute_shortest_path()
        km = planner.km
        planner.apply_belief_delta(MapDelta.empty(), Coord(0, 0))
        after = planner.compute_shortest_path()
        assert planner.km == km
        assert (before.path_cost, before.next_action) == (after.path_cost, after.next_action)

    def test_blocking_unique_corridor_disconnects(self):
        belief = known_empty(3, 3)
        belief.cells[1, 0] = BLOCKED
        belief.cells[1, 2] = BLOCKED
        belief.cells[1, 1] = UNKNOWN  # the corridor cell is not yet observed
        planner = DStarLitePlanner(belief, Coord(0, 0), Coord(2, 2))
        assert planner.compute_shortest_path().path_cost == 4
        changed = fuse(belief, MapDelta.from_entries([((1, 1), int(BLOCKED))]))
        planner.apply_belief_delta(changed, Coord(0, 0))
        result = planner.compute_shortest_path()
        assert result.path_cost == INF
        assert result.next_action is None

    def test_km_grows_with_movement(self):
        belief = known_empty(6, 6)
        belief.cells[3, 3] = UNKNOWN
        planner = DStarLitePlanner(belief, Coord(0, 0), Coord(5, 5))
        planner.compute_shortest_path()
        changed = fuse(belief, MapDelta.from_entries([((3, 3), int(BLOCKED))]))
        planner.apply_belief_delta(changed, Coord(2, 0))
        assert planner.km == 2
        assert planner.last_start == Coord(2, 0)

    def test_interleaved_deltas_match_oracle(self):
        rng = np.random.default_rng(123)
        for trial in range(40):
            grid = generate_map(16, 16, 0.3, int(rng.integers(2**31)))
            belief = BeliefMap.unknown(16, 16)
            free = grid.free_cells()
            start = free[rng.integers(len(free))]
            goal = free[rng.integers(len(free))]
            planner = DStarLitePlanner(belief, start, goal)
            assert planner.compute_shortest_path().path_cost == dijkstra_cost(
                belief, start, goal
            )
            pos = start
            for _ in range(8):
                rr, cc = int(rng.integers(16)), int(rng.integers(16))
                window = [
                    (r, c)
                    for r in range(max(0, rr - 2), min(16, rr + 3))
                    for c in range(max(0, cc - 2), min(16, cc + 3))
                ]
                changed = reveal(belief, grid, window)
                pos = free[rng.integers(len(free))]
                planner.apply_belief_delta(changed, pos)
                got = planner.compute_shortest_path(start=pos).path_cost
                expected = dijkstra_cost(belief, pos, goal)
                assert got == expected

    def test_incremental_equals_fresh_planner(self):
        rng = np.random.default_rng(9)
        grid = generate_map(14, 14, 0.25, seed=31)
        belief = BeliefMap.unknown(14, 14)
        free = grid.free_cells()
        start, goal = free[3], free[-3]
        planner = DStarLitePlanner(belief, start, goal)
        planner.compute_shortest_path()
        for _ in range(10):
            cell = free[rng.integers(len(free))]
            window = [
                (r, c)
                for r in range(max(0, cell[0] - 1), min(14, cell[0] + 2))
                for c in range(max(0, cell[1] - 1), min(14, cell[1] + 2))
            ]
            changed = reveal(belief, grid, window)
            planner.apply_belief_delta(changed, start)
            incremental = planner.compute_shortest_path(start=start)
            fresh = DStarLitePlanner(belief.copy(), start, goal).compute_shortest_path()
            assert incremental.path_cost == fresh.path_cost


class TestGetFirstAction:
    def test_wait_at_goal(self):
        belief = known_empty(4, 4)
        planner = DStarLitePlanner(belief, Coord(2, 2), Coord(2, 2))
        planner.compute_shortest_path()
        assert planner.get_first_action(Coord(2, 2)) == Action.WAIT

    def test_corridor_descent(self):
        belief = known_empty(5, 1)
        planner = DStarLitePlanner(belief, Coord(0, 0), Coord(0, 4))
        planner.compute_shortest_path()
        assert planner.get_first_action(Coord(0, 0)) == Action.RIGHT

    def test_none_when_unreachable(self):
        belief = known_empty(3, 3)
        belief.cells[0, 1] = BLOCKED
        belief.cells[1, 0] = BLOCKED
        belief.cells[1, 1] = BLOCKED
        planner = DStarLitePlanner(belief, Coord(0, 0), Coord(2, 2))
        planner.compute_shortest_path()
        assert planner.get_first_action(Coord(0, 0)) is None

    def test_tie_break_fixed_action_order(self):
        # from (1,1) to (3,3): DOWN and RIGHT both descend; DOWN wins.
        belief = known_empty(5, 5)
        planner = DStarLitePlanner(belief, Coord(1, 1), Coord(3, 3))
        planner.compute_shortest_path()
        assert planner.get_first_action(Coord(1, 1)) == Action.DOWN

    def test_stale_after_unapplied_fuse(self):
        belief = BeliefMap.unknown(4, 4)
        planner = DStarLitePlanner(belief, Coord(0, 0), Coord(3, 3))
        planner.compute_shortest_path()
        fuse(belief, MapDelta.from_entries([((1, 1), int(BLOCKED))]))
        with pytest.raises(StalePlanner):
            planner.get_first_action(Coord(0, 0))

    def test_stale_after_delta_without_compute(self):
        belief = BeliefMap.unknown(4, 4)
        planner = DStarLitePlanner(belief, Coord(0, 0), Coord(3, 3))
        planner.compute_shortest_path()
        changed = fuse(belief, MapDelta.from_entries([((1, 1), int(BLOCKED))]))
        planner.apply_belief_delta(changed, Coord(0, 0))
        with pytest.raises(StalePlanner):
            planner.get_first_action(Coord(0, 0))


class TestMonotoneDescent:
    @pytest.mark.parametrize("seed", [1, 2, 3, 4, 5])
    def test_descent_reaches_goal_in_path_cost_steps(self, seed):
        rng = np.random.default_rng(seed)
        grid = generate_map(15, 15, 0.3, seed)
        belief = BeliefMap.from_truth(grid)
        free = grid.free_cells()
        start = free[rng.integers(len(free))]
        goal = free[rng.integers(len(free))]
        planner = DStarLitePlanner(belief, start, goal)
        cost = planner.compute_shortest_path().path_cost
        if cost == INF:
            return
        pos = start
        g_prev = planner.g_at(pos)
        for _ in range(int(cost)):
            action = planner.get_first_action(pos)
            dr, dc = {
                Action.UP: (-1, 0),
                Action.DOWN: (1, 0),
                Action.LEFT: (0, -1),
                Action.RIGHT: (0, 1),
            }[action]
            pos = Coord(pos[0] + dr, pos[1] + dc)
            planner.compute_shortest_path(start=pos)
            assert planner.g_at(pos) == g_prev - 1
            g_prev = planner.g_at(pos)
        assert pos == goal


class TestReplanFromScratch:
    def test_reinitialize_matches_fresh(self):
        grid = generate_map(10, 10, 0.2, seed=12)
        belief = BeliefMap.from_truth(grid)
        free = grid.free_cells()
        planner = DStarLitePlanner(belief, free[0], free[-1])
        planner.compute_shortest_path()
        planner.reinitialize(free[1])
        cost = planner.compute_shortest_path(start=free[1]).path_cost
        assert cost == dijkstra_cost(belief, free[1], free[-1])

    def test_unreachable_result_is_cached(self):
        belief = known_empty(3, 3)
        belief.cells[0, 1] = BLOCKED
        belief.cells[1, 0] = BLOCKED
        belief.cells[1, 1] = BLOCKED
        planner = DStarLitePlanner(belief, Coord(0, 0), Coord(2, 2))
        planner.compute_shortest_path()
        assert planner.replan_from_scratch(Coord(0, 0)) is None
        # second call takes the cached path; same answer
        assert planner.replan_from_scratch(Coord(0, 0)) is None


def test_dump_values_renders_grids():
    belief = known_empty(3, 3)
    planner = DStarLitePlanner(belief, Coord(0, 0), Coord(2, 2))
    planner.compute_shortest_path()
    text = planner.dump_values()
    assert "g:" in text and "rhs:" in text
    assert "  inf" in text or "    0" in text
