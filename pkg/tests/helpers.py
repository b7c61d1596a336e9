"""Shared test utilities, including the from-scratch search oracle."""

import heapq
import math

import numpy as np

from pomapf.gridworld import Coord, GridMap
from pomapf.shared_map import BLOCKED, BeliefMap


def dijkstra_cost(belief: BeliefMap, start: Coord, goal: Coord) -> float:
    """Uniform-cost search over the belief, Unknown treated as free.

    Deliberately independent of the incremental planner: fresh run per
    query, plain dict frontier.
    """
    height, width = belief.height, belief.width
    cells = belief.cells
    if cells[goal] == BLOCKED or cells[start] == BLOCKED:
        return math.inf
    dist = {start: 0}
    heap = [(0, start)]
    while heap:
        d, u = heapq.heappop(heap)
        if u == goal:
            return d
        if d > dist.get(u, math.inf):
            continue
        r, c = u
        for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= nr < height and 0 <= nc < width and cells[nr, nc] != BLOCKED:
                v = Coord(nr, nc)
                nd = d + 1
                if nd < dist.get(v, math.inf):
                    dist[v] = nd
                    heapq.heappush(heap, (nd, v))
    return math.inf


def belief_of_truth(grid: GridMap) -> BeliefMap:
    return BeliefMap.from_truth(grid)


def random_free_cell(rng: np.random.Generator, grid: GridMap) -> Coord:
    free = grid.free_cells()
    return free[rng.integers(len(free))]
