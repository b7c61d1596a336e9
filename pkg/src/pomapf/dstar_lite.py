"""Incremental shortest-path planning over a belief map.

Classic D* Lite: per-cell cost-to-goal estimates ``g`` and one-step
lookahead values ``rhs``, a priority queue keyed by
(min(g, rhs) + h + km, min(g, rhs)) with the accumulated offset ``km``
absorbing start movement, and demand-driven repair after edge-cost
changes instead of replanning from scratch.

Conventions here: 4-connectivity with unit edge costs, Manhattan
heuristic, and the freespace assumption (cells the belief has not
observed yet are planned through as if free; only cells known to be
Blocked carry infinite cost). The queue uses lazy deletion: ``_key_of``
holds each cell's currently valid key and stale heap entries are skipped
on pop.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from functools import lru_cache

from .gridworld import Action, Coord
from .shared_map import BLOCKED, BeliefMap, MapDelta

_INF = float("inf")
_BLOCKED_INT = int(BLOCKED)


class GoalBlocked(Exception):
    """The belief marks the requested goal cell as an obstacle."""


class StalePlanner(Exception):
    """The belief changed and the planner was not told; harness bug."""


@dataclass(frozen=True)
class PlanResult:
    next_action: Action | None
    path_cost: float

    @property
    def reachable(self) -> bool:
        return self.path_cost < _INF


@lru_cache(maxsize=None)
def _geometry(width: int, height: int):
    """Per-cell neighbor indices (in action tie-break order) and coords."""
    nbrs = []
    acts = []
    rows = []
    cols = []
    for idx in range(width * height):
        r, c = divmod(idx, width)
        rows.append(r)
        cols.append(c)
        nb = []
        aa = []
        if r > 0:
            nb.append(idx - width)
            aa.append(Action.UP)
        if r < height - 1:
            nb.append(idx + width)
            aa.append(Action.DOWN)
        if c > 0:
            nb.append(idx - 1)
            aa.append(Action.LEFT)
        if c < width - 1:
            nb.append(idx + 1)
            aa.append(Action.RIGHT)
        nbrs.append(tuple(nb))
        acts.append(tuple(aa))
    return tuple(nbrs), tuple(acts), tuple(rows), tuple(cols)


class DStarLitePlanner:
    """One agent's incremental planner, bound to that agent's belief.

    The planner never sees the ground-truth map; all costs derive from
    the belief it was constructed with plus the deltas applied since.
    """

    def __init__(self, belief: BeliefMap, start: Coord, goal: Coord):
        if not (0 <= goal[0] < belief.height and 0 <= goal[1] < belief.width):
            raise ValueError(f"goal {goal} outside {belief.width}x{belief.height} map")
        if belief.cells[goal] == BLOCKED:
            raise GoalBlocked(f"goal {goal} is blocked in the belief")
        self._belief = belief
        self._width = belief.width
        self._nbrs, self._acts, self._rows, self._cols = _geometry(
            belief.width, belief.height
        )
        self._goal_coord = goal
        self._goal = goal[0] * belief.width + goal[1]
        self._start = start[0] * belief.width + start[1]
        self._blocked = (belief.cells == BLOCKED).ravel().tolist()
        n = belief.width * belief.height
        self._g = [_INF] * n
        self._rhs = [_INF] * n
        self._km = 0
        self._rhs[self._goal] = 0.0
        h0 = abs(start[0] - goal[0]) + abs(start[1] - goal[1])
        self._heap: list[tuple[float, float, int]] = [(h0, 0.0, self._goal)]
        self._key_of: dict[int, tuple[float, float]] = {self._goal: (h0, 0.0)}
        self._synced_version = belief.version
        self._computed = False
        self._dirty = True
        self._unreachable_cache: tuple[int, int] | None = None
        # Cumulative count of queue expansions, for repair-vs-replan
        # efficiency measurements.
        self.expansions = 0

    # -- bookkeeping ---------------------------------------------------

    @property
    def goal(self) -> Coord:
        return self._goal_coord

    @property
    def last_start(self) -> Coord:
        return Coord(self._rows[self._start], self._cols[self._start])

    @property
    def km(self) -> int:
        return self._km

    @property
    def belief_version(self) -> int:
        return self._synced_version

    def _flat(self, pos: Coord) -> int:
        return pos[0] * self._width + pos[1]

    def g_at(self, pos: Coord) -> float:
        return self._g[self._flat(pos)]

    def rhs_at(self, pos: Coord) -> float:
        return self._rhs[self._flat(pos)]

    def queue_cells(self) -> set[Coord]:
        return {Coord(self._rows[v], self._cols[v]) for v in self._key_of}

    def is_plan_valid_at(self, pos: Coord) -> bool:
        """True when the cached cost surface can answer queries at ``pos``
        without another compute pass."""
        if (
            self._dirty
            or not self._computed
            or self._belief.version != self._synced_version
        ):
            return False
        p = self._flat(pos)
        return self._g[p] == self._rhs[p] and self._g[p] < _INF

    # -- core algorithm -------------------------------------------------

    def compute_shortest_path(self, start: Coord | None = None) -> PlanResult:
        """Repair the cost surface until ``start`` is consistent.

        Moving the start bumps ``km`` by the Manhattan distance moved,
        which keeps every queued key a lower bound of its recomputed
        value. Unreachability is reported as an infinite path cost.
        """
        if self._belief.version != self._synced_version:
            raise StalePlanner(
                "belief advanced without apply_belief_delta; planner out of sync"
            )
        if start is not None:
            s = self._flat(start)
            if s != self._start:
                self._km += abs(self._rows[s] - self._rows[self._start]) + abs(
                    self._cols[s] - self._cols[self._start]
                )
                self._start = s
        self._run_to_consistency()
        self._computed = True
        self._dirty = False
        cost = self._g[self._start]
        return PlanResult(next_action=self._first_action(self._start), path_cost=cost)

    def _run_to_consistency(self) -> None:
        g = self._g
        rhs = self._rhs
        key_of = self._key_of
        heap = self._heap
        blocked = self._blocked
        nbrs = self._nbrs
        rows = self._rows
        cols = self._cols
        goal = self._goal
        km = self._km
        s = self._start
        sr = rows[s]
        sc = cols[s]
        push = heapq.heappush
        pop = heapq.heappop
        expansions = 0

        def update_vertex(v: int) -> None:
            if v != goal:
                best = _INF
                if not blocked[v]:
                    for w in nbrs[v]:
                        if not blocked[w]:
                            gw = g[w]
                            if gw < best:
                                best = gw
                rhs[v] = best + 1
            gv = g[v]
            rv = rhs[v]
            if gv != rv:
                m = gv if gv < rv else rv
                key = (m + abs(rows[v] - sr) + abs(cols[v] - sc) + km, m)
                key_of[v] = key
                push(heap, (key[0], key[1], v))
            else:
                key_of.pop(v, None)

        while heap:
            k1, k2, u = heap[0]
            if key_of.get(u) != (k1, k2):
                pop(heap)
                continue
            gs = g[s]
            rs = rhs[s]
            ms = gs if gs < rs else rs
            if gs == rs and not (k1 < ms + km or (k1 == ms + km and k2 < ms)):
                break
            gu = g[u]
            ru = rhs[u]
            mu = gu if gu < ru else ru
            nk1 = mu + abs(rows[u] - sr) + abs(cols[u] - sc) + km
            if k1 < nk1 or (k1 == nk1 and k2 < mu):
                pop(heap)
                key_of[u] = (nk1, mu)
                push(heap, (nk1, mu, u))
            elif gu > ru:
                pop(heap)
                del key_of[u]
                g[u] = ru
                expansions += 1
                for v in nbrs[u]:
                    update_vertex(v)
            else:
                pop(heap)
                del key_of[u]
                g[u] = _INF
                expansions += 1
                update_vertex(u)
                for v in nbrs[u]:
                    update_vertex(v)
        self.expansions += expansions

    def _update_vertex(self, v: int, sr: int, sc: int) -> None:
        # Non-hot-path twin of the closure in _run_to_consistency.
        g = self._g
        rhs = self._rhs
        if v != self._goal:
            best = _INF
            if not self._blocked[v]:
                for w in self._nbrs[v]:
                    if not self._blocked[w]:
                        gw = g[w]
                        if gw < best:
                            best = gw
            rhs[v] = best + 1
        gv = g[v]
        rv = rhs[v]
        if gv != rv:
            m = gv if gv < rv else rv
            key = (m + abs(self._rows[v] - sr) + abs(self._cols[v] - sc) + self._km, m)
            self._key_of[v] = key
            heapq.heappush(self._heap, (key[0], key[1], v))
        else:
            self._key_of.pop(v, None)

    def apply_belief_delta(self, delta: MapDelta, current_pos: Coord) -> None:
        """Absorb fused belief changes and mark affected cells for repair.

        Newly blocked cells invalidate their incident edges; newly free
        cells change nothing under the freespace assumption. Empty deltas
        leave the planner untouched.
        """
        if len(delta) == 0:
            return
        cur = self._flat(current_pos)
        if cur != self._start:
            self._km += abs(self._rows[cur] - self._rows[self._start]) + abs(
                self._cols[cur] - self._cols[self._start]
            )
            self._start = cur
        blocked = self._blocked
        width = self._width
        newly: list[int] = []
        for r, c, v in zip(
            delta.rows.tolist(), delta.cols.tolist(), delta.values.tolist()
        ):
            if v == _BLOCKED_INT:
                idx = r * width + c
                if not blocked[idx]:
                    blocked[idx] = True
                    newly.append(idx)
        if newly:
            self._dirty = True
            sr = self._rows[cur]
            sc = self._cols[cur]
            for idx in newly:
                self._update_vertex(idx, sr, sc)
                for v2 in self._nbrs[idx]:
                    self._update_vertex(v2, sr, sc)
        self._synced_version = self._belief.version

    def get_first_action(self, pos: Coord) -> Action | None:
        """Best next move from ``pos`` on the computed surface.

        WAIT at the goal, None when the goal is unreachable from here.
        Ties break on the fixed action order Up < Down < Left < Right.
        """
        if (
            self._dirty
            or not self._computed
            or self._belief.version != self._synced_version
        ):
            raise StalePlanner("compute_shortest_path has not run for this belief")
        p = self._flat(pos)
        if p == self._goal:
            return Action.WAIT
        return self._first_action(p)

    def _first_action(self, p: int) -> Action | None:
        if p == self._goal:
            return Action.WAIT
        g = self._g
        blocked = self._blocked
        best = _INF
        best_action = None
        for v, a in zip(self._nbrs[p], self._acts[p]):
            if not blocked[v]:
                gv = g[v]
                if gv < best:
                    best = gv
                    best_action = a
        return best_action

    def reinitialize(self, start: Coord) -> None:
        """Throw the incremental state away and restart on the current belief.

        This is the from-scratch replan used when the incremental plan
        comes back empty.
        """
        belief = self._belief
        self._blocked = (belief.cells == BLOCKED).ravel().tolist()
        n = belief.width * belief.height
        self._g = [_INF] * n
        self._rhs = [_INF] * n
        self._km = 0
        self._start = self._flat(start)
        self._rhs[self._goal] = 0.0
        h0 = abs(start[0] - self._goal_coord[0]) + abs(start[1] - self._goal_coord[1])
        self._heap = [(float(h0), 0.0, self._goal)]
        self._key_of = {self._goal: (float(h0), 0.0)}
        self._synced_version = belief.version
        self._computed = False
        self._dirty = True

    def replan_from_scratch(self, pos: Coord) -> Action | None:
        """Reinitialize and recompute; caches negative results per belief
        version so a persistently unreachable goal is proven only once."""
        cache_key = (self._belief.version, self._flat(pos))
        if self._unreachable_cache == cache_key:
            return None
        self.reinitialize(pos)
        result = self.compute_shortest_path(start=pos)
        if not result.reachable:
            self._unreachable_cache = cache_key
            return None
        return result.next_action

    # -- diagnostics -----------------------------------------------------

    def dump_values(self) -> str:
        """g and rhs fields as text grids, for test diagnosis."""
        width = self._width
        height = len(self._g) // width

        def fmt(values: list[float]) -> str:
            out = []
            for r in range(height):
                row = values[r * width : (r + 1) * width]
                out.append(
                    " ".join(
                        "  inf" if x == _INF else f"{int(x):5d}" for x in row
                    )
                )
            return "\n".join(out)

        return f"g:\n{fmt(self._g)}\nrhs:\n{fmt(self._rhs)}\n"
