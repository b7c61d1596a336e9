"""Ground-truth grid environment: maps, instances, observations, transitions.

The world is a static 4-connected grid of free and blocked cells. Agents
occupy free cells, move synchronously, and exit the map once they reach
their goal. Collision semantics follow the usual MAPF conventions: no two
active agents may occupy the same cell at the same step (vertex conflict)
and no two may traverse the same edge in opposite directions (edge
conflict / swap). Conflicting moves are cancelled, never executed.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple, Sequence

import numpy as np
from scipy import ndimage

# Cell states as seen in observations (and, with UNKNOWN added, in beliefs).
FREE = np.int8(0)
BLOCKED = np.int8(1)
OUT_OF_BOUNDS = np.int8(2)

DEFAULT_OBS_RADIUS = 4
HISTORY_LENGTH = 8  # positions kept per agent; loop checks need only 3

# Reward terms: a small per-step cost, a collision penalty on top of it,
# and a terminal bonus for arriving. Terms stack additively.
STEP_REWARD = -0.0001
COLLISION_REWARD = -0.0002
GOAL_REWARD = 1.0

_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


class GridWorldError(Exception):
    """Base class for environment errors."""


class InstanceInfeasible(GridWorldError):
    """Start/goal sampling could not place all agents."""


class ObserverInactive(GridWorldError):
    """Observation requested for an agent that already exited the map."""


class MalformedActionSet(GridWorldError):
    """Joint action does not cover exactly the episode's agents."""


class Coord(NamedTuple):
    row: int
    col: int


class Action(IntEnum):
    """The five moves. Enum order doubles as the deterministic tie-break order."""

    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3
    WAIT = 4


# Row/col deltas indexed by Action value.
ACTION_DELTAS = ((-1, 0), (1, 0), (0, -1), (0, 1), (0, 0))
MOVE_ACTIONS = (Action.UP, Action.DOWN, Action.LEFT, Action.RIGHT)


def apply_action(pos: Coord, action: Action) -> Coord:
    dr, dc = ACTION_DELTAS[action]
    return Coord(pos[0] + dr, pos[1] + dc)


def manhattan(a: Coord, b: Coord) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


@dataclass(frozen=True)
class GridMap:
    """Static occupancy grid. ``blocked`` has shape (height, width)."""

    width: int
    height: int
    blocked: np.ndarray

    def __post_init__(self):
        assert self.blocked.shape == (self.height, self.width)
        self.blocked.setflags(write=False)

    def in_bounds(self, r: int, c: int) -> bool:
        return 0 <= r < self.height and 0 <= c < self.width

    def is_free(self, r: int, c: int) -> bool:
        return self.in_bounds(r, c) and not self.blocked[r, c]

    @property
    def n_blocked(self) -> int:
        return int(self.blocked.sum())

    def free_cells(self) -> list[Coord]:
        """Free cells in row-major order."""
        rs, cs = np.nonzero(~self.blocked)
        return [Coord(int(r), int(c)) for r, c in zip(rs, cs)]


@dataclass
class AgentState:
    """Mutable per-agent state owned by the episode harness.

    ``history`` holds the most recent positions, current position last;
    it starts as [start] and gets one append per executed step. ``mode``
    is written by the decision layer purely for logging.
    """

    id: int
    pos: Coord
    start: Coord
    goal: Coord
    active: bool = True
    history: deque = field(default_factory=lambda: deque(maxlen=HISTORY_LENGTH))
    mode: object = None
    arrival_time: int | None = None

    def __post_init__(self):
        if not self.history:
            self.history.append(self.pos)


@dataclass
class Observation:
    """Square local view of radius R around ``center``.

    ``obstacle_window`` holds FREE/BLOCKED/OUT_OF_BOUNDS codes and
    ``agent_window`` marks cells occupied by *other* active agents.
    Nothing about other agents' goals or plans is exposed.
    """

    center: Coord
    radius: int
    obstacle_window: np.ndarray
    agent_window: np.ndarray
    own_goal: Coord


class ConflictKind(IntEnum):
    VERTEX = 0
    EDGE = 1


@dataclass
class StepOutcome:
    new_positions: dict[int, Coord]
    collisions: list[tuple[tuple[int, int], ConflictKind]]
    rewards: dict[int, float]
    newly_arrived: list[int]
    # Cancelled moves into walls / off the map; not agent-pair conflicts but
    # still collisions for reward and bookkeeping purposes.
    obstacle_hits: list[int] = field(default_factory=list)


def generate_map(width: int, height: int, density: float, seed: int) -> GridMap:
    """Random map with exactly round(density * width * height) blocked cells.

    The count is exact rather than per-cell Bernoulli so that density
    sweeps are free of placement noise. Deterministic per seed.
    """
    if not 0.0 <= density < 1.0:
        raise ValueError(f"density must be in [0, 1), got {density}")
    n_cells = width * height
    n_blocked = round(density * n_cells)
    blocked = np.zeros(n_cells, dtype=bool)
    if n_blocked:
        rng = np.random.default_rng(seed)
        blocked[rng.choice(n_cells, size=n_blocked, replace=False)] = True
    return GridMap(width, height, blocked.reshape(height, width))


def generate_instance(
    grid: GridMap, n_agents: int, seed: int, retry_budget: int = 100
) -> list[tuple[Coord, Coord]]:
    """Sample per-agent (start, goal) pairs.

    Starts are pairwise distinct, goals are pairwise distinct, and every
    pair lies in the same 4-connected free component, so each task is
    individually solvable. Rejection sampling; raises InstanceInfeasible
    once the per-agent retry budget is exhausted.
    """
    free = grid.free_cells()
    if len(free) < 2 * n_agents:
        raise InstanceInfeasible(
            f"{n_agents} agents need {2 * n_agents} free cells, map has {len(free)}"
        )
    labels, _ = ndimage.label(~grid.blocked, structure=_FOUR_CONNECTED)
    by_component: dict[int, list[Coord]] = {}
    for cell in free:
        by_component.setdefault(int(labels[cell]), []).append(cell)

    rng = np.random.default_rng(seed)
    starts: set[Coord] = set()
    goals: set[Coord] = set()
    pairs: list[tuple[Coord, Coord]] = []
    for _ in range(n_agents):
        for _attempt in range(retry_budget):
            s = free[rng.integers(len(free))]
            if s in starts:
                continue
            component = by_component[int(labels[s])]
            g = component[rng.integers(len(component))]
            if g == s or g in goals:
                continue
            starts.add(s)
            goals.add(g)
            pairs.append((s, g))
            break
        else:
            raise InstanceInfeasible(
                f"could not place agent {len(pairs)} within retry budget {retry_budget}"
            )
    return pairs


def make_agents(tasks: Sequence[tuple[Coord, Coord]]) -> list[AgentState]:
    return [AgentState(id=i, pos=s, start=s, goal=g) for i, (s, g) in enumerate(tasks)]


def active_occupancy(grid: GridMap, agents: Sequence[AgentState]) -> np.ndarray:
    """Boolean grid marking cells occupied by active agents."""
    occ = np.zeros((grid.height, grid.width), dtype=bool)
    for a in agents:
        if a.active:
            occ[a.pos] = True
    return occ


def observe(
    grid: GridMap,
    agents: Sequence[AgentState],
    observer: int,
    radius: int = DEFAULT_OBS_RADIUS,
    occupancy: np.ndarray | None = None,
) -> Observation:
    """Local observation for one agent.

    ``occupancy`` may be passed in when the caller already built the
    active-agent grid for this step; it is recomputed otherwise.
    """
    agent = agents[observer]
    if not agent.active:
        raise ObserverInactive(f"agent {observer} has exited the map")
    r, c = agent.pos
    k = 2 * radius + 1
    window = np.full((k, k), OUT_OF_BOUNDS, dtype=np.int8)
    agent_window = np.zeros((k, k), dtype=bool)

    r0, r1 = max(0, r - radius), min(grid.height, r + radius + 1)
    c0, c1 = max(0, c - radius), min(grid.width, c + radius + 1)
    wr0, wc0 = r0 - (r - radius), c0 - (c - radius)
    wr1, wc1 = wr0 + (r1 - r0), wc0 + (c1 - c0)

    window[wr0:wr1, wc0:wc1] = np.where(grid.blocked[r0:r1, c0:c1], BLOCKED, FREE)
    if occupancy is None:
        occupancy = active_occupancy(grid, agents)
    agent_window[wr0:wr1, wc0:wc1] = occupancy[r0:r1, c0:c1]
    agent_window[radius, radius] = False  # the observer itself

    return Observation(
        center=agent.pos,
        radius=radius,
        obstacle_window=window,
        agent_window=agent_window,
        own_goal=agent.goal,
    )


def compute_reward(moved: bool, collided: bool, reached_goal: bool) -> float:
    """Per-step reward; terms stack additively.

    ``moved`` is part of the interface for policy implementations that may
    care, but does not change the value: the time penalty applies whether
    the agent moved or waited.
    """
    reward = STEP_REWARD
    if collided:
        reward += COLLISION_REWARD
    if reached_goal:
        reward += GOAL_REWARD
    return reward


def apply_joint_action(
    grid: GridMap,
    agents: Sequence[AgentState],
    actions: dict[int, Action],
    step: int,
) -> StepOutcome:
    """Execute one synchronous joint step with cancel-and-stay semantics.

    Moves into walls or off the map are cancelled and counted as obstacle
    hits. Vertex conflicts and swaps are detected on intended positions;
    every mover involved is cancelled, and cancellations cascade until no
    new vertex conflict appears (each pass only converts movers to
    stayers, so the fixed point is reached in at most n passes). Agents
    whose executed position equals their goal exit the map at the end of
    the step, with ``arrival_time = step``.
    """
    if set(actions) != {a.id for a in agents}:
        raise MalformedActionSet(
            f"actions cover {len(actions)} agents, episode has {len(agents)}"
        )
    active = [a for a in agents if a.active]
    pos = {a.id: a.pos for a in active}
    intent: dict[int, Coord] = {}
    obstacle_hits: list[int] = []
    for a in active:
        action = actions[a.id]
        if action == Action.WAIT:
            intent[a.id] = a.pos
            continue
        target = apply_action(a.pos, action)
        if grid.is_free(*target):
            intent[a.id] = target
        else:
            intent[a.id] = a.pos
            obstacle_hits.append(a.id)

    collided = set(obstacle_hits)
    collisions: list[tuple[tuple[int, int], ConflictKind]] = []
    occupant = {a.pos: a.id for a in active}

    # Swaps first: both movers cancel.
    ids = sorted(intent)
    for i in ids:
        if intent[i] == pos[i]:
            continue
        j = occupant.get(intent[i])
        if j is not None and j > i and intent[j] == pos[i] and intent[j] != pos[j]:
            collisions.append(((i, j), ConflictKind.EDGE))
            intent[i] = pos[i]
            intent[j] = pos[j]
            collided.add(i)
            collided.add(j)

    # Vertex conflicts with cascade. Each recorded pair is unique: once a
    # mover is cancelled it sits on its own (distinct) cell, so it can only
    # appear again opposite a *new* incoming mover.
    while True:
        by_cell: dict[Coord, list[int]] = {}
        for i in ids:
            by_cell.setdefault(intent[i], []).append(i)
        cancelled_any = False
        for cell in sorted(by_cell):
            group = by_cell[cell]
            if len(group) < 2:
                continue
            for a_idx in range(len(group)):
                for b_idx in range(a_idx + 1, len(group)):
                    collisions.append(((group[a_idx], group[b_idx]), ConflictKind.VERTEX))
            for i in group:
                collided.add(i)
                if intent[i] != pos[i]:
                    intent[i] = pos[i]
                    cancelled_any = True
        if not cancelled_any:
            break

    _assert_conflict_free(pos, intent)

    rewards = {a.id: 0.0 for a in agents}
    newly_arrived: list[int] = []
    new_positions = {a.id: a.pos for a in agents}
    for a in active:
        executed = intent[a.id]
        moved = executed != a.pos
        a.pos = executed
        a.history.append(executed)
        new_positions[a.id] = executed
        reached = executed == a.goal
        if reached:
            a.active = False
            a.arrival_time = step
            newly_arrived.append(a.id)
        rewards[a.id] = compute_reward(moved, a.id in collided, reached)

    return StepOutcome(
        new_positions=new_positions,
        collisions=collisions,
        rewards=rewards,
        newly_arrived=newly_arrived,
        obstacle_hits=obstacle_hits,
    )


def _assert_conflict_free(pos: dict[int, Coord], intent: dict[int, Coord]) -> None:
    # Cheap always-on guard: executed positions must be pairwise distinct
    # and swap-free among the step's active agents.
    if len(set(intent.values())) != len(intent):
        raise RuntimeError("vertex conflict survived resolution (engine bug)")
    moves = {(pos[i], intent[i]) for i in intent if intent[i] != pos[i]}
    for a, b in moves:
        if (b, a) in moves:
            raise RuntimeError("edge swap survived resolution (engine bug)")


# ---------------------------------------------------------------------------
# Plain-text serialization: "W H" header, then H rows of '.'/'#'; instance
# lines are "agent_id start_row start_col goal_row goal_col".


def map_to_text(grid: GridMap) -> str:
    rows = [f"{grid.width} {grid.height}"]
    for r in range(grid.height):
        rows.append("".join("#" if grid.blocked[r, c] else "." for c in range(grid.width)))
    return "\n".join(rows) + "\n"


def map_from_text(text: str) -> GridMap:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    width, height = (int(tok) for tok in lines[0].split())
    if len(lines) != height + 1:
        raise ValueError(f"expected {height} rows, got {len(lines) - 1}")
    blocked = np.zeros((height, width), dtype=bool)
    for r, line in enumerate(lines[1 : height + 1]):
        if len(line) != width:
            raise ValueError(f"row {r} has width {len(line)}, expected {width}")
        blocked[r] = [ch == "#" for ch in line]
    return GridMap(width, height, blocked)


def instance_to_text(tasks: Sequence[tuple[Coord, Coord]]) -> str:
    lines = [
        f"{i} {s[0]} {s[1]} {g[0]} {g[1]}" for i, (s, g) in enumerate(tasks)
    ]
    return "\n".join(lines) + ("\n" if lines else "")


def instance_from_text(text: str) -> list[tuple[Coord, Coord]]:
    tasks: list[tuple[Coord, Coord]] = []
    for line in text.splitlines():
        if not line.strip():
            continue
        i, sr, sc, gr, gc = (int(tok) for tok in line.split())
        if i != len(tasks):
            raise ValueError(f"instance lines out of order at agent {i}")
        tasks.append((Coord(sr, sc), Coord(gr, gc)))
    return tasks


def scenario_to_text(grid: GridMap, tasks: Sequence[tuple[Coord, Coord]]) -> str:
    return map_to_text(grid) + instance_to_text(tasks)


def scenario_from_text(text: str) -> tuple[GridMap, list[tuple[Coord, Coord]]]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    _, height = (int(tok) for tok in lines[0].split())
    grid = map_from_text("\n".join(lines[: height + 1]))
    tasks = instance_from_text("\n".join(lines[height + 1 :]))
    return grid, tasks
