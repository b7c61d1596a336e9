"""Belief maintenance and dissemination.

Each agent keeps its own tri-state belief of the world (Unknown / Free /
Blocked). New knowledge enters as small per-step deltas extracted from
observations; deltas are fused locally and, in the shared-map regime,
broadcast to teammates through a communication channel with configurable
latency and drop rate. Knowledge is monotone in the static-obstacle
setting: cells only ever go from Unknown to Free or Blocked, and fused
values always agree with ground truth.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .gridworld import BLOCKED, FREE, OUT_OF_BOUNDS, Coord, GridMap, Observation

UNKNOWN = np.int8(-1)

_EMPTY_I64 = np.empty(0, dtype=np.int64)
_EMPTY_I8 = np.empty(0, dtype=np.int8)


class ConflictingEvidence(Exception):
    """A delta contradicts an already-known cell.

    Impossible with truthful observations of a static world; raised to
    surface harness bugs early instead of silently corrupting beliefs.
    """


@dataclass
class BeliefMap:
    """Tri-state knowledge of the map; ``version`` bumps on every change."""

    width: int
    height: int
    cells: np.ndarray
    version: int = 0

    @classmethod
    def unknown(cls, width: int, height: int) -> "BeliefMap":
        return cls(width, height, np.full((height, width), UNKNOWN, dtype=np.int8))

    @classmethod
    def from_truth(cls, grid: GridMap) -> "BeliefMap":
        """Fully informed belief (the full-information regime)."""
        cells = np.where(grid.blocked, BLOCKED, FREE).astype(np.int8)
        return cls(grid.width, grid.height, cells)

    def n_unknown(self) -> int:
        return int((self.cells == UNKNOWN).sum())

    def is_blocked(self, r: int, c: int) -> bool:
        return self.cells[r, c] == BLOCKED

    def copy(self) -> "BeliefMap":
        return BeliefMap(self.width, self.height, self.cells.copy(), self.version)


@dataclass(frozen=True)
class MapDelta:
    """Cells newly learned by one agent at one step.

    Stored as parallel coordinate/value arrays; ``entries`` exposes the
    ((row, col), value) view. Coordinates are unique within a delta.
    """

    origin: int
    step: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    @classmethod
    def from_entries(
        cls, entries: Iterable[tuple[tuple[int, int], int]], origin: int = -1, step: int = -1
    ) -> "MapDelta":
        items = list(entries)
        coords = [coord for coord, _ in items]
        if len(set(coords)) != len(coords):
            raise ValueError("delta contains duplicate coordinates")
        rows = np.array([r for (r, _), _ in items], dtype=np.int64)
        cols = np.array([c for (_, c), _ in items], dtype=np.int64)
        values = np.array([v for _, v in items], dtype=np.int8)
        return cls(origin, step, rows, cols, values)

    @classmethod
    def empty(cls, origin: int = -1, step: int = -1) -> "MapDelta":
        return cls(origin, step, _EMPTY_I64, _EMPTY_I64, _EMPTY_I8)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def entries(self) -> tuple[tuple[Coord, int], ...]:
        return tuple(
            (Coord(int(r), int(c)), int(v))
            for r, c, v in zip(self.rows, self.cols, self.values)
        )

    def coords(self) -> list[Coord]:
        return [Coord(int(r), int(c)) for r, c in zip(self.rows, self.cols)]

    def blocked_cells(self) -> list[Coord]:
        mask = self.values == BLOCKED
        return [Coord(int(r), int(c)) for r, c in zip(self.rows[mask], self.cols[mask])]


def extract_delta(
    obs: Observation, belief: BeliefMap, origin: int = -1, step: int = -1
) -> MapDelta:
    """Cells of the observation window that the belief does not know yet.

    Out-of-window and out-of-bounds positions are excluded. A disagreement
    between the window and an already-known cell would mean untruthful
    data and trips an assertion.
    """
    r, c = obs.center
    radius = obs.radius
    r0, r1 = max(0, r - radius), min(belief.height, r + radius + 1)
    c0, c1 = max(0, c - radius), min(belief.width, c + radius + 1)
    wr0, wc0 = r0 - (r - radius), c0 - (c - radius)
    window = obs.obstacle_window[wr0 : wr0 + (r1 - r0), wc0 : wc0 + (c1 - c0)]
    known = belief.cells[r0:r1, c0:c1]
    new_mask = known == UNKNOWN
    assert (window[~new_mask] == known[~new_mask]).all(), "observation contradicts belief"
    rs, cs = np.nonzero(new_mask)
    return MapDelta(
        origin=origin,
        step=step,
        rows=rs + r0,
        cols=cs + c0,
        values=window[new_mask],
    )


def fuse(belief: BeliefMap, delta: MapDelta) -> MapDelta:
    """Merge a delta into a belief; returns the subset that actually changed.

    Idempotent and order-independent for truthful deltas. The version
    counter bumps only when at least one cell changed. The returned delta
    is what a planner needs to repair its costs.
    """
    if len(delta) == 0:
        return MapDelta.empty(delta.origin, delta.step)
    known = belief.cells[delta.rows, delta.cols]
    conflicting = (known != UNKNOWN) & (known != delta.values)
    if conflicting.any():
        idx = int(np.flatnonzero(conflicting)[0])
        raise ConflictingEvidence(
            f"cell ({delta.rows[idx]}, {delta.cols[idx]}) is known as "
            f"{int(known[idx])} but delta from agent {delta.origin} says "
            f"{int(delta.values[idx])}"
        )
    new_mask = known == UNKNOWN
    if not new_mask.any():
        return MapDelta.empty(delta.origin, delta.step)
    rs = delta.rows[new_mask]
    cs = delta.cols[new_mask]
    vs = delta.values[new_mask]
    belief.cells[rs, cs] = vs
    belief.version += 1
    return MapDelta(delta.origin, delta.step, rs, cs, vs)


def merge_deltas(deltas: Iterable[MapDelta], origin: int = -1, step: int = -1) -> MapDelta:
    """Concatenate several deltas into one (duplicates tolerated by fuse)."""
    ds = [d for d in deltas if len(d)]
    if not ds:
        return MapDelta.empty(origin, step)
    if len(ds) == 1:
        return ds[0]
    return MapDelta(
        origin,
        step,
        np.concatenate([d.rows for d in ds]),
        np.concatenate([d.cols for d in ds]),
        np.concatenate([d.values for d in ds]),
    )


def remove_blocked_edges(
    changed: Iterable[Coord], belief: BeliefMap
) -> set[tuple[Coord, Coord]]:
    """Grid edges incident to newly blocked cells, in canonical order.

    These edges leave the routing graph for good; planners realize the
    removal through the belief's blocked cells, this set is the auditable
    record of it.
    """
    edges: set[tuple[Coord, Coord]] = set()
    for cell in changed:
        r, c = cell
        if belief.cells[r, c] != BLOCKED:
            continue
        for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= nr < belief.height and 0 <= nc < belief.width:
                neighbor = Coord(nr, nc)
                edge = (cell, neighbor) if cell <= neighbor else (neighbor, cell)
                edges.add(edge)
    return edges


@dataclass
class CommChannel:
    """Broadcast medium between teammates.

    Deltas enqueue at emission and deliver exactly ``latency`` steps
    later, unless dropped; drops are sampled independently per recipient
    at broadcast time from the channel's seeded RNG. Per-origin delivery
    order follows emission order.
    """

    n_agents: int
    latency: int = 0
    drop_rate: float = 0.0
    seed: int = 0
    _pending: deque = field(default_factory=deque)
    _rng: np.random.Generator = field(init=False)

    def __post_init__(self):
        self._rng = np.random.default_rng(self.seed)

    def broadcast(self, delta: MapDelta, step: int) -> None:
        if self.drop_rate >= 1.0:
            return
        dropped: frozenset[int] = frozenset()
        if self.drop_rate > 0.0:
            dropped = frozenset(
                j
                for j in range(self.n_agents)
                if j != delta.origin and self._rng.random() < self.drop_rate
            )
        self._pending.append((step + self.latency, delta, dropped))

    def deliver(self, step: int) -> Iterator[tuple[MapDelta, frozenset[int]]]:
        """Yield (delta, dropped_recipients) for everything due by ``step``.

        A delta goes to every agent except its origin and the dropped set.
        """
        while self._pending and self._pending[0][0] <= step:
            _, delta, dropped = self._pending.popleft()
            yield delta, dropped

    def pending_count(self) -> int:
        return len(self._pending)


class GridMemory:
    """Expandable per-agent record of everything it has observed.

    Bounds grow to cover each observation window (clipped to the map) and
    values never regress to Unknown. In the static setting this mirrors
    the agent's belief; it is kept as its own structure because it stays
    meaningful if the world ever changes under the agent.
    """

    def __init__(self):
        self._r0 = 0
        self._c0 = 0
        self._cells: np.ndarray | None = None

    @property
    def bounds(self) -> tuple[int, int, int, int] | None:
        """(row0, col0, row1, col1), half-open; None before any update."""
        if self._cells is None:
            return None
        h, w = self._cells.shape
        return (self._r0, self._c0, self._r0 + h, self._c0 + w)

    def value_at(self, r: int, c: int) -> int:
        if self._cells is None:
            return int(UNKNOWN)
        rr, cc = r - self._r0, c - self._c0
        if 0 <= rr < self._cells.shape[0] and 0 <= cc < self._cells.shape[1]:
            return int(self._cells[rr, cc])
        return int(UNKNOWN)

    def _grow_to(self, r0: int, c0: int, r1: int, c1: int) -> None:
        if self._cells is None:
            self._r0, self._c0 = r0, c0
            self._cells = np.full((r1 - r0, c1 - c0), UNKNOWN, dtype=np.int8)
            return
        cur = self.bounds
        assert cur is not None
        nr0, nc0 = min(cur[0], r0), min(cur[1], c0)
        nr1, nc1 = max(cur[2], r1), max(cur[3], c1)
        if (nr0, nc0, nr1, nc1) == cur:
            return
        grown = np.full((nr1 - nr0, nc1 - nc0), UNKNOWN, dtype=np.int8)
        grown[
            cur[0] - nr0 : cur[2] - nr0, cur[1] - nc0 : cur[3] - nc0
        ] = self._cells
        self._r0, self._c0, self._cells = nr0, nc0, grown


def memory_update(mem: GridMemory, obs: Observation) -> GridMemory:
    """Grow memory over the observation window and write observed values."""
    r, c = obs.center
    radius = obs.radius
    in_bounds = obs.obstacle_window != OUT_OF_BOUNDS
    if not in_bounds.any():
        return mem
    wrs, wcs = np.nonzero(in_bounds)
    r0, r1 = int(r - radius + wrs.min()), int(r - radius + wrs.max() + 1)
    c0, c1 = int(c - radius + wcs.min()), int(c - radius + wcs.max() + 1)
    mem._grow_to(r0, c0, r1, c1)
    assert mem._cells is not None
    view = mem._cells[r0 - mem._r0 : r1 - mem._r0, c0 - mem._c0 : c1 - mem._c0]
    window = obs.obstacle_window[
        wrs.min() : wrs.max() + 1, wcs.min() : wcs.max() + 1
    ]
    writable = window != OUT_OF_BOUNDS
    view[writable] = window[writable]
    return mem


# ---------------------------------------------------------------------------
# Text dumps: same grid format as GridMap with '?' for Unknown.

_BELIEF_CHARS = {int(FREE): ".", int(BLOCKED): "#", int(UNKNOWN): "?"}
_BELIEF_VALUES = {v: k for k, v in _BELIEF_CHARS.items()}


def belief_to_text(belief: BeliefMap) -> str:
    rows = [f"{belief.width} {belief.height}"]
    for r in range(belief.height):
        rows.append(
            "".join(_BELIEF_CHARS[int(belief.cells[r, c])] for c in range(belief.width))
        )
    return "\n".join(rows) + "\n"


def belief_from_text(text: str) -> BeliefMap:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    width, height = (int(tok) for tok in lines[0].split())
    cells = np.full((height, width), UNKNOWN, dtype=np.int8)
    for r, line in enumerate(lines[1 : height + 1]):
        cells[r] = [_BELIEF_VALUES[ch] for ch in line]
    return BeliefMap(width, height, cells)
