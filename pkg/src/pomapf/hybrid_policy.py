"""Per-agent decision layer: neighbor-count switching plus anti-freeze.

Every step the agent recounts the other agents visible in its window.
More than ``switch_threshold`` neighbors means congestion: the agent
hands control to its reactive local policy. Otherwise it follows its
incremental planner, except that a detected loop (sitting still or
bouncing back to where it was two steps ago) or an empty plan also
diverts the step to the local policy. The local policy is a pluggable
seam; the default is a seeded safe-greedy walker.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Protocol, Sequence

import numpy as np

from .dstar_lite import DStarLitePlanner
from .gridworld import (
    MOVE_ACTIONS,
    Action,
    AgentState,
    Coord,
    Observation,
    apply_action,
    manhattan,
)
from .shared_map import BLOCKED, BeliefMap


# Exploration rate of the default local policy. The greedy walker alone
# re-enters the loops the anti-freeze check just broke, and deterministic
# choices sustain multi-agent crowding knots; measured on the dense
# benchmark scenarios, rates below ~0.3 leave a visible fraction of
# agents wedged at bottlenecks.
DEFAULT_EPSILON = 0.45


class Mode(Enum):
    """Which controller owns the step. Recomputed every step, never sticky."""

    GLOBAL_PLANNER = "planner"
    LOCAL_POLICY = "local"


class ActionSource(Enum):
    PLANNER = "planner"
    LOCAL_POLICY = "policy"
    FALLBACK = "fallback"


@dataclass(frozen=True)
class HybridConfig:
    # Threshold straight from the switching rule: strictly more than this
    # many visible neighbors hands the step to the local policy.
    switch_threshold: int = 4
    loop_detection: bool = True
    # True: a repeat of either the last or the second-to-last position is
    # a loop. False: only the second-to-last (pure oscillation) counts.
    loop_match_previous: bool = True


@dataclass(frozen=True)
class DecisionTrace:
    agent_id: int
    n_neighbors: int
    mode: Mode
    loop_detected: bool
    action: Action
    source: ActionSource


def trace_to_line(trace: DecisionTrace, step: int) -> str:
    return (
        f"step={step} agent={trace.agent_id} n={trace.n_neighbors} "
        f"mode={trace.mode.value} loop={int(trace.loop_detected)} "
        f"action={trace.action.name.lower()} source={trace.source.value}"
    )


def trace_from_line(line: str) -> tuple[int, DecisionTrace]:
    fields = dict(tok.split("=", 1) for tok in line.split())
    return int(fields["step"]), DecisionTrace(
        agent_id=int(fields["agent"]),
        n_neighbors=int(fields["n"]),
        mode=Mode(fields["mode"]),
        loop_detected=bool(int(fields["loop"])),
        action=Action[fields["action"].upper()],
        source=ActionSource(fields["source"]),
    )


class LocalPolicy(Protocol):
    """Reactive controller seam.

    Implementations map the agent's local view and accumulated knowledge
    to one of the five actions, deterministically for a fixed seed. A
    trained network could slot in here; the package ships a heuristic.
    """

    def act(self, obs: Observation, belief: BeliefMap, goal: Coord) -> Action: ...


def count_neighbors(obs: Observation) -> int:
    """Other active agents inside the observation window."""
    return int(obs.agent_window.sum())


def select_mode(n: int, threshold: int = 4) -> Mode:
    return Mode.LOCAL_POLICY if n > threshold else Mode.GLOBAL_PLANNER


def detect_loop(history: Sequence[Coord], match_previous: bool = True) -> bool:
    """Loop check over the position history (current position last).

    Stagnation (same cell as one step ago) counts when
    ``match_previous``; oscillation (same cell as two steps ago) always
    counts.
    """
    current = history[-1]
    if match_previous and len(history) >= 2 and history[-2] == current:
        return True
    return len(history) >= 3 and history[-3] == current


def safe_moves(obs: Observation, belief: BeliefMap) -> list[Action]:
    """Moves that stay on the map, avoid belief-blocked cells, and avoid
    cells visibly occupied by another active agent."""
    pos = obs.center
    radius = obs.radius
    moves = []
    for action in MOVE_ACTIONS:
        r, c = apply_action(pos, action)
        if not (0 <= r < belief.height and 0 <= c < belief.width):
            continue
        if belief.cells[r, c] == BLOCKED:
            continue
        if obs.agent_window[r - pos[0] + radius, c - pos[1] + radius]:
            continue
        moves.append(action)
    return moves


def safe_greedy_act(
    obs: Observation,
    belief: BeliefMap,
    goal: Coord,
    epsilon: float = DEFAULT_EPSILON,
    rng: np.random.Generator | None = None,
    seed: int = 0,
) -> Action:
    """Greedy step toward the goal among safe moves.

    With probability ``epsilon`` a uniform safe move is taken instead,
    which is what breaks symmetric stand-offs and dissolves crowding
    knots. WAIT only when no safe move exists. Ties follow the fixed
    action order.
    """
    if rng is None:
        rng = np.random.default_rng(seed)
    moves = safe_moves(obs, belief)
    if not moves:
        return Action.WAIT
    if epsilon > 0.0 and rng.random() < epsilon:
        return moves[int(rng.integers(len(moves)))]
    best = moves[0]
    best_dist = manhattan(apply_action(obs.center, best), goal)
    for action in moves[1:]:
        dist = manhattan(apply_action(obs.center, action), goal)
        if dist < best_dist:
            best, best_dist = action, dist
    return best


class SafeGreedyPolicy:
    """Default LocalPolicy: seeded epsilon-greedy over safe moves."""

    def __init__(self, epsilon: float = DEFAULT_EPSILON, seed: int = 0):
        self.epsilon = epsilon
        self.seed = seed
        self._rng = np.random.default_rng(seed)

    def act(self, obs: Observation, belief: BeliefMap, goal: Coord) -> Action:
        return safe_greedy_act(obs, belief, goal, epsilon=self.epsilon, rng=self._rng)


DEFAULT_CONFIG = HybridConfig()


def decide(
    agent: AgentState,
    obs: Observation,
    belief: BeliefMap,
    planner: DStarLitePlanner,
    policy: LocalPolicy,
    config: HybridConfig = DEFAULT_CONFIG,
) -> tuple[Action, DecisionTrace]:
    """One agent's action for this step.

    Congestion (neighbor count above the threshold) routes to the local
    policy outright. In planner mode, an empty plan triggers one
    from-scratch replan; if the plan is still empty, or the loop check
    fires, the step falls back to the local policy instead.
    """
    n = count_neighbors(obs)
    mode = select_mode(n, config.switch_threshold)
    agent.mode = mode
    if mode is Mode.LOCAL_POLICY:
        action = policy.act(obs, belief, agent.goal)
        return action, DecisionTrace(agent.id, n, mode, False, action, ActionSource.LOCAL_POLICY)

    if not planner.is_plan_valid_at(agent.pos):
        planner.compute_shortest_path(start=agent.pos)
    action = planner.get_first_action(agent.pos)
    if action is None:
        action = planner.replan_from_scratch(agent.pos)
    looped = (
        config.loop_detection
        and agent.pos != agent.goal
        and detect_loop(agent.history, config.loop_match_previous)
    )
    if action is None or looped:
        fallback = policy.act(obs, belief, agent.goal)
        return fallback, DecisionTrace(
            agent.id, n, mode, looped, fallback, ActionSource.FALLBACK
        )
    return action, DecisionTrace(agent.id, n, mode, looped, action, ActionSource.PLANNER)
