"""Partially observable multi-agent pathfinding on shared exploration maps.

Agents plan globally with an incremental D* Lite planner over their own
belief of the map, hand control to a reactive local policy in congested
or looping situations, and keep beliefs synchronized by exchanging
per-step observation deltas.
"""

from .gridworld import (
    Action,
    AgentState,
    Coord,
    GridMap,
    Observation,
    StepOutcome,
    apply_joint_action,
    compute_reward,
    generate_instance,
    generate_map,
    observe,
)
from .shared_map import (
    BeliefMap,
    CommChannel,
    GridMemory,
    MapDelta,
    extract_delta,
    fuse,
    memory_update,
    remove_blocked_edges,
)
from .dstar_lite import DStarLitePlanner, PlanResult
from .hybrid_policy import (
    DecisionTrace,
    HybridConfig,
    LocalPolicy,
    Mode,
    SafeGreedyPolicy,
    count_neighbors,
    decide,
    detect_loop,
    safe_greedy_act,
    select_mode,
)
from .benchmark import (
    AggregateReport,
    EpisodeRecord,
    InfoRegime,
    ScenarioConfig,
    emit_results,
    run_ablation_suite,
    run_batch,
    run_episode,
)

__version__ = "0.1.0"
