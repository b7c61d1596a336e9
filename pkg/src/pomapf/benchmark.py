"""Experiment harness: seeded batches, metrics, ablations, result emission.

An episode runs the synchronous loop (observe, extract and share deltas,
decide, execute) until every agent has exited or the step cap is hit.
Batches aggregate success rate (all agents arrived), episode length
(mean makespan, counted as the cap on failure) and independent
completion rate (fraction of agents that individually arrived). The
three information regimes and the loop-detection switch span the
ablation grid.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Sequence

from .dstar_lite import DStarLitePlanner
from .gridworld import (
    Action,
    AgentState,
    Coord,
    GridMap,
    InstanceInfeasible,
    active_occupancy,
    apply_joint_action,
    generate_instance,
    generate_map,
    make_agents,
    observe,
)
from .hybrid_policy import (
    DEFAULT_EPSILON,
    HybridConfig,
    SafeGreedyPolicy,
    decide,
    trace_to_line,
)
from .shared_map import (
    BeliefMap,
    CommChannel,
    GridMemory,
    extract_delta,
    fuse,
    memory_update,
    merge_deltas,
)


class InfoRegime(Enum):
    FULL = "full"
    SHARED = "shared"
    LOCAL = "local"


@dataclass(frozen=True)
class ScenarioConfig:
    width: int = 40
    height: int = 40
    density: float = 0.30
    n_agents: int = 8
    max_steps: int = 320
    n_instances: int = 100
    seed: int = 0
    regime: InfoRegime = InfoRegime.SHARED
    loop_detection: bool = True
    loop_match_previous: bool = True
    switch_threshold: int = 4
    latency: int = 0
    drop_rate: float = 0.0
    broadcast_period: int = 1
    obs_radius: int = 4
    epsilon: float = DEFAULT_EPSILON

    def hybrid(self) -> HybridConfig:
        return HybridConfig(
            switch_threshold=self.switch_threshold,
            loop_detection=self.loop_detection,
            loop_match_previous=self.loop_match_previous,
        )

    def instance_seeds(self) -> list[int]:
        return [self.seed + k for k in range(self.n_instances)]


@dataclass(frozen=True)
class EpisodeRecord:
    instance_seed: int
    n_agents: int
    success: bool
    makespan: int
    arrival_times: tuple  # per-agent step index or None
    conflicts: int
    obstacle_hits: int
    mode_switches: tuple
    loop_events: tuple
    # Raw x_t == x_{t-2} repeats per agent, counted whether or not loop
    # detection is enabled; this is what the anti-freeze ablation compares.
    oscillations: tuple = ()
    failure_reason: str | None = None

    @property
    def completion_rate(self) -> float:
        """Fraction of agents that individually reached their goal."""
        arrived = sum(1 for t in self.arrival_times if t is not None)
        return arrived / self.n_agents


@dataclass(frozen=True)
class AggregateReport:
    config: ScenarioConfig
    sr: float
    el: float
    icr: float
    conflicts_mean: float
    obstacle_hits_mean: float
    records: tuple = field(repr=False, default=())

    def row(self) -> dict:
        cfg = self.config
        return {
            "regime": cfg.regime.value,
            "loop_detection": int(cfg.loop_detection),
            "agents": cfg.n_agents,
            "width": cfg.width,
            "height": cfg.height,
            "density": cfg.density,
            "max_steps": cfg.max_steps,
            "instances": cfg.n_instances,
            "sr": self.sr,
            "el": self.el,
            "icr": self.icr,
            "conflicts": self.conflicts_mean,
            "obstacle_hits": self.obstacle_hits_mean,
        }


RESULT_COLUMNS = [
    "regime",
    "loop_detection",
    "agents",
    "width",
    "height",
    "density",
    "max_steps",
    "instances",
    "sr",
    "el",
    "icr",
    "conflicts",
    "obstacle_hits",
]


def _derive_seed(seed: int, stream: int) -> int:
    # Cheap deterministic stream split; good enough to decorrelate the
    # map, instance, policy and channel generators of one episode.
    return (seed * 1_000_003 + stream) % (2**63)


def _infeasible_record(config: ScenarioConfig, instance_seed: int) -> EpisodeRecord:
    n = config.n_agents
    return EpisodeRecord(
        instance_seed=instance_seed,
        n_agents=n,
        success=False,
        makespan=config.max_steps,
        arrival_times=(None,) * n,
        conflicts=0,
        obstacle_hits=0,
        mode_switches=(0,) * n,
        loop_events=(0,) * n,
        oscillations=(0,) * n,
        failure_reason="infeasible",
    )


def run_episode(
    config: ScenarioConfig,
    instance_seed: int,
    trace_sink: IO[str] | None = None,
    on_step=None,
) -> EpisodeRecord:
    """Generate a map and instance for ``instance_seed`` and run it."""
    grid = generate_map(
        config.width, config.height, config.density, _derive_seed(instance_seed, 1)
    )
    tasks = generate_instance(grid, config.n_agents, _derive_seed(instance_seed, 2))
    return run_episode_on(
        grid, tasks, config, instance_seed, trace_sink=trace_sink, on_step=on_step
    )


def run_episode_on(
    grid: GridMap,
    tasks: Sequence[tuple[Coord, Coord]],
    config: ScenarioConfig,
    instance_seed: int = 0,
    trace_sink: IO[str] | None = None,
    on_step=None,
) -> EpisodeRecord:
    """Run the synchronous loop on a prebuilt map and task set."""
    agents = make_agents(tasks)
    n = len(agents)
    policy_seed = _derive_seed(instance_seed, 3)

    if config.regime is InfoRegime.FULL:
        beliefs = [BeliefMap.from_truth(grid) for _ in range(n)]
    else:
        beliefs = [BeliefMap.unknown(grid.width, grid.height) for _ in range(n)]
    planners = [
        DStarLitePlanner(beliefs[i], tasks[i][0], tasks[i][1]) for i in range(n)
    ]
    policies = [
        SafeGreedyPolicy(config.epsilon, seed=_derive_seed(policy_seed, i))
        for i in range(n)
    ]
    memories = [GridMemory() for _ in range(n)]
    channel = None
    if config.regime is InfoRegime.SHARED:
        channel = CommChannel(
            n,
            latency=config.latency,
            drop_rate=config.drop_rate,
            seed=_derive_seed(instance_seed, 4),
        )
    hybrid_cfg = config.hybrid()

    conflicts = 0
    obstacle_hits = 0
    mode_switches = [0] * n
    loop_events = [0] * n
    oscillations = [0] * n
    last_mode = [None] * n
    success = False
    makespan = config.max_steps

    for step in range(1, config.max_steps + 1):
        occupancy = active_occupancy(grid, agents)
        observations = {}
        for a in agents:
            if not a.active:
                continue
            obs = observe(grid, agents, a.id, config.obs_radius, occupancy=occupancy)
            observations[a.id] = obs
            memory_update(memories[a.id], obs)
            if config.regime is not InfoRegime.FULL:
                delta = extract_delta(obs, beliefs[a.id], origin=a.id, step=step)
                if len(delta):
                    changed = fuse(beliefs[a.id], delta)
                    planners[a.id].apply_belief_delta(changed, a.pos)
                    if channel is not None and (step - 1) % config.broadcast_period == 0:
                        channel.broadcast(delta, step)

        if channel is not None:
            _deliver_and_fuse(channel, step, agents, beliefs, planners, config.drop_rate)

        actions: dict[int, Action] = {}
        for a in agents:
            if not a.active:
                actions[a.id] = Action.WAIT
                continue
            action, trace = decide(
                a, observations[a.id], beliefs[a.id], planners[a.id],
                policies[a.id], hybrid_cfg,
            )
            actions[a.id] = action
            if trace.loop_detected:
                loop_events[a.id] += 1
            if last_mode[a.id] is not None and trace.mode is not last_mode[a.id]:
                mode_switches[a.id] += 1
            last_mode[a.id] = trace.mode
            if trace_sink is not None:
                trace_sink.write(trace_to_line(trace, step) + "\n")

        outcome = apply_joint_action(grid, agents, actions, step)
        conflicts += len(outcome.collisions)
        obstacle_hits += len(outcome.obstacle_hits)
        for a in agents:
            hist = a.history
            if a.id in observations and len(hist) >= 3 and hist[-1] == hist[-3]:
                oscillations[a.id] += 1
        if on_step is not None:
            on_step(step, agents, outcome)

        if all(not a.active for a in agents):
            success = True
            makespan = step
            break

    return EpisodeRecord(
        instance_seed=instance_seed,
        n_agents=n,
        success=success,
        makespan=makespan,
        arrival_times=tuple(a.arrival_time for a in agents),
        conflicts=conflicts,
        obstacle_hits=obstacle_hits,
        mode_switches=tuple(mode_switches),
        loop_events=tuple(loop_events),
        oscillations=tuple(oscillations),
        failure_reason=None if success else "timeout",
    )


def _deliver_and_fuse(
    channel: CommChannel,
    step: int,
    agents: Sequence[AgentState],
    beliefs: Sequence[BeliefMap],
    planners: Sequence[DStarLitePlanner],
    drop_rate: float,
) -> None:
    packets = list(channel.deliver(step))
    if not packets:
        return
    if drop_rate == 0.0:
        # Everyone receives everything; re-fusing an origin's own delta is
        # an idempotent no-op, so one combined delta serves all agents.
        combined = merge_deltas([d for d, _ in packets], step=step)
        for a in agents:
            if not a.active:
                continue
            changed = fuse(beliefs[a.id], combined)
            if len(changed):
                planners[a.id].apply_belief_delta(changed, a.pos)
        return
    for a in agents:
        if not a.active:
            continue
        mine = [
            d for d, dropped in packets if d.origin != a.id and a.id not in dropped
        ]
        if not mine:
            continue
        changed = fuse(beliefs[a.id], merge_deltas(mine, step=step))
        if len(changed):
            planners[a.id].apply_belief_delta(changed, a.pos)


def _run_episode_guarded(config: ScenarioConfig, instance_seed: int) -> EpisodeRecord:
    try:
        return run_episode(config, instance_seed)
    except InstanceInfeasible:
        return _infeasible_record(config, instance_seed)


def run_batch(config: ScenarioConfig, workers: int = 1) -> AggregateReport:
    """Run all instances of a config and aggregate.

    Episodes are independent; with ``workers > 1`` they run in a process
    pool. Aggregation folds records in instance-seed order either way, so
    the report does not depend on execution order.
    """
    seeds = config.instance_seeds()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_episode_guarded, [config] * len(seeds), seeds))
    else:
        records = [_run_episode_guarded(config, s) for s in seeds]
    records.sort(key=lambda r: r.instance_seed)
    return aggregate(config, records)


def aggregate(config: ScenarioConfig, records: Sequence[EpisodeRecord]) -> AggregateReport:
    n = len(records)
    if n == 0:
        return AggregateReport(config, 0.0, 0.0, 0.0, 0.0, 0.0, ())
    return AggregateReport(
        config=config,
        sr=sum(r.success for r in records) / n,
        el=sum(r.makespan for r in records) / n,
        icr=sum(r.completion_rate for r in records) / n,
        conflicts_mean=sum(r.conflicts for r in records) / n,
        obstacle_hits_mean=sum(r.obstacle_hits for r in records) / n,
        records=tuple(records),
    )


def run_ablation_suite(
    base: ScenarioConfig,
    agent_counts: Sequence[int] | None = None,
    regimes: Sequence[InfoRegime] = (InfoRegime.FULL, InfoRegime.SHARED, InfoRegime.LOCAL),
    loop_options: Sequence[bool] = (True, False),
    workers: int = 1,
) -> list[AggregateReport]:
    """Cross product {regimes} x {loop on/off} over an agent-count sweep."""
    counts = list(agent_counts) if agent_counts is not None else [base.n_agents]
    reports = []
    for regime in regimes:
        for loop_detection in loop_options:
            for count in counts:
                cfg = replace(
                    base, regime=regime, loop_detection=loop_detection, n_agents=count
                )
                reports.append(run_batch(cfg, workers=workers))
    return reports


def compare_reports(reports: Sequence[AggregateReport]) -> list[dict]:
    """Per-cell deltas against the shared-map, loop-on cell with the same
    agent count; empty when no such baseline exists."""
    baselines = {
        r.config.n_agents: r
        for r in reports
        if r.config.regime is InfoRegime.SHARED and r.config.loop_detection
    }
    rows = []
    for r in reports:
        base = baselines.get(r.config.n_agents)
        if base is None or r is base:
            continue
        rows.append(
            {
                "regime": r.config.regime.value,
                "loop_detection": int(r.config.loop_detection),
                "agents": r.config.n_agents,
                "sr_delta": r.sr - base.sr,
                "el_delta": r.el - base.el,
                "icr_delta": r.icr - base.icr,
            }
        )
    return rows


# ---------------------------------------------------------------------------
# Result emission


def write_results(reports: Iterable[AggregateReport], path: Path) -> None:
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS)
            writer.writeheader()
            for report in reports:
                writer.writerow(report.row())
    except OSError as exc:
        raise OSError(f"cannot write results table to {path}: {exc}") from exc


def load_results(path: Path) -> list[dict]:
    """Rows of an emitted table with numeric fields parsed back."""
    try:
        with open(path, newline="") as fh:
            raw = list(csv.DictReader(fh))
    except OSError as exc:
        raise OSError(f"cannot read results table from {path}: {exc}") from exc
    rows = []
    for entry in raw:
        row = dict(entry)
        for key in ("loop_detection", "agents", "width", "height", "max_steps", "instances"):
            row[key] = int(row[key])
        for key in ("density", "sr", "el", "icr", "conflicts", "obstacle_hits"):
            row[key] = float(row[key])
        rows.append(row)
    return rows


def plot_results(rows: Sequence[dict], out_dir: Path) -> list[Path]:
    """SR-vs-agents and EL-vs-agents, one series per (regime, loop) cell."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    series: dict[tuple[str, int], list[dict]] = {}
    for row in rows:
        series.setdefault((row["regime"], row["loop_detection"]), []).append(row)
    written = []
    for metric, label, fname in (
        ("sr", "success rate", "sr_vs_agents.png"),
        ("el", "episode length (steps)", "el_vs_agents.png"),
    ):
        fig, ax = plt.subplots(figsize=(6, 4))
        for (regime, loop), cells in sorted(series.items()):
            cells = sorted(cells, key=lambda r: r["agents"])
            name = regime + ("" if loop else ", no loop detection")
            ax.plot(
                [c["agents"] for c in cells],
                [c[metric] for c in cells],
                marker="o",
                label=name,
            )
        ax.set_xlabel("agents")
        ax.set_ylabel(label)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = out_dir / fname
        try:
            fig.savefig(path, dpi=120)
        except OSError as exc:
            raise OSError(f"cannot write plot to {path}: {exc}") from exc
        finally:
            plt.close(fig)
        written.append(path)
    return written


def emit_results(
    reports: Sequence[AggregateReport],
    out_dir: Path | str,
    formats: Sequence[str] = ("table",),
) -> list[Path]:
    """Write the results table and, on request, the comparison plots."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "table" in formats:
        table = out / "results.csv"
        write_results(reports, table)
        written.append(table)
    if "plot" in formats and reports:
        written.extend(plot_results([r.row() for r in reports], out))
    return written


# Named configurations with pinned seeds so reported numbers reproduce
# exactly. Step caps scale linearly with the map side: 256 at 20x20, 320
# at 40x40, 448 at 80x80; the 64x64 throughput preset keeps the 512-step
# cap that size is usually run with.
PRESETS: dict[str, ScenarioConfig] = {
    "dense-20": ScenarioConfig(width=20, height=20, density=0.30, n_agents=8,
                               max_steps=256, n_instances=100, seed=9000),
    "zero-40": ScenarioConfig(width=40, height=40, density=0.0, n_agents=8,
                              max_steps=320, n_instances=100, seed=9100),
    "sparse-40": ScenarioConfig(width=40, height=40, density=0.15, n_agents=8,
                                max_steps=320, n_instances=100, seed=9200),
    "dense-40": ScenarioConfig(width=40, height=40, density=0.30, n_agents=8,
                               max_steps=320, n_instances=100, seed=9300),
    "loop-ablation-40": ScenarioConfig(width=40, height=40, density=0.30, n_agents=32,
                                       max_steps=320, n_instances=100, seed=9400),
    "shared-map-ablation-80": ScenarioConfig(width=80, height=80, density=0.30,
                                             n_agents=128, max_steps=448,
                                             n_instances=100, seed=9500),
    "throughput-64": ScenarioConfig(width=64, height=64, density=0.30, n_agents=64,
                                    max_steps=512, n_instances=100, seed=9600),
}
