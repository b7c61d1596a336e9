"""Command-line front end for the benchmark harness.

Subcommands: ``run`` (one configuration), ``sweep`` (agent-count sweep),
``ablate`` (information-regime x loop-detection grid), ``plot``
(re-render plots from an emitted table). Configurations come from flags,
from a preset, or from a plain key=value config file; flags win.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields, replace
from pathlib import Path

from .benchmark import (
    PRESETS,
    InfoRegime,
    ScenarioConfig,
    compare_reports,
    emit_results,
    load_results,
    plot_results,
    run_ablation_suite,
    run_batch,
)

_INT_KEYS = {
    "width", "height", "n_agents", "max_steps", "n_instances", "seed",
    "switch_threshold", "latency", "broadcast_period", "obs_radius",
}
_FLOAT_KEYS = {"density", "drop_rate", "epsilon"}
_BOOL_KEYS = {"loop_detection", "loop_match_previous"}


def parse_config_file(path: Path) -> dict:
    """key = value lines mirroring ScenarioConfig fields; '#' comments."""
    known = {f.name for f in fields(ScenarioConfig)}
    overrides: dict = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (tok.strip() for tok in line.split("=", 1))
        if key not in known:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        if key in _INT_KEYS:
            overrides[key] = int(value)
        elif key in _FLOAT_KEYS:
            overrides[key] = float(value)
        elif key in _BOOL_KEYS:
            overrides[key] = value.lower() in ("1", "true", "yes", "on")
        elif key == "regime":
            overrides[key] = InfoRegime(value)
        else:
            overrides[key] = value
    return overrides


def _add_scenario_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="key=value config file")
    parser.add_argument("--preset", choices=sorted(PRESETS), help="named base config")
    parser.add_argument("--map-size", help="grid size as WxH, e.g. 40x40")
    parser.add_argument("--density", type=float, help="obstacle fraction in [0,1)")
    parser.add_argument("--agents", help="agent count (comma list for sweep/ablate)")
    parser.add_argument("--max-steps", type=int)
    parser.add_argument("--instances", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--regime", choices=[r.value for r in InfoRegime])
    parser.add_argument("--no-loop-detection", action="store_true")
    parser.add_argument("--switch-threshold", type=int)
    parser.add_argument("--latency", type=int)
    parser.add_argument("--drop-rate", type=float)
    parser.add_argument("--epsilon", type=float)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--out", type=Path, default=Path("results"))
    parser.add_argument(
        "--format", default="table", help="comma list from {table,plot}"
    )


def _agent_counts(args) -> list[int] | None:
    if args.agents is None:
        return None
    return [int(tok) for tok in str(args.agents).split(",") if tok]


def build_config(args) -> ScenarioConfig:
    config = PRESETS[args.preset] if args.preset else ScenarioConfig()
    if args.config:
        config = replace(config, **parse_config_file(args.config))
    overrides: dict = {}
    if args.map_size:
        w, h = (int(tok) for tok in args.map_size.lower().split("x"))
        overrides["width"], overrides["height"] = w, h
    counts = _agent_counts(args)
    if counts:
        overrides["n_agents"] = counts[0]
    for flag, key in (
        ("density", "density"),
        ("max_steps", "max_steps"),
        ("instances", "n_instances"),
        ("seed", "seed"),
        ("switch_threshold", "switch_threshold"),
        ("latency", "latency"),
        ("drop_rate", "drop_rate"),
        ("epsilon", "epsilon"),
    ):
        value = getattr(args, flag)
        if value is not None:
            overrides[key] = value
    if args.regime:
        overrides["regime"] = InfoRegime(args.regime)
    if args.no_loop_detection:
        overrides["loop_detection"] = False
    return replace(config, **overrides)


def _formats(args) -> list[str]:
    formats = [tok.strip() for tok in args.format.split(",") if tok.strip()]
    unknown = set(formats) - {"table", "plot"}
    if unknown:
        raise SystemExit(f"unknown format(s): {', '.join(sorted(unknown))}")
    return formats


def _report_lines(reports) -> list[str]:
    lines = []
    for r in reports:
        cfg = r.config
        lines.append(
            f"{cfg.regime.value:>6} loop={int(cfg.loop_detection)} "
            f"agents={cfg.n_agents:>4}  SR={r.sr:.3f}  EL={r.el:.2f}  ICR={r.icr:.3f}"
        )
    return lines


def cmd_run(args) -> int:
    config = build_config(args)
    report = run_batch(config, workers=args.workers)
    written = emit_results([report], args.out, _formats(args))
    print("\n".join(_report_lines([report])))
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_sweep(args) -> int:
    config = build_config(args)
    counts = _agent_counts(args) or [config.n_agents]
    reports = [run_batch(replace(config, n_agents=n), workers=args.workers) for n in counts]
    written = emit_results(reports, args.out, _formats(args))
    print("\n".join(_report_lines(reports)))
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_ablate(args) -> int:
    config = build_config(args)
    counts = _agent_counts(args) or [config.n_agents]
    reports = run_ablation_suite(config, agent_counts=counts, workers=args.workers)
    written = emit_results(reports, args.out, _formats(args))
    comparisons = compare_reports(reports)
    print("\n".join(_report_lines(reports)))
    if comparisons:
        print("deltas vs shared-map/loop-on baseline:")
        for row in comparisons:
            print(
                f"{row['regime']:>6} loop={row['loop_detection']} "
                f"agents={row['agents']:>4}  dSR={row['sr_delta']:+.3f}  "
                f"dEL={row['el_delta']:+.2f}  dICR={row['icr_delta']:+.3f}"
            )
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_plot(args) -> int:
    rows = load_results(args.table)
    args.out.mkdir(parents=True, exist_ok=True)
    for path in plot_results(rows, args.out):
        print(f"wrote {path}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="pomapf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name, handler in (("run", cmd_run), ("sweep", cmd_sweep), ("ablate", cmd_ablate)):
        p = sub.add_parser(name)
        _add_scenario_flags(p)
        p.set_defaults(handler=handler)

    p_plot = sub.add_parser("plot")
    p_plot.add_argument("--table", type=Path, required=True, help="emitted results.csv")
    p_plot.add_argument("--out", type=Path, default=Path("results"))
    p_plot.set_defaults(handler=cmd_plot)

    args = parser.parse_args(argv)
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
