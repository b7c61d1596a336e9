#!/usr/bin/env python3
"""Shared-exploration-map ablation on the 80x80 grid at 30% density.

Sweeps the agent count over the three information regimes (full
information, shared map, local map only) and emits the SR/EL curves.
Expect the shared-map regime to track full information closely and
local-only to fall behind as the agent count grows. The full sweep takes
a while; trim --counts for a smoke run.
"""

import argparse
import dataclasses
from pathlib import Path

from pomapf.benchmark import (
    PRESETS,
    InfoRegime,
    compare_reports,
    emit_results,
    run_batch,
)

OUT = Path("results/shared_map_ablation")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--counts", default="8,32,64,128",
                        help="comma list of agent counts")
    parser.add_argument("--instances", type=int, default=None,
                        help="override instances per cell")
    args = parser.parse_args()

    base = PRESETS["shared-map-ablation-80"]
    if args.instances:
        base = dataclasses.replace(base, n_instances=args.instances)
    counts = [int(tok) for tok in args.counts.split(",")]

    reports = []
    for regime in (InfoRegime.FULL, InfoRegime.SHARED, InfoRegime.LOCAL):
        for count in counts:
            cfg = dataclasses.replace(base, regime=regime, n_agents=count)
            report = run_batch(cfg)
            reports.append(report)
            print(f"{regime.value:>6} {count:>4} agents: SR {report.sr:.3f}  "
                  f"EL {report.el:.1f}  ICR {report.icr:.3f}", flush=True)
    for row in compare_reports(reports):
        print(f"delta vs shared: {row['regime']:>6} agents={row['agents']:>4} "
              f"dSR={row['sr_delta']:+.3f} dEL={row['el_delta']:+.1f}")
    for path in emit_results(reports, OUT, formats=("table", "plot")):
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
