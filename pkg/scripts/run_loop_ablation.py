#!/usr/bin/env python3
"""Loop-detection ablation on the 40x40 grid at 30% density.

Runs the agent-count sweep with the anti-freeze check enabled and
disabled. With detection on, the independent completion rate should stay
near 1.0; without it, head-on stand-offs freeze agents and both SR and
ICR collapse as the population grows.
"""

import argparse
import dataclasses
import statistics
from pathlib import Path

from pomapf.benchmark import PRESETS, emit_results, run_batch

OUT = Path("results/loop_ablation")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--counts", default="8,16,32,64")
    parser.add_argument("--instances", type=int, default=None)
    args = parser.parse_args()

    base = PRESETS["loop-ablation-40"]
    if args.instances:
        base = dataclasses.replace(base, n_instances=args.instances)
    counts = [int(tok) for tok in args.counts.split(",")]

    reports = []
    for loop_detection in (True, False):
        for count in counts:
            cfg = dataclasses.replace(
                base, loop_detection=loop_detection, n_agents=count
            )
            report = run_batch(cfg)
            reports.append(report)
            osc = statistics.mean(
                sum(r.oscillations) / r.n_agents for r in report.records
            )
            print(f"loop={int(loop_detection)} {count:>3} agents: "
                  f"SR {report.sr:.3f}  EL {report.el:.1f}  ICR {report.icr:.3f}  "
                  f"osc/agent {osc:.1f}", flush=True)
    for path in emit_results(reports, OUT, formats=("table", "plot")):
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
