#!/usr/bin/env python3
"""Reproduce the obstacle-free 40x40 sanity table (8 and 16 agents).

Success rate should be 1.0 across the board; episode length lands close
to the per-instance Manhattan lower bound.
"""

import dataclasses
from pathlib import Path

from pomapf.benchmark import PRESETS, emit_results, run_batch

OUT = Path("results/zero_density")


def main():
    base = PRESETS["zero-40"]
    reports = [
        run_batch(dataclasses.replace(base, n_agents=n)) for n in (8, 16)
    ]
    for report in reports:
        cfg = report.config
        print(f"{cfg.n_agents:>3} agents: SR {report.sr:.3f}  EL {report.el:.2f}  "
              f"ICR {report.icr:.3f}")
    for path in emit_results(reports, OUT, formats=("table", "plot")):
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
