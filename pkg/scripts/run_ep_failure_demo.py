#!/usr/bin/env python3
"""Run the 2-d synthetic demonstration where raw EP fails and PL does not.

Thin wrapper over `gpclassify demo-ep-failure`:

    python scripts/run_ep_failure_demo.py --out results/demo

Writes contour.csv (exact posterior density grid), pl_iterates.csv,
pl_solution.csv (fixed-point mean and 3-sigma ellipse) and
ep_diagnostics.csv (first negative cavity variance per EP variant).
"""

import sys

from gpclassify.cli import main

if __name__ == "__main__":
    raise SystemExit(main(["demo-ep-failure"] + sys.argv[1:]))
