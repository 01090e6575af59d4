#!/usr/bin/env python3
"""Run the cross-validated error-table benchmark from a config file.

Thin wrapper over `gpclassify bench`.  Typical usage:

    python scripts/run_benchmark.py --config configs/crab_table.cfg --out results/crab

Prepare the real datasets first with scripts/fetch_datasets.py; a tiny
synthetic smoke config ships at data/fixtures/fixture.cfg.
"""

import sys

from gpclassify.cli import main

if __name__ == "__main__":
    raise SystemExit(main(["bench"] + sys.argv[1:]))
