"""Run the Monte Carlo bound checks and print one verdict line per check.

Example:
    python3 scripts/run_bound_suite.py --bound L1_pen1 --bound L7_pen0 --replications 1000
"""

import argparse
import json
import os
import time

from activereg.scenarios import SCENARIOS
from activereg.validation import BOUND_IDS, DEFAULT_PLAN, run_suite


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--bound", action="append", choices=BOUND_IDS, help="repeatable; default: all")
    ap.add_argument("--replications", type=int, help="override every replication count")
    ap.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--json", help="also write the report here")
    args = ap.parse_args()

    bounds = args.bound or list(BOUND_IDS)
    needed = {DEFAULT_PLAN[b][0] for b in bounds}
    scenarios = {name: SCENARIOS[name]() for name in sorted(needed)}
    reps = {b: args.replications for b in bounds} if args.replications else None
    start = time.perf_counter()
    report = run_suite(scenarios, bounds, workers=args.workers, replications=reps)
    for line in report.lines():
        print(line)
    for bid, secs in report.wall_times().items():
        print(f"  {bid}: {secs:.1f}s")
    print(f"total {time.perf_counter() - start:.1f}s, all passed: {report.passed()}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
