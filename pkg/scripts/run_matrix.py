#!/usr/bin/env python3
"""Run the full scenario matrix in-process and print a result table.

Usage: python scripts/run_matrix.py [--seed 0] [--skew 0] [--trace]
"""

from __future__ import annotations

import argparse
import time
from pathlib import Path

from samlforge.harness.scenarios import parse_scenarios, run_scenarios

MATRIX = Path(__file__).with_name("matrix.scenarios")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--skew", type=int, default=0)
    parser.add_argument("--trace", action="store_true", help="print full event traces")
    args = parser.parse_args()

    scenarios = parse_scenarios(MATRIX.read_text(encoding="utf-8"))
    started = time.monotonic()
    results = run_scenarios(scenarios, seed=args.seed, skew=args.skew)
    elapsed = time.monotonic() - started

    width = max(len(r.scenario.name) for r in results)
    failures = 0
    for result in results:
        flag = "PASS" if result.ok else "FAIL"
        print(f"{flag} {result.scenario.name:<{width}}  {result.actual}")
        if not result.ok:
            failures += 1
        if args.trace:
            for event in result.trace:
                print(f"     {event.render()}")
    print(f"\n{len(results) - failures}/{len(results)} matched in {elapsed:.2f}s")
    return 0 if failures == 0 else 1


if __name__ == "__main__":
    raise SystemExit(main())
