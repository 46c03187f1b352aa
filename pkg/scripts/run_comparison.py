#!/usr/bin/env python3
"""Head-to-head comparison of the size-biased estimator against the
detection-count model on simulated scenarios with known truth."""

import argparse
import json
import sys

from bugsize.baseline import ComparisonConfig, compare_models
from bugsize.simulator import default_scenario


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trials", type=int, default=200)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--q-detect", type=float, default=0.5)
    parser.add_argument("--iterations", type=int, default=600)
    args = parser.parse_args()

    report = compare_models(
        default_scenario(args.seed),
        trials=args.trials,
        seed=args.seed,
        comparison=ComparisonConfig(q_detect=args.q_detect, iterations=args.iterations),
    )
    print(json.dumps(report.as_doc(), indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
