"""Shared driver for the study scripts."""

import argparse
import json
import logging
import time
from pathlib import Path

from multirdpg.simulation import SimulationSpec, run


def main(setting: str, **defaults):
    parser = argparse.ArgumentParser(description=f"run the {setting} study")
    parser.add_argument("--out", type=Path, default=Path("results") / setting)
    parser.add_argument("--replicates", type=int)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()
    logging.basicConfig(level=logging.WARNING)

    overrides = dict(defaults, seed=args.seed)
    if args.replicates is not None:
        overrides["replicates"] = args.replicates
    spec = SimulationSpec.default(setting, **overrides)
    start = time.perf_counter()
    report = run(spec, workers=args.workers)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "replicates.csv").write_text(report.to_csv())
    (args.out / "summary.json").write_text(report.summary_json())
    for row in report.summary:
        print(json.dumps(row))
    print(f"{time.perf_counter() - start:.1f}s -> {args.out}")
    return report
