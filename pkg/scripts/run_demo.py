#!/usr/bin/env python3
"""Run the demo campaign end to end and print the experiment readout.

Expects a workspace created by make_demo_data.py. Executes the pipeline,
synthesizes engagement with the probabilities from the config, and prints
the per-metric lift/z table.

Usage:
    python scripts/run_demo.py --demo-dir demo --seed 11
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from subjectforge.campaign import load_campaign_config, run_campaign
from subjectforge.delivery import EngagementProbs, sim_engagement
from subjectforge.metrics import aggregate_rates, analyze, render_table


def main() -> int:
    parser = argparse.ArgumentParser(description="run the demo campaign")
    parser.add_argument("--demo-dir", default="demo")
    parser.add_argument("--seed", type=int, default=11)
    parser.add_argument("--fresh", action="store_true", help="delete a previous event log first")
    args = parser.parse_args()

    config_path = Path(args.demo_dir) / "campaign.json"
    if not config_path.exists():
        print(f"no campaign config at {config_path}; run make_demo_data.py first", file=sys.stderr)
        return 1
    config = load_campaign_config(config_path)
    if args.fresh and config.events_path.exists():
        config.events_path.unlink()

    summary = run_campaign(config)
    print("campaign summary:")
    print(json.dumps(summary.to_dict(), indent=2))

    probs = EngagementProbs.from_dict(config.engagement)
    counts = sim_engagement(config.events_path, probs, seed=args.seed)
    print(f"\nsynthetic engagement (seed {args.seed}): {counts}")

    table = aggregate_rates(config.events_path)
    results = analyze(table)
    print("\nfunnel counts:")
    print(json.dumps(table.to_dict(), indent=2))
    print("\nexperiment readout:")
    print(render_table(results))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
