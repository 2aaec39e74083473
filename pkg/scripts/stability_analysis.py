#!/usr/bin/env python3
"""Judge-stability analysis: repeated noisy ratings, mean-vs-std correlation, ICC."""

from __future__ import annotations

import argparse
from pathlib import Path

from evojudge.simlab import build_stability_cases, load_scenario, stability_experiment, write_scores_csv
from evojudge.stats import RatingsMatrix, stability_report


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--scenario", default="stability")
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--out", default="stability-out")
    args = parser.parse_args()

    scenario = load_scenario(args.scenario)
    cases = build_stability_cases(scenario.rules, scenario.stability_cases)
    scores = stability_experiment(
        cases, scenario.noise, scenario.stability_repeats, seed=args.seed
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_scores_csv(scores, out / "scores.csv")

    report = stability_report(RatingsMatrix.from_rows(scores.scores))
    (out / "stability_report.txt").write_text(report.to_text(), encoding="utf-8")
    print(report.to_text(), end="")
    print(f"\nscores: {out / 'scores.csv'}")


if __name__ == "__main__":
    main()
