#!/usr/bin/env python3
"""Paired ablation: feedback-guided vs score-only mutation over seeded runs.

Measures the value of semantic feedback the same way the acceptance suite
does: identical seeds, identical initial populations, two mutation modes.
"""

from __future__ import annotations

import argparse

from evojudge.core import UserInstruction
from evojudge.engine import EvolutionConfig, run_evolution
from evojudge.simlab import build_sim_agents, load_scenario


def mean(values) -> float:
    return sum(values) / len(values)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--scenario", default="toy")
    parser.add_argument("--runs", type=int, default=100)
    parser.add_argument("--max-gen", type=int, default=3)
    args = parser.parse_args()

    scenario = load_scenario(args.scenario)
    instruction = UserInstruction(id=scenario.name, text=scenario.instruction)

    results = {}
    for mode in ("full", "score_only"):
        finals = []
        initials = []
        for seed in range(args.runs):
            cfg = EvolutionConfig(seed=seed, max_generations=args.max_gen, ablation=mode)
            r = run_evolution(instruction, cfg, build_sim_agents(scenario, seed))
            finals.append(r.best_fitness)
            initials.append(r.curve[0])
        results[mode] = (mean(initials), mean(finals))

    init_full, final_full = results["full"]
    _, final_score = results["score_only"]
    print(f"runs per mode:          {args.runs}")
    print(f"mean initial best:      {init_full:.4f}")
    print(f"mean final (feedback):  {final_full:.4f}")
    print(f"mean final (score-only):{final_score:.4f}")
    print(f"evolution gain:         {final_full - init_full:+.4f}")
    print(f"feedback advantage:     {final_full - final_score:+.4f}")


if __name__ == "__main__":
    main()
