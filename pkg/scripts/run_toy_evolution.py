#!/usr/bin/env python3
"""Run one seeded toy evolution with a full event log and print the outcome."""

from __future__ import annotations

import argparse
from pathlib import Path

from evojudge.core import UserInstruction
from evojudge.engine import EvolutionConfig, run_evolution
from evojudge.runstore import RunStore, log_hash, make_run_id, replay, report
from evojudge.simlab import build_sim_agents, load_scenario


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--scenario", default="toy")
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--max-gen", type=int, default=3)
    parser.add_argument("--pop", type=int, default=4)
    parser.add_argument("--out", default=None, help="run directory (default runs/<scenario>-<seed>)")
    args = parser.parse_args()

    scenario = load_scenario(args.scenario)
    cfg = EvolutionConfig(
        population_size=args.pop, max_generations=args.max_gen, seed=args.seed
    )
    out = Path(args.out) if args.out else Path("runs") / f"{scenario.name}-{args.seed}"
    snapshot = {"engine": cfg.snapshot(), "scenario": scenario.name, "instruction": scenario.instruction}
    store = RunStore(out, make_run_id(scenario.instruction, snapshot), snapshot)
    result = run_evolution(
        UserInstruction(id=scenario.name, text=scenario.instruction),
        cfg,
        build_sim_agents(scenario, args.seed),
        store=store,
    )
    store.close()

    print(f"run directory: {out}")
    print(f"best fitness:  {result.best_fitness}")
    print(f"curve:         {list(result.curve)}")
    print(f"best solution: {result.best_solution.content!r}")
    print(f"log hash:      {log_hash(out)}")
    print(f"replay clean:  {replay(out).clean}")
    report(out)
    print(f"report:        {out / 'report.txt'}")


if __name__ == "__main__":
    main()
