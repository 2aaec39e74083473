"""Operator entry points: decompose, evolve, judge, stability, report, replay.

Exit codes: 0 on success, 1 on domain errors (failed decomposition, dirty
replay verdicts, transport failures), 2 on usage errors (bad flags, odd
population sizes, missing inputs). Subcommands write only inside their
--out / --run directory. Human-edited configuration is TOML; everything
machine-to-machine is JSON.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from evojudge import core, runstore, simlab, stats
from evojudge.agents import AgentConfig, AgentSet, LlmDecomposer, LlmJudge, build_llm_agents
from evojudge.core import DomainError, UserInstruction
from evojudge.engine import EvolutionConfig, run_evolution
from evojudge.gateway import ChatGateway, GatewayConfig, PriceTable
from evojudge.render import RendererConfig


def _usage_error(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 2


def _read_text_source(source: str) -> str:
    if source == "-":
        return sys.stdin.read()
    path = Path(source)
    if not path.is_file():
        raise FileNotFoundError(source)
    return path.read_text(encoding="utf-8")


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _renderer_from_config(config: dict) -> RendererConfig:
    raw = config.get("render", {})
    return RendererConfig(
        kind=raw.get("kind", "identity"),
        command_template=raw.get("command_template"),
        output_name=raw.get("output_name"),
        timeout_s=float(raw.get("timeout_s", 60.0)),
    )


def _gateway_from_config(config: dict, event_sink=None) -> ChatGateway:
    raw = config.get("gateway", {})
    gw_config = GatewayConfig.from_env(
        base_url=raw.get("base_url"),
        api_key=raw.get("api_key"),
        timeout_s=float(raw.get("timeout_s", 60.0)),
        max_attempts=int(raw.get("max_attempts", 5)),
    )
    prices = PriceTable()
    if raw.get("price_table"):
        prices = PriceTable.from_json(raw["price_table"])
    return ChatGateway(gw_config, price_table=prices, event_sink=event_sink)


def _agent_config(config: dict, role: str) -> AgentConfig:
    raw = config.get("agents", {}).get(role)
    if raw is None:
        raise core.InvalidInputError(f"config has no [agents.{role}] section")
    return AgentConfig(
        role=role,  # type: ignore[arg-type]
        model=raw.get("model", ""),
        temperature=raw.get("temperature"),
        max_output_tokens=int(raw.get("max_output_tokens", 2048)),
        template_id=raw.get("template_id"),
    )


def _llm_agents(config: dict, event_sink=None) -> tuple[AgentSet, ChatGateway]:
    gateway = _gateway_from_config(config, event_sink=event_sink)
    configs = {role: _agent_config(config, role) for role in ("decomposer", "creator", "judge")}
    agents_raw = config.get("agents", {})
    return (
        build_llm_agents(
            gateway,
            configs,
            template_dir=agents_raw.get("template_dir"),
            solution_kind=agents_raw.get("solution_kind", "text"),
        ),
        gateway,
    )


def _sim_scenario_name(args, config: dict) -> str | None:
    if getattr(args, "sim", None):
        return args.sim
    agents_cfg = config.get("agents", {})
    if agents_cfg.get("provider") == "sim":
        return agents_cfg.get("scenario", "toy")
    return None


def _requirements_to_json(rset: core.RequirementSet) -> str:
    return json.dumps(
        {
            "k": rset.k,
            "requirements": [
                {"id": r.id, "assertion": r.assertion, "prerequisites": list(r.prerequisites)}
                for r in rset.requirements
            ],
        },
        indent=2,
        sort_keys=True,
    )


def cmd_decompose(args) -> int:
    try:
        text = _read_text_source(args.instruction)
    except FileNotFoundError:
        return _usage_error(f"instruction file not found: {args.instruction}")
    if not text.strip():
        return _usage_error("instruction is empty")
    config = _load_config(args.config)
    scenario_name = _sim_scenario_name(args, config)
    instruction = UserInstruction(id="cli", text=text)
    if scenario_name:
        rset = simlab.load_scenario(scenario_name).requirement_set()
    else:
        gateway = _gateway_from_config(config)
        rset = LlmDecomposer(gateway, _agent_config(config, "decomposer")).decompose(instruction)
    print(_requirements_to_json(rset))
    return 0


def cmd_evolve(args) -> int:
    try:
        text = _read_text_source(args.task)
    except FileNotFoundError:
        return _usage_error(f"task file not found: {args.task}")
    if not text.strip():
        return _usage_error("task instruction is empty")
    config = _load_config(args.config)

    engine_raw = config.get("engine", {})
    population = args.pop if args.pop is not None else int(engine_raw.get("population", 4))
    max_gen = args.max_gen if args.max_gen is not None else int(engine_raw.get("max_generations", 3))
    seed = args.seed if args.seed is not None else int(engine_raw.get("seed", 0))
    elite = int(engine_raw.get("elite_count", 1))
    ablation = "score_only" if args.ablate_feedback else engine_raw.get("ablation", "full")
    if population % 2 != 0 or population < 2:
        return _usage_error(f"population size must be even and >= 2, got {population}")
    if max_gen < 0:
        return _usage_error("--max-gen must be >= 0")

    out_dir = Path(args.out)
    if (out_dir / "run.jsonl").exists():
        return _usage_error(f"{out_dir} already holds a run log")

    scenario_name = _sim_scenario_name(args, config)
    cfg = EvolutionConfig(
        population_size=population,
        max_generations=max_gen,
        elite_count=elite,
        seed=seed,
        ablation=ablation,
        renderer=_renderer_from_config(config),
    )

    snapshot = {
        "engine": cfg.snapshot(),
        "scenario": scenario_name,
        "instruction": text,
        "agents": None if scenario_name else config.get("agents"),
    }
    run_id = runstore.make_run_id(text, snapshot)
    store = runstore.RunStore(out_dir, run_id, snapshot)
    gateway = None
    try:
        if scenario_name:
            scenario = simlab.load_scenario(scenario_name)
            agents = simlab.build_sim_agents(scenario, seed)
        else:
            sink = lambda payload: store.append_event("gateway_call", payload)
            agents, gateway = _llm_agents(config, event_sink=sink)
        instruction = UserInstruction(id="cli", text=text)
        result = run_evolution(instruction, cfg, agents, store=store, gateway=gateway)
    finally:
        store.close()

    runstore.report(out_dir)
    print(f"run directory: {out_dir}")
    print(f"best fitness: {result.best_fitness}")
    print(f"best-fitness curve: {list(result.curve)}")
    print(f"report: {out_dir / 'report.json'}")
    return 0


def cmd_judge(args) -> int:
    try:
        text = _read_text_source(args.artifact)
    except FileNotFoundError:
        return _usage_error(f"artifact file not found: {args.artifact}")
    if not text.strip():
        return _usage_error("artifact is empty")
    config = _load_config(args.config)
    artifact = core.Artifact.from_text(text)
    scenario_name = _sim_scenario_name(args, config)
    if scenario_name:
        scenario = simlab.load_scenario(scenario_name)
        rset = scenario.requirement_set()
        judge = simlab.SimJudge(scenario.rules, noise=scenario.noise, seed=args.seed or 0)
        evaluation = judge.judge(artifact, rset)
    elif args.requirements:
        raw = json.loads(Path(args.requirements).read_text(encoding="utf-8"))
        entries = raw["requirements"] if isinstance(raw, dict) else raw
        rset = core.validate_requirement_set(
            [
                core.Requirement(
                    id=r["id"],
                    assertion=r["assertion"],
                    prerequisites=tuple(r.get("prerequisites", [])),
                )
                for r in entries
            ]
        )
        gateway = _gateway_from_config(config)
        evaluation = LlmJudge(gateway, _agent_config(config, "judge")).judge(artifact, rset)
    else:
        return _usage_error("judge needs --sim or --requirements")
    print(
        json.dumps(
            {
                "scores": list(evaluation.scores),
                "fitness": core.aggregate_fitness(evaluation.scores),
                "feedback_notes": dict(evaluation.feedback.notes),
                "suggestions": list(evaluation.feedback.suggestions),
            },
            indent=2,
            sort_keys=True,
        )
    )
    return 0


def cmd_stability(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.input:
        if not Path(args.input).is_file():
            return _usage_error(f"scores CSV not found: {args.input}")
        matrix = stats.read_scores_csv(args.input)
    else:
        scenario = simlab.load_scenario(args.simulate)
        cases = simlab.build_stability_cases(scenario.rules, scenario.stability_cases)
        scores = simlab.stability_experiment(
            cases, scenario.noise, scenario.stability_repeats, seed=args.seed or 0
        )
        simlab.write_scores_csv(scores, out_dir / "scores.csv")
        matrix = stats.RatingsMatrix.from_rows(scores.scores)
    report = stats.stability_report(matrix)
    (out_dir / "stability_report.json").write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (out_dir / "stability_report.txt").write_text(report.to_text(), encoding="utf-8")
    print(report.to_text(), end="")
    return 0


def cmd_report(args) -> int:
    run_dir = Path(args.run)
    if not run_dir.is_dir():
        return _usage_error(f"run directory not found: {run_dir}")
    rep = runstore.report(run_dir)
    print(rep.to_text(), end="")
    return 0


def cmd_replay(args) -> int:
    run_dir = Path(args.run)
    if not run_dir.is_dir():
        return _usage_error(f"run directory not found: {run_dir}")
    rep = runstore.replay(run_dir)
    if not rep.complete:
        print(f"incomplete run: {rep.resumable_state}")
        return 0
    print(f"log hash: {runstore.log_hash(run_dir)}")
    if rep.clean:
        print("verdict: clean")
        return 0
    print("verdict: violations found")
    for violation in rep.violations:
        print(f"- {violation}")
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evojudge",
        description="Evolve solutions under a requirement-decomposing judge.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", help="decompose an instruction into requirements")
    p.add_argument("--instruction", required=True, help="instruction file, or - for stdin")
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--sim", help="simulation scenario (file or packaged name)")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("evolve", help="run the evolutionary loop")
    p.add_argument("--task", required=True, help="task instruction file, or - for stdin")
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--out", required=True, help="run directory to create")
    p.add_argument("--max-gen", type=int, default=None)
    p.add_argument("--pop", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--ablate-feedback", action="store_true", help="score-only mutation prompts")
    p.add_argument("--sim", help="simulation scenario (file or packaged name)")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("judge", help="judge one artifact against requirements")
    p.add_argument("--artifact", required=True, help="artifact file, or - for stdin")
    p.add_argument("--requirements", help="requirements JSON file (LLM judging)")
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--sim", help="simulation scenario (file or packaged name)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_judge)

    p = sub.add_parser("stability", help="judge-stability analysis")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--input", help="scores CSV (case_id, repeat, score)")
    group.add_argument("--simulate", help="simulation scenario (file or packaged name)")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("report", help="metrics report for a run directory")
    p.add_argument("--run", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("replay", help="replay a run log and verify invariants")
    p.add_argument("--run", required=True)
    p.set_defaults(func=cmd_replay)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
