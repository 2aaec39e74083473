"""The evolutionary loop: evaluate, select with elitism, mutate, refill.

The loop is a deterministic state machine over pluggable agents and
renderers. Members are processed and committed in individual-index order,
elites carry their recorded fitness forward and are never re-judged, and
parents are the top half of a total ranking (fitness descending, earlier
creation first, solution id ascending). With seeded simulation agents the
whole event log is bit-reproducible.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Literal

from evojudge.agents import AgentSet, CallContext, EvaluationError, MutationError
from evojudge.core import (
    DomainError,
    Individual,
    InvalidInputError,
    Lineage,
    Population,
    RequirementSet,
    Solution,
    UserInstruction,
    aggregate_fitness,
    validate_requirement_set,
)
from evojudge.gateway import ChatGateway, account
from evojudge.render import RendererConfig, RenderFailure, render
from evojudge.runstore import RunStore

AblationMode = Literal["full", "score_only"]

_INIT_ATTEMPTS = 3  # first population plus two regenerations


class SelectionError(DomainError):
    """No evaluated members to select from."""


class AllRenderFailedError(DomainError):
    """Every initialization attempt produced only render failures."""


@dataclass(frozen=True, slots=True)
class EvolutionConfig:
    population_size: int = 4
    max_generations: int = 3
    elite_count: int = 1
    seed: int = 0
    ablation: AblationMode = "full"
    renderer: RendererConfig = RendererConfig()

    def __post_init__(self) -> None:
        n = self.population_size
        if n < 2 or n % 2 != 0:
            raise InvalidInputError(f"population size must be even and >= 2, got {n}")
        if not 1 <= self.elite_count < n:
            raise InvalidInputError(f"elite count must be in [1, {n}), got {self.elite_count}")
        if self.max_generations < 0:
            raise InvalidInputError("max generations must be >= 0")
        if self.ablation not in ("full", "score_only"):
            raise InvalidInputError(f"unknown ablation mode {self.ablation!r}")

    def snapshot(self) -> dict:
        return {
            "population_size": self.population_size,
            "max_generations": self.max_generations,
            "elite_count": self.elite_count,
            "seed": self.seed,
            "ablation": self.ablation,
            "renderer_kind": self.renderer.kind,
        }


@dataclass(frozen=True, slots=True)
class TerminationDecision:
    stop: bool
    reason: str | None = None


@dataclass(frozen=True, slots=True)
class MemberRecord:
    solution_id: str
    status: str
    fitness: float | None
    scores: tuple[int, ...] | None


@dataclass(frozen=True, slots=True)
class GenerationRecord:
    generation: int
    members: tuple[MemberRecord, ...]
    elites: tuple[str, ...]
    parents: tuple[str, ...]
    termination: TerminationDecision


@dataclass(frozen=True, slots=True)
class EvolutionResult:
    best_solution: Solution
    best_fitness: float
    best_individual: Individual
    history: tuple[GenerationRecord, ...]
    curve: tuple[float, ...]
    requirement_set: RequirementSet
    accounting: object


class _Emitter:
    def __init__(self, store: RunStore | None):
        self._store = store

    def __call__(self, kind: str, payload: dict, generation: int | None = None) -> None:
        if self._store is not None:
            self._store.append_event(kind, payload, generation)


def check_termination(generation: int, cfg: EvolutionConfig, population: Population) -> TerminationDecision:
    """Stop on a fully satisfying solution or on the generation budget."""
    if any(m.fitness == 1.0 for m in population.members if m.status == "evaluated"):
        return TerminationDecision(stop=True, reason="all_requirements_met")
    if generation >= cfg.max_generations:
        return TerminationDecision(stop=True, reason="max_generations")
    return TerminationDecision(stop=False)


def rank_members(population: Population) -> list[int]:
    """Total order over evaluated members: fitness desc, creation asc, id asc."""
    evaluated = [
        (i, m) for i, m in enumerate(population.members) if m.status == "evaluated"
    ]
    evaluated.sort(key=lambda pair: (-(pair[1].fitness or 0.0), pair[0], pair[1].solution.id))
    return [i for i, _ in evaluated]


def select(population: Population, cfg: EvolutionConfig) -> tuple[list[Individual], list[Individual]]:
    ranked = rank_members(population)
    if not ranked:
        raise SelectionError(f"generation {population.generation} has no evaluated members")
    members = population.members
    elites = [members[i] for i in ranked[: cfg.elite_count]]
    half = cfg.population_size // 2
    parents = [members[i] for i in ranked[:half]] if len(ranked) >= half else [members[i] for i in ranked]
    return elites, parents


def evaluate_population(
    population: Population,
    rset: RequirementSet,
    cfg: EvolutionConfig,
    agents: AgentSet,
    emit: _Emitter,
    store: RunStore | None,
) -> Population:
    """Render then judge every pending member; carried elites are untouched."""
    gen = population.generation
    members: list[Individual] = []
    for index, member in enumerate(population.members):
        if member.status != "pending":
            members.append(member)
            continue
        sid = member.solution.id
        workdir = None
        if cfg.renderer.kind == "command" and store is not None:
            workdir = store.artifacts_dir(gen, sid)
        outcome = render(member.solution, cfg.renderer, workdir)
        if isinstance(outcome, RenderFailure):
            emit(
                "render_failed",
                {
                    "solution_id": sid,
                    "reason": outcome.reason,
                    "detail": outcome.detail,
                    "stderr_excerpt": outcome.stderr_excerpt,
                },
                gen,
            )
            members.append(dataclasses.replace(member, status="render_failed"))
            continue
        emit(
            "rendered",
            {"solution_id": sid, "artifact_kind": outcome.kind, "artifact_digest": outcome.digest},
            gen,
        )
        try:
            evaluation = agents.judge.judge(outcome, rset, CallContext(gen, index))
        except EvaluationError as exc:
            emit("eval_failed", {"solution_id": sid, "error": str(exc)}, gen)
            members.append(dataclasses.replace(member, artifact=outcome, status="eval_failed"))
            continue
        if len(evaluation.scores) != rset.k:
            emit(
                "eval_failed",
                {"solution_id": sid, "error": f"judge returned {len(evaluation.scores)} scores for k={rset.k}"},
                gen,
            )
            members.append(dataclasses.replace(member, artifact=outcome, status="eval_failed"))
            continue
        fitness = aggregate_fitness(evaluation.scores)
        emit(
            "judged",
            {
                "solution_id": sid,
                "scores": list(evaluation.scores),
                "fitness": fitness,
                "feedback_notes": dict(evaluation.feedback.notes),
                "suggestions": list(evaluation.feedback.suggestions),
            },
            gen,
        )
        members.append(
            dataclasses.replace(
                member, artifact=outcome, evaluation=evaluation, fitness=fitness, status="evaluated"
            )
        )
    return Population(generation=gen, members=tuple(members))


def next_generation(
    elites: list[Individual],
    parents: list[Individual],
    rset: RequirementSet,
    cfg: EvolutionConfig,
    agents: AgentSet,
    next_gen_index: int,
    emit: _Emitter,
) -> Population:
    """Elites carry over unchanged; offspring refill by round-robin mutation."""
    if not parents:
        raise SelectionError("cannot refill a generation without parents")
    offspring: list[Individual] = []
    needed = cfg.population_size - len(elites)
    for slot in range(needed):
        parent = parents[slot % len(parents)]
        assert parent.evaluation is not None and parent.fitness is not None
        try:
            child = agents.creator.mutate(
                parent.solution,
                parent.evaluation.feedback,
                rset,
                cfg.ablation,
                parent.fitness,
                CallContext(next_gen_index, slot),
            )
            fallback = False
        except MutationError:
            parent_generation = (
                parent.solution.lineage.generation if parent.solution.lineage else 0
            )
            child = Solution(
                id=f"{parent.solution.id}-clone-g{next_gen_index}s{slot}",
                content=parent.solution.content,
                content_kind=parent.solution.content_kind,
                lineage=Lineage(parent_id=parent.solution.id, generation=parent_generation + 1),
            )
            fallback = True
        emit(
            "mutated",
            {
                "child_id": child.id,
                "parent_id": parent.solution.id,
                "mode": cfg.ablation,
                "fallback": fallback,
            },
            next_gen_index,
        )
        emit(
            "individual_created",
            {"solution_id": child.id, "parent_id": parent.solution.id},
            next_gen_index,
        )
        offspring.append(Individual(solution=child))
    return Population(generation=next_gen_index, members=tuple(elites) + tuple(offspring))


def _initial_population(
    instruction: UserInstruction,
    rset: RequirementSet,
    cfg: EvolutionConfig,
    agents: AgentSet,
    emit: _Emitter,
    store: RunStore | None,
) -> Population:
    """Create and evaluate generation 0, regenerating if nothing renders."""
    for attempt in range(_INIT_ATTEMPTS):
        solutions = agents.creator.create_initial(instruction, rset, cfg.population_size)
        if len(solutions) != cfg.population_size:
            raise InvalidInputError(
                f"creator returned {len(solutions)} solutions for N={cfg.population_size}"
            )
        if len({s.id for s in solutions}) != len(solutions):
            raise InvalidInputError("initial solutions must have distinct ids")
        for s in solutions:
            emit("individual_created", {"solution_id": s.id, "parent_id": None}, 0)
        population = Population(
            generation=0, members=tuple(Individual(solution=s) for s in solutions)
        )
        population = evaluate_population(population, rset, cfg, agents, emit, store)
        if any(m.status != "render_failed" for m in population.members):
            return population
    raise AllRenderFailedError(
        f"all individuals failed to render in {_INIT_ATTEMPTS} initialization attempts"
    )


def _generation_record(
    population: Population,
    elites: tuple[str, ...],
    parents: tuple[str, ...],
    decision: TerminationDecision,
) -> GenerationRecord:
    return GenerationRecord(
        generation=population.generation,
        members=tuple(
            MemberRecord(
                solution_id=m.solution.id,
                status=m.status,
                fitness=m.fitness,
                scores=m.evaluation.scores if m.evaluation else None,
            )
            for m in population.members
        ),
        elites=elites,
        parents=parents,
        termination=decision,
    )


def run_evolution(
    instruction: UserInstruction,
    cfg: EvolutionConfig,
    agents: AgentSet,
    store: RunStore | None = None,
    gateway: ChatGateway | None = None,
) -> EvolutionResult:
    """Run the full loop and return the highest-fitness solution with history."""
    emit = _Emitter(store)
    emit(
        "run_start",
        {
            "run_id": store.run_id if store else None,
            "instruction_id": instruction.id,
            "instruction": instruction.text,
            **cfg.snapshot(),
        },
    )
    rset = validate_requirement_set(agents.decomposer.decompose(instruction))
    emit(
        "decomposed",
        {
            "k": rset.k,
            "requirements": [
                {"id": r.id, "assertion": r.assertion, "prerequisites": list(r.prerequisites)}
                for r in rset.requirements
            ],
        },
    )

    population = _initial_population(instruction, rset, cfg, agents, emit, store)

    history: list[GenerationRecord] = []
    curve: list[float] = []
    best: Individual | None = None

    while True:
        gen = population.generation
        ranked = rank_members(population)
        if ranked:
            gen_best = population.members[ranked[0]]
            curve.append(gen_best.fitness or 0.0)
            if best is None or (gen_best.fitness or 0.0) > (best.fitness or 0.0):
                best = gen_best
        else:
            curve.append(float("nan"))

        decision = check_termination(gen, cfg, population)
        if decision.stop:
            history.append(_generation_record(population, (), (), decision))
            emit("terminated", {"reason": decision.reason}, gen)
            break

        elites, parents = select(population, cfg)
        elite_ids = tuple(e.solution.id for e in elites)
        parent_ids = tuple(p.solution.id for p in parents)
        emit("selected", {"elites": list(elite_ids), "parents": list(parent_ids)}, gen)
        history.append(_generation_record(population, elite_ids, parent_ids, decision))

        population = next_generation(elites, parents, rset, cfg, agents, gen + 1, emit)
        population = evaluate_population(population, rset, cfg, agents, emit, store)

    if best is None:
        raise SelectionError("run ended with no evaluated individuals")

    emit(
        "run_end",
        {
            "best_solution_id": best.solution.id,
            "best_fitness": best.fitness,
            "curve": curve,
            "generations_executed": len(curve) - 1,
            "reason": decision.reason,
        },
    )
    accounting = gateway.summary() if gateway is not None else account([])
    return EvolutionResult(
        best_solution=best.solution,
        best_fitness=best.fitness or 0.0,
        best_individual=best,
        history=tuple(history),
        curve=tuple(curve),
        requirement_set=rset,
        accounting=accounting,
    )
