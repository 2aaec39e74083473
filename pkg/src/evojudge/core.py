"""Shared domain types plus the fitness-aggregation and metric arithmetic.

Every type here is an immutable value object whose constructor enforces its
invariants, so instances can be handed freely between concurrent evaluation
workers. :func:`canonical_json` is the single serialization used for wire
payloads and log hashing: JSON with lexicographically sorted keys, compact
separators, and Python's shortest round-trip float formatting.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Literal, Mapping, Sequence

MetMode = Literal["independent", "dependent"]
IndividualStatus = Literal["pending", "render_failed", "eval_failed", "evaluated"]


class DomainError(Exception):
    """Base class for every typed error raised by this package."""


class InvalidInputError(DomainError):
    pass


class RequirementSetError(DomainError):
    """A requirement set violates its structural invariants."""


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _jsonable(value: Any) -> Any:
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {f.name: _jsonable(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, Mapping):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, Path):
        return str(value)
    if value is None or isinstance(value, (str, int, float, bool)):
        return value
    raise InvalidInputError(f"value of type {type(value).__name__} is not serializable")


def canonical_json(value: Any) -> str:
    """Canonical serialization: sorted keys, no whitespace, round-trip floats."""
    return json.dumps(_jsonable(value), sort_keys=True, separators=(",", ":"), allow_nan=False)


@dataclass(frozen=True, slots=True)
class UserInstruction:
    """A high-level natural-language task statement."""

    id: str
    text: str

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise InvalidInputError("instruction text must be nonempty")


@dataclass(frozen=True, slots=True)
class Requirement:
    """One verifiable sub-requirement; prerequisites name ids in the same set."""

    id: str
    assertion: str
    prerequisites: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.id:
            raise RequirementSetError("requirement id must be nonempty")
        if not self.assertion.strip():
            raise RequirementSetError(f"requirement {self.id!r} has an empty assertion")


@dataclass(frozen=True, slots=True)
class RequirementSet:
    """Ordered requirements; list order defines scoring-vector index positions."""

    requirements: tuple[Requirement, ...]

    def __post_init__(self) -> None:
        if not self.requirements:
            raise RequirementSetError("requirement set must contain at least one requirement")
        ids = [r.id for r in self.requirements]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise RequirementSetError(f"duplicate requirement ids: {', '.join(dupes)}")
        known = set(ids)
        for r in self.requirements:
            dangling = [p for p in r.prerequisites if p not in known]
            if dangling:
                raise RequirementSetError(
                    f"requirement {r.id!r} references unknown prerequisites: {', '.join(dangling)}"
                )
        cycle = _find_cycle({r.id: r.prerequisites for r in self.requirements})
        if cycle:
            raise RequirementSetError(f"prerequisite cycle: {' -> '.join(cycle)}")

    @property
    def k(self) -> int:
        return len(self.requirements)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(r.id for r in self.requirements)

    def index_of(self, requirement_id: str) -> int:
        for i, r in enumerate(self.requirements):
            if r.id == requirement_id:
                return i
        raise InvalidInputError(f"unknown requirement id {requirement_id!r}")

    def by_id(self, requirement_id: str) -> Requirement:
        return self.requirements[self.index_of(requirement_id)]


def _find_cycle(graph: Mapping[str, Sequence[str]]) -> list[str] | None:
    """Returns one cycle as a node path, or None if the graph is acyclic."""
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {node: WHITE for node in graph}
    stack: list[str] = []

    def visit(node: str) -> list[str] | None:
        color[node] = GRAY
        stack.append(node)
        for nxt in graph[node]:
            if color[nxt] == GRAY:
                return stack[stack.index(nxt):] + [nxt]
            if color[nxt] == WHITE:
                found = visit(nxt)
                if found:
                    return found
        stack.pop()
        color[node] = BLACK
        return None

    for node in graph:
        if color[node] == WHITE:
            found = visit(node)
            if found:
                return found
    return None


def validate_requirement_set(
    requirements: Iterable[Requirement] | RequirementSet,
) -> RequirementSet:
    """Canonicalizes (trims assertions, fixes tuple order) and re-validates."""
    if isinstance(requirements, RequirementSet):
        items = requirements.requirements
    else:
        items = tuple(requirements)
    canonical = tuple(
        Requirement(id=r.id, assertion=r.assertion.strip(), prerequisites=tuple(r.prerequisites))
        for r in items
    )
    return RequirementSet(canonical)


@dataclass(frozen=True, slots=True)
class Lineage:
    """Where a solution came from: parent id (None for initials) and birth generation."""

    parent_id: str | None
    generation: int

    def __post_init__(self) -> None:
        if self.generation < 0:
            raise InvalidInputError("lineage generation must be >= 0")


@dataclass(frozen=True, slots=True)
class Solution:
    """A candidate: a text or code payload with a declared runtime kind."""

    id: str
    content: str
    content_kind: str = "text"
    lineage: Lineage | None = None

    def __post_init__(self) -> None:
        if not self.content:
            raise InvalidInputError(f"solution {self.id!r} has empty content")


@dataclass(frozen=True, slots=True)
class Artifact:
    """The rendered, evaluatable form of a solution."""

    kind: Literal["text", "file"]
    text: str | None = None
    path: str | None = None
    digest: str | None = None

    def __post_init__(self) -> None:
        if self.kind == "text":
            if not self.text:
                raise InvalidInputError("text artifacts must carry a nonempty body")
        elif self.kind == "file":
            if not self.path:
                raise InvalidInputError("file artifacts must carry a path")
            p = Path(self.path)
            if not p.is_file():
                raise InvalidInputError(f"artifact file does not exist: {self.path}")
            actual = sha256_hex(p.read_bytes())
            if self.digest is None:
                object.__setattr__(self, "digest", actual)
            elif self.digest != actual:
                raise InvalidInputError(
                    f"artifact digest mismatch for {self.path}: "
                    f"declared {self.digest[:12]}.., actual {actual[:12]}.."
                )
        else:
            raise InvalidInputError(f"unknown artifact kind {self.kind!r}")

    @classmethod
    def from_text(cls, text: str) -> "Artifact":
        return cls(kind="text", text=text, digest=sha256_hex(text.encode("utf-8")))

    @classmethod
    def from_file(cls, path: str | Path) -> "Artifact":
        return cls(kind="file", path=str(path))


@dataclass(frozen=True, slots=True)
class FeedbackBundle:
    """Per-requirement deficiency notes plus free-form overall suggestions."""

    notes: Mapping[str, str] = field(default_factory=dict)
    suggestions: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "notes", dict(self.notes))

    @property
    def is_empty(self) -> bool:
        return not self.notes and not self.suggestions


@dataclass(frozen=True, slots=True)
class JudgeMeta:
    """Provenance of an evaluation: model or simulator id plus call accounting."""

    model: str
    latency_s: float | None = None
    input_tokens: int | None = None
    output_tokens: int | None = None


@dataclass(frozen=True, slots=True)
class Evaluation:
    """The judge's output: binary scoring vector plus semantic feedback."""

    scores: tuple[int, ...]
    feedback: FeedbackBundle = field(default_factory=FeedbackBundle)
    judge_meta: JudgeMeta | None = None

    def __post_init__(self) -> None:
        if not self.scores:
            raise InvalidInputError("scoring vector must be nonempty")
        if any(v not in (0, 1) for v in self.scores):
            raise InvalidInputError(f"scoring vector must be binary, got {self.scores}")
        if any(v == 0 for v in self.scores) and self.feedback.is_empty:
            raise InvalidInputError("evaluations with failed requirements need feedback")


@dataclass(frozen=True, slots=True)
class Individual:
    """A solution with its artifact, evaluation, scalar fitness, and status."""

    solution: Solution
    artifact: Artifact | None = None
    evaluation: Evaluation | None = None
    fitness: float | None = None
    status: IndividualStatus = "pending"

    def __post_init__(self) -> None:
        if (self.status == "evaluated") != (self.fitness is not None):
            raise InvalidInputError("fitness must be present exactly when status is 'evaluated'")
        if self.status == "evaluated":
            if self.evaluation is None:
                raise InvalidInputError("evaluated individuals must carry an evaluation")
            expected = aggregate_fitness(self.evaluation.scores)
            if self.fitness != expected:
                raise InvalidInputError(
                    f"fitness {self.fitness} does not match aggregated scores {expected}"
                )


@dataclass(frozen=True, slots=True)
class Population:
    """One generation's pool. Size is fixed, even, and at least 2."""

    generation: int
    members: tuple[Individual, ...]

    def __post_init__(self) -> None:
        if self.generation < 0:
            raise InvalidInputError("generation index must be >= 0")
        n = len(self.members)
        if n < 2 or n % 2 != 0:
            raise InvalidInputError(f"population size must be even and >= 2, got {n}")

    @property
    def size(self) -> int:
        return len(self.members)


def aggregate_fitness(scores: Sequence[int]) -> float:
    """Scalar fitness: the fraction of satisfied requirements."""
    if not scores:
        raise InvalidInputError("cannot aggregate an empty scoring vector")
    if any(v not in (0, 1) for v in scores):
        raise InvalidInputError(f"scoring vector must be binary, got {tuple(scores)}")
    return sum(scores) / len(scores)


def requirements_met(evaluation: Evaluation, rset: RequirementSet, mode: MetMode) -> float:
    """Fraction of requirements met, optionally gated on prerequisite satisfaction.

    Independent mode counts each satisfied requirement on its own. Dependent
    mode counts a requirement only if it and every prerequisite reachable
    through the prerequisite graph scored 1.
    """
    if len(evaluation.scores) != rset.k:
        raise InvalidInputError(
            f"scoring vector length {len(evaluation.scores)} != requirement count {rset.k}"
        )
    if mode == "independent":
        return aggregate_fitness(evaluation.scores)
    if mode != "dependent":
        raise InvalidInputError(f"unknown requirements-met mode {mode!r}")

    index = {r.id: i for i, r in enumerate(rset.requirements)}
    satisfied: dict[str, bool] = {}

    def met(rid: str) -> bool:
        if rid not in index:
            raise InvalidInputError(f"dangling prerequisite id {rid!r}")
        if rid in satisfied:
            return satisfied[rid]
        satisfied[rid] = False  # cycle guard; validated sets are acyclic anyway
        req = rset.requirements[index[rid]]
        ok = evaluation.scores[index[rid]] == 1 and all(met(p) for p in req.prerequisites)
        satisfied[rid] = ok
        return ok

    count = sum(1 for r in rset.requirements if met(r.id))
    return count / rset.k
