"""The three agent roles, LLM-backed, with strict reply parsing.

Replies must carry their payload in fenced blocks: decompositions as a
```json block of requirement objects, solutions inside a ```solution block,
and verdicts inside a ```verdicts block with one `id: pass|fail - note`
line per requirement. A reply that fails to parse earns exactly one repair
retry that quotes the parse defects back to the model; a second failure
raises the role's typed error. Prompt assembly is pure string work, so
identical inputs, template, and config produce byte-identical prompts.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Protocol

from evojudge.core import (
    DomainError,
    Evaluation,
    FeedbackBundle,
    InvalidInputError,
    JudgeMeta,
    Lineage,
    Requirement,
    RequirementSet,
    RequirementSetError,
    Solution,
    UserInstruction,
    validate_requirement_set,
)
from evojudge.gateway import ChatGateway, ChatMessage, ChatRequest

AgentRole = Literal["decomposer", "creator", "judge"]
MutationMode = Literal["full", "score_only"]

_TEMPLATE_DIR = Path(__file__).parent / "templates"

_DEFAULT_TEMPERATURE = {"decomposer": 0.0, "creator": 0.7, "judge": 0.0}
_DEFAULT_TEMPLATE = {"decomposer": "decompose", "creator": "create", "judge": "judge"}


class DecompositionError(DomainError):
    pass


class InitializationError(DomainError):
    pass


class MutationError(DomainError):
    pass


class EvaluationError(DomainError):
    pass


class ReplyParseError(DomainError):
    """Structured parse failure; defects drive the repair retry prompt."""

    def __init__(self, defects: list[str]):
        super().__init__("; ".join(defects))
        self.defects = defects


@dataclass(frozen=True, slots=True)
class AgentConfig:
    role: AgentRole
    model: str
    temperature: float | None = None
    max_output_tokens: int = 2048
    template_id: str | None = None

    def __post_init__(self) -> None:
        if not self.model:
            raise InvalidInputError("agent model name must be nonempty")
        if self.temperature is None:
            object.__setattr__(self, "temperature", _DEFAULT_TEMPERATURE[self.role])
        if not 0.0 <= float(self.temperature) <= 2.0:
            raise InvalidInputError(f"temperature {self.temperature} outside [0, 2]")
        if self.max_output_tokens <= 0:
            raise InvalidInputError("max output tokens must be positive")
        if self.template_id is None:
            object.__setattr__(self, "template_id", _DEFAULT_TEMPLATE[self.role])


@dataclass(frozen=True, slots=True)
class CallContext:
    """Coordinates of one agent call inside a run, for seeded simulators."""

    generation: int
    index: int


class Decomposer(Protocol):
    def decompose(self, instruction: UserInstruction) -> RequirementSet: ...


class Creator(Protocol):
    def create_initial(
        self, instruction: UserInstruction, rset: RequirementSet, count: int
    ) -> list[Solution]: ...

    def mutate(
        self,
        parent: Solution,
        feedback: FeedbackBundle,
        rset: RequirementSet,
        mode: MutationMode,
        fitness: float,
        context: CallContext | None = None,
    ) -> Solution: ...


class Judge(Protocol):
    def judge(
        self, artifact, rset: RequirementSet, context: CallContext | None = None
    ) -> Evaluation: ...


@dataclass(frozen=True, slots=True)
class AgentSet:
    decomposer: Decomposer
    creator: Creator
    judge: Judge


def load_template(template_id: str, template_dir: str | Path | None = None) -> str:
    base = Path(template_dir) if template_dir else _TEMPLATE_DIR
    path = base / f"{template_id}.txt"
    if not path.is_file():
        raise InvalidInputError(f"prompt template not found: {path}")
    return path.read_text(encoding="utf-8")


def render_template(template: str, values: dict[str, str]) -> str:
    """Substitute known {name} placeholders; everything else is left alone."""

    def repl(match: re.Match) -> str:
        name = match.group(1)
        return values[name] if name in values else match.group(0)

    return re.sub(r"\{(\w+)\}", repl, template)


def format_requirements(rset: RequirementSet) -> str:
    lines = []
    for r in rset.requirements:
        suffix = f" (requires: {', '.join(r.prerequisites)})" if r.prerequisites else ""
        lines.append(f"- [{r.id}] {r.assertion}{suffix}")
    return "\n".join(lines)


def format_feedback(feedback: FeedbackBundle) -> str:
    lines = [f"- [{rid}] {note}" for rid, note in feedback.notes.items()]
    lines.extend(f"- (overall) {s}" for s in feedback.suggestions)
    return "\n".join(lines) if lines else "(none)"


_FENCE_RE = r"```%s[ \t]*\n(.*?)```"


def extract_fenced_block(raw: str, tag: str) -> str | None:
    match = re.search(_FENCE_RE % re.escape(tag), raw, flags=re.DOTALL)
    if match is None:
        return None
    return match.group(1).rstrip("\n")


def parse_solution_reply(raw: str) -> str:
    body = extract_fenced_block(raw, "solution")
    if body is None:
        raise ReplyParseError(["no ```solution fenced block found"])
    if not body.strip():
        raise ReplyParseError(["solution block is empty"])
    return body


def parse_decomposition_reply(raw: str) -> RequirementSet:
    body = extract_fenced_block(raw, "json")
    if body is None:
        raise ReplyParseError(["no ```json fenced block found"])
    try:
        data = json.loads(body)
    except json.JSONDecodeError as exc:
        raise ReplyParseError([f"invalid JSON: {exc}"])
    if not isinstance(data, list) or not data:
        raise ReplyParseError(["expected a nonempty JSON array of requirements"])
    defects: list[str] = []
    requirements: list[Requirement] = []
    for i, entry in enumerate(data):
        if not isinstance(entry, dict):
            defects.append(f"entry {i} is not an object")
            continue
        rid = entry.get("id")
        assertion = entry.get("assertion")
        prereqs = entry.get("prerequisites", [])
        if not isinstance(rid, str) or not rid:
            defects.append(f"entry {i} is missing a string id")
            continue
        if not isinstance(assertion, str) or not assertion.strip():
            defects.append(f"entry {rid!r} is missing a nonempty assertion")
            continue
        if not isinstance(prereqs, list) or any(not isinstance(p, str) for p in prereqs):
            defects.append(f"entry {rid!r} has malformed prerequisites")
            continue
        requirements.append(Requirement(id=rid, assertion=assertion, prerequisites=tuple(prereqs)))
    if defects:
        raise ReplyParseError(defects)
    try:
        return validate_requirement_set(requirements)
    except RequirementSetError as exc:
        raise ReplyParseError([str(exc)])


_VERDICT_LINE_RE = re.compile(r"^(?P<id>[^\s:]+)\s*:\s*(?P<verdict>[^\s-]+)\s*(?:-\s*(?P<note>.*))?$")
_SUGGESTION_RE = re.compile(r"^suggestion:\s*(?P<text>.+)$", flags=re.IGNORECASE | re.MULTILINE)


def parse_judge_reply(raw: str, rset: RequirementSet, judge_meta: JudgeMeta | None = None) -> Evaluation:
    """Strictly extract the verdict block; verdicts must cover every id exactly once."""
    match = re.search(_FENCE_RE % "verdicts", raw, flags=re.DOTALL)
    if match is None:
        raise ReplyParseError(["no ```verdicts fenced block found"])
    block = match.group(1)

    defects: list[str] = []
    verdicts: dict[str, tuple[int, str | None]] = {}
    for line in block.splitlines():
        line = line.strip()
        if not line:
            continue
        m = _VERDICT_LINE_RE.match(line)
        if m is None:
            defects.append(f"unparseable verdict line: {line!r}")
            continue
        rid = m.group("id")
        verdict = m.group("verdict").lower()
        note = (m.group("note") or "").strip() or None
        if rid not in rset.ids:
            defects.append(f"verdict for unknown requirement id {rid!r}")
            continue
        if rid in verdicts:
            defects.append(f"duplicate verdict for {rid!r}")
            continue
        if verdict not in ("pass", "fail"):
            defects.append(f"non-binary verdict {m.group('verdict')!r} for {rid!r}")
            continue
        verdicts[rid] = (1 if verdict == "pass" else 0, note)

    missing = [rid for rid in rset.ids if rid not in verdicts]
    if missing:
        defects.append(f"missing verdicts for: {', '.join(missing)}")
    if defects:
        raise ReplyParseError(defects)

    outside = raw[: match.start()] + raw[match.end():]
    suggestions = tuple(m.group("text").strip() for m in _SUGGESTION_RE.finditer(outside))

    scores = []
    notes: dict[str, str] = {}
    for r in rset.requirements:
        score, note = verdicts[r.id]
        scores.append(score)
        if score == 0:
            notes[r.id] = note or f"not satisfied: {r.assertion}"
    return Evaluation(
        scores=tuple(scores),
        feedback=FeedbackBundle(notes=notes, suggestions=suggestions),
        judge_meta=judge_meta,
    )


_REPAIR_PROMPT = (
    "Your previous reply could not be parsed:\n{defects}\n"
    "Reply again, following the required format exactly."
)


class _LlmAgent:
    def __init__(self, gateway: ChatGateway, config: AgentConfig, template_dir: str | Path | None = None):
        self._gateway = gateway
        self._config = config
        self._template_dir = template_dir

    def _template(self, template_id: str) -> str:
        return load_template(template_id, self._template_dir)

    def _request(self, prompt: str) -> ChatRequest:
        return ChatRequest(
            model=self._config.model,
            messages=(ChatMessage(role="user", content=prompt),),
            temperature=float(self._config.temperature or 0.0),
            max_tokens=self._config.max_output_tokens,
        )

    def _call_with_repair(self, prompt: str, parse):
        """One call plus one repair retry driven by the parse defects."""
        raw, usage = self._gateway.complete(self._request(prompt))
        try:
            return parse(raw), usage
        except ReplyParseError as first:
            repair = ChatRequest(
                model=self._config.model,
                messages=(
                    ChatMessage(role="user", content=prompt),
                    ChatMessage(role="assistant", content=raw),
                    ChatMessage(
                        role="user",
                        content=_REPAIR_PROMPT.format(defects="\n".join(f"- {d}" for d in first.defects)),
                    ),
                ),
                temperature=float(self._config.temperature or 0.0),
                max_tokens=self._config.max_output_tokens,
            )
            raw2, usage2 = self._gateway.complete(repair)
            return parse(raw2), usage2


class LlmDecomposer(_LlmAgent):
    def decompose(self, instruction: UserInstruction) -> RequirementSet:
        prompt = render_template(
            self._template(self._config.template_id or "decompose"),
            {"instruction": instruction.text},
        )
        try:
            rset, _ = self._call_with_repair(prompt, parse_decomposition_reply)
        except ReplyParseError as exc:
            raise DecompositionError(f"could not parse decomposition reply: {exc}")
        return rset


class LlmCreator(_LlmAgent):
    """Authors initial candidates and feedback-guided revisions."""

    def __init__(
        self,
        gateway: ChatGateway,
        config: AgentConfig,
        template_dir: str | Path | None = None,
        solution_kind: str = "text",
        mutate_template_id: str = "mutate",
        score_only_template_id: str = "mutate_score_only",
    ):
        super().__init__(gateway, config, template_dir)
        self._solution_kind = solution_kind
        self._mutate_template_id = mutate_template_id
        self._score_only_template_id = score_only_template_id
        self._counter = 0

    def _next_id(self) -> str:
        self._counter += 1
        return f"sol-{self._counter:04d}"

    def create_initial(
        self, instruction: UserInstruction, rset: RequirementSet, count: int
    ) -> list[Solution]:
        prompt = render_template(
            self._template(self._config.template_id or "create"),
            {"instruction": instruction.text, "requirements": format_requirements(rset)},
        )
        solutions: list[Solution] = []
        for _ in range(count):
            try:
                body, _ = self._call_with_repair(prompt, parse_solution_reply)
            except ReplyParseError:
                continue
            solutions.append(
                Solution(
                    id=self._next_id(),
                    content=body,
                    content_kind=self._solution_kind,
                    lineage=Lineage(parent_id=None, generation=0),
                )
            )
        if len(solutions) < count:
            raise InitializationError(
                f"initial population shortfall: needed {count}, parsed {len(solutions)}"
            )
        return solutions

    def mutate(
        self,
        parent: Solution,
        feedback: FeedbackBundle,
        rset: RequirementSet,
        mode: MutationMode,
        fitness: float,
        context: CallContext | None = None,
    ) -> Solution:
        if mode == "score_only":
            template = self._template(self._score_only_template_id)
            values = {
                "requirements": format_requirements(rset),
                "artifact": parent.content,
                "fitness": f"{fitness:g}",
            }
        else:
            template = self._template(self._mutate_template_id)
            values = {
                "requirements": format_requirements(rset),
                "artifact": parent.content,
                "fitness": f"{fitness:g}",
                "feedback": format_feedback(feedback),
            }
        prompt = render_template(template, values)
        try:
            body, _ = self._call_with_repair(prompt, parse_solution_reply)
        except ReplyParseError as exc:
            raise MutationError(f"could not parse mutation reply: {exc}")
        parent_generation = parent.lineage.generation if parent.lineage else 0
        return Solution(
            id=self._next_id(),
            content=body,
            content_kind=parent.content_kind,
            lineage=Lineage(parent_id=parent.id, generation=parent_generation + 1),
        )


class LlmJudge(_LlmAgent):
    def judge(self, artifact, rset: RequirementSet, context: CallContext | None = None) -> Evaluation:
        text = _artifact_text(artifact)
        prompt = render_template(
            self._template(self._config.template_id or "judge"),
            {"requirements": format_requirements(rset), "artifact": text},
        )

        def parse(raw: str) -> Evaluation:
            return parse_judge_reply(raw, rset)

        try:
            (evaluation, usage) = self._call_with_repair(prompt, parse)
        except ReplyParseError as exc:
            raise EvaluationError(f"could not parse judge reply: {exc}")
        meta = JudgeMeta(
            model=self._config.model,
            latency_s=usage.latency_s,
            input_tokens=usage.input_tokens,
            output_tokens=usage.output_tokens,
        )
        return Evaluation(scores=evaluation.scores, feedback=evaluation.feedback, judge_meta=meta)


def _artifact_text(artifact) -> str:
    if artifact.kind == "text":
        return artifact.text or ""
    try:
        return Path(artifact.path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise EvaluationError(f"artifact is not judgeable as text: {exc}")


def build_llm_agents(
    gateway: ChatGateway,
    configs: dict[AgentRole, AgentConfig],
    template_dir: str | Path | None = None,
    solution_kind: str = "text",
) -> AgentSet:
    return AgentSet(
        decomposer=LlmDecomposer(gateway, configs["decomposer"], template_dir),
        creator=LlmCreator(gateway, configs["creator"], template_dir, solution_kind=solution_kind),
        judge=LlmJudge(gateway, configs["judge"], template_dir),
    )
