"""Deterministic and stochastic stand-ins for the three agent roles.

Everything here runs with zero network access. Judging is literal: each
requirement is a predicate over the artifact text, so the scoring vector is
a pure function of the artifact. Noise, when configured, flips individual
verdicts with quality-dependent probabilities. The synthetic creator edits
content token-wise, repairing violated predicates when it has feedback and
drifting blindly when it only has a score.

Randomness is fully explicit. Streams come from the Philox4x64 counter-based
generator; a stream's 128-bit key is the first 16 bytes of SHA-256 over
``"<seed>|<coord>|<coord>|..."``, so any call site keyed by (run seed,
generation, individual index, call kind) gets the same draws regardless of
scheduling order, and the traces are reproducible from this paragraph alone.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from evojudge.agents import AgentSet, CallContext, EvaluationError, MutationMode
from evojudge.core import (
    Artifact,
    Evaluation,
    FeedbackBundle,
    InvalidInputError,
    JudgeMeta,
    Lineage,
    Requirement,
    RequirementSet,
    Solution,
    UserInstruction,
    aggregate_fitness,
    validate_requirement_set,
)

RuleKind = Literal["contains", "not_contains", "regex_match", "length_between", "numeric_equals"]

_FILLER = "~"


class UnsupportedArtifactError(EvaluationError):
    """The artifact has no text or numeric payload this simulator can use."""


def seeded_stream(seed: int, *coords) -> np.random.Generator:
    """Philox stream keyed by SHA-256 of the seed and call coordinates."""
    h = hashlib.sha256(str(int(seed)).encode("ascii"))
    for c in coords:
        h.update(b"|")
        h.update(str(c).encode("utf-8"))
    key = np.frombuffer(h.digest()[:16], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True, slots=True)
class RulePredicate:
    """One verifiable criterion made literal as a text predicate."""

    requirement_id: str
    kind: RuleKind
    needle: str | None = None
    pattern: str | None = None
    witness: str | None = None
    min_len: int | None = None
    max_len: int | None = None
    value: float | None = None

    def __post_init__(self) -> None:
        if self.kind in ("contains", "not_contains"):
            if not self.needle:
                raise InvalidInputError(f"rule {self.requirement_id}: {self.kind} needs a needle")
        elif self.kind == "regex_match":
            if not self.pattern:
                raise InvalidInputError(f"rule {self.requirement_id}: regex_match needs a pattern")
            try:
                compiled = re.compile(self.pattern)
            except re.error as exc:
                raise InvalidInputError(f"rule {self.requirement_id}: bad regex: {exc}")
            if compiled.search(""):
                raise InvalidInputError(f"rule {self.requirement_id}: pattern matches empty text")
            if not self.witness or not compiled.search(self.witness):
                raise InvalidInputError(
                    f"rule {self.requirement_id}: regex_match needs a witness matching the pattern"
                )
        elif self.kind == "length_between":
            if self.min_len is None or self.max_len is None or self.min_len > self.max_len:
                raise InvalidInputError(f"rule {self.requirement_id}: need min <= max lengths")
            if self.min_len < 0:
                raise InvalidInputError(f"rule {self.requirement_id}: lengths must be >= 0")
        elif self.kind == "numeric_equals":
            if self.value is None:
                raise InvalidInputError(f"rule {self.requirement_id}: numeric_equals needs a value")
        else:
            raise InvalidInputError(f"rule {self.requirement_id}: unknown kind {self.kind!r}")

    def holds(self, text: str) -> bool:
        if self.kind == "contains":
            return (self.needle or "") in text
        if self.kind == "not_contains":
            return (self.needle or "") not in text
        if self.kind == "regex_match":
            return re.search(self.pattern or "", text) is not None
        if self.kind == "length_between":
            return (self.min_len or 0) <= len(text) <= (self.max_len or 0)
        return any(_token_equals(tok, float(self.value or 0)) for tok in text.split())

    def describe(self) -> str:
        if self.kind == "contains":
            return f"text contains {self.needle!r}"
        if self.kind == "not_contains":
            return f"text does not contain {self.needle!r}"
        if self.kind == "regex_match":
            return f"text matches /{self.pattern}/"
        if self.kind == "length_between":
            return f"text length is between {self.min_len} and {self.max_len} characters"
        return f"text includes the number {float(self.value or 0):g}"

    def satisfy(self, text: str) -> str:
        """Minimal edit making the predicate hold."""
        if self.holds(text):
            return text
        if self.kind == "contains":
            return _append_token(text, self.needle or "")
        if self.kind == "not_contains":
            return _strip_substring(text, self.needle or "")
        if self.kind == "regex_match":
            return _append_token(text, self.witness or "")
        if self.kind == "length_between":
            lo, hi = int(self.min_len or 0), int(self.max_len or 0)
            out = _strip_filler(text)
            if len(out) < lo:
                out = out + " " + _FILLER * (lo - len(out) - 1) if out else _FILLER * lo
            if len(out) > hi:
                out = out[:hi].rstrip()
            return out
        return _append_token(text, _format_number(float(self.value or 0)))

    def violate(self, text: str) -> str:
        """Minimal edit making the predicate fail."""
        if not self.holds(text):
            return text
        if self.kind == "contains":
            return _strip_substring(text, self.needle or "")
        if self.kind == "not_contains":
            return _append_token(text, self.needle or "")
        if self.kind == "regex_match":
            out = text
            for _ in range(8):
                out = re.sub(self.pattern or "", "", out)
                if not self.holds(out):
                    break
            return _normalize_spaces(out)
        if self.kind == "length_between":
            hi = int(self.max_len or 0)
            pad = hi - len(text) + 8
            return text + " " + _FILLER * pad
        tokens = [t for t in text.split() if not _token_equals(t, float(self.value or 0))]
        return " ".join(tokens)

    def to_requirement(self, prerequisites: Sequence[str] = ()) -> Requirement:
        return Requirement(
            id=self.requirement_id,
            assertion=self.describe(),
            prerequisites=tuple(prerequisites),
        )


def _token_equals(token: str, value: float) -> bool:
    try:
        return float(token) == value
    except ValueError:
        return False


def _format_number(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(value)


def _append_token(text: str, token: str) -> str:
    return f"{text} {token}" if text else token


def _strip_substring(text: str, needle: str) -> str:
    while needle and needle in text:
        text = text.replace(needle, "")
    return _normalize_spaces(text)


def _strip_filler(text: str) -> str:
    return _normalize_spaces(text.replace(_FILLER, ""))


def _normalize_spaces(text: str) -> str:
    return " ".join(text.split())


def rules_to_requirement_set(
    rules: Sequence[RulePredicate],
    prerequisites: dict[str, Sequence[str]] | None = None,
) -> RequirementSet:
    prereqs = prerequisites or {}
    return validate_requirement_set(
        [r.to_requirement(prereqs.get(r.requirement_id, ())) for r in rules]
    )


def artifact_text(artifact: Artifact) -> str:
    if artifact.kind == "text":
        return artifact.text or ""
    try:
        return Path(artifact.path or "").read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise UnsupportedArtifactError(f"no text payload in artifact: {exc}")


def rule_judge(artifact: Artifact, rules: Sequence[RulePredicate]) -> Evaluation:
    """Deterministic judging: one predicate per requirement, applied literally."""
    text = artifact_text(artifact)
    scores = []
    notes: dict[str, str] = {}
    for rule in rules:
        ok = rule.holds(text)
        scores.append(1 if ok else 0)
        if not ok:
            notes[rule.requirement_id] = f"{rule.kind} check failed: expected {rule.describe()}"
    return Evaluation(
        scores=tuple(scores),
        feedback=FeedbackBundle(notes=notes),
        judge_meta=JudgeMeta(model="simlab/rule-judge"),
    )


@dataclass(frozen=True, slots=True)
class NoiseModel:
    """Quality-dependent verdict flips: satisfied requirements flip rarely."""

    eps_sat: float = 0.02
    eps_unsat: float = 0.15
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.eps_sat <= self.eps_unsat <= 1.0:
            raise InvalidInputError(
                f"need 0 <= eps_sat <= eps_unsat <= 1, got ({self.eps_sat}, {self.eps_unsat})"
            )

    @property
    def is_zero(self) -> bool:
        return self.eps_sat == 0.0 and self.eps_unsat == 0.0


def noisy_judge(
    base: Evaluation,
    noise: NoiseModel,
    rng: np.random.Generator,
    rset: RequirementSet,
) -> Evaluation:
    """Independently flip each verdict; feedback is regenerated to match."""
    if len(base.scores) != rset.k:
        raise InvalidInputError("base evaluation does not match the requirement set")
    scores = []
    for v in base.scores:
        p = noise.eps_sat if v == 1 else noise.eps_unsat
        flip = rng.random() < p
        scores.append((1 - v) if flip else v)
    notes: dict[str, str] = {}
    for req, v in zip(rset.requirements, scores):
        if v == 0:
            notes[req.id] = base.feedback.notes.get(
                req.id, f"judged unsatisfied: {req.assertion}"
            )
    return Evaluation(
        scores=tuple(scores),
        feedback=FeedbackBundle(notes=notes, suggestions=base.feedback.suggestions),
        judge_meta=JudgeMeta(model="simlab/noisy-judge"),
    )


def synthetic_initial(
    rules: Sequence[RulePredicate], p_initial: float, rng: np.random.Generator
) -> str:
    """Draft content satisfying each predicate independently with p_initial."""
    text = "draft"
    for rule in rules:
        if rng.random() < p_initial:
            text = rule.satisfy(text)
        else:
            text = rule.violate(text)
    return text or _FILLER


def synthetic_mutate(
    content: str,
    rules: Sequence[RulePredicate],
    guidance: FeedbackBundle | None,
    p_fix: float,
    rng: np.random.Generator,
) -> str:
    """Directed repair with feedback; a blind single-rule toggle without."""
    if not 0.0 <= p_fix <= 1.0:
        raise InvalidInputError(f"p_fix must be in [0, 1], got {p_fix}")
    if guidance is not None:
        named = set(guidance.notes)
        for rule in rules:
            if rule.requirement_id in named and rng.random() < p_fix:
                content = rule.satisfy(content)
        return content or _FILLER
    rule = rules[int(rng.integers(len(rules)))]
    content = rule.violate(content) if rule.holds(content) else rule.satisfy(content)
    return content or _FILLER


class SimDecomposer:
    def __init__(self, rset: RequirementSet):
        self._rset = rset

    def decompose(self, instruction: UserInstruction) -> RequirementSet:
        return self._rset


class SimCreator:
    """Seeded synthetic creator; ids are a per-run counter."""

    def __init__(
        self,
        rules: Sequence[RulePredicate],
        p_initial: float = 0.35,
        p_fix: float = 0.6,
        seed: int = 0,
    ):
        self._rules = tuple(rules)
        self._p_initial = p_initial
        self._p_fix = p_fix
        self._seed = seed
        self._counter = 0

    def _next_id(self) -> str:
        self._counter += 1
        return f"sim-{self._counter:04d}"

    def create_initial(
        self, instruction: UserInstruction, rset: RequirementSet, count: int
    ) -> list[Solution]:
        solutions = []
        for i in range(count):
            rng = seeded_stream(self._seed, 0, i, "create")
            content = synthetic_initial(self._rules, self._p_initial, rng)
            solutions.append(
                Solution(
                    id=self._next_id(),
                    content=content,
                    lineage=Lineage(parent_id=None, generation=0),
                )
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
        parent_generation = parent.lineage.generation if parent.lineage else 0
        ctx = context or CallContext(generation=parent_generation + 1, index=0)
        rng = seeded_stream(self._seed, ctx.generation, ctx.index, "mutate")
        guidance = feedback if mode == "full" else None
        content = synthetic_mutate(parent.content, self._rules, guidance, self._p_fix, rng)
        return Solution(
            id=self._next_id(),
            content=content,
            content_kind=parent.content_kind,
            lineage=Lineage(parent_id=parent.id, generation=parent_generation + 1),
        )


class SimJudge:
    def __init__(self, rules: Sequence[RulePredicate], noise: NoiseModel | None = None, seed: int = 0):
        self._rules = tuple(rules)
        self._noise = noise or NoiseModel(0.0, 0.0)
        self._seed = seed

    def judge(self, artifact: Artifact, rset: RequirementSet, context: CallContext | None = None) -> Evaluation:
        base = rule_judge(artifact, self._rules)
        if self._noise.is_zero:
            return base
        ctx = context or CallContext(generation=0, index=0)
        rng = seeded_stream(self._seed, ctx.generation, ctx.index, "judge")
        return noisy_judge(base, self._noise, rng, rset)


@dataclass(frozen=True, slots=True)
class PerturbationConfig:
    kind: Literal["scale", "gaussian_noise"]
    factor_min: float = 1.0
    factor_max: float = 1.0
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("scale", "gaussian_noise"):
            raise InvalidInputError(f"unknown perturbation kind {self.kind!r}")
        if self.factor_min < 0 or self.factor_max < self.factor_min:
            raise InvalidInputError("need 0 <= factor_min <= factor_max")
        if self.sigma < 0:
            raise InvalidInputError("sigma must be >= 0")


def parse_numeric_series(artifact: Artifact) -> list[float]:
    text = artifact_text(artifact)
    tokens = [t for t in re.split(r"[\s,]+", text.strip()) if t]
    if not tokens:
        raise UnsupportedArtifactError("artifact holds no numeric series")
    try:
        return [float(t) for t in tokens]
    except ValueError:
        raise UnsupportedArtifactError("artifact text is not a numeric series")


def perturb_artifact(artifact: Artifact, pc: PerturbationConfig) -> Artifact:
    """Scale or add Gaussian noise to a numeric-series artifact."""
    values = parse_numeric_series(artifact)
    if pc.kind == "gaussian_noise" and pc.sigma == 0.0:
        return artifact
    rng = seeded_stream(pc.seed, pc.kind, "perturb")
    if pc.kind == "scale":
        factor = float(rng.uniform(pc.factor_min, pc.factor_max))
        out = [v * factor for v in values]
    else:
        noise = rng.normal(0.0, pc.sigma, size=len(values))
        out = [v + float(e) for v, e in zip(values, noise)]
    return Artifact.from_text(" ".join(repr(v) for v in out))


@dataclass(frozen=True, slots=True)
class StabilityCase:
    case_id: str
    artifact: Artifact
    rules: tuple[RulePredicate, ...]
    true_quality: float


def build_stability_cases(rules: Sequence[RulePredicate], n_cases: int) -> list[StabilityCase]:
    """Cases spanning the quality range: case j satisfies the first s_j rules."""
    if n_cases < 2:
        raise InvalidInputError("need at least 2 stability cases")
    k = len(rules)
    cases = []
    for j, target in enumerate(np.linspace(0.0, float(k), n_cases)):
        satisfied = int(round(float(target)))
        text = "draft"
        for i, rule in enumerate(rules):
            text = rule.satisfy(text) if i < satisfied else rule.violate(text)
        cases.append(
            StabilityCase(
                case_id=f"case-{j:02d}",
                artifact=Artifact.from_text(text or _FILLER),
                rules=tuple(rules),
                true_quality=satisfied / k,
            )
        )
    return cases


@dataclass(frozen=True, slots=True)
class StabilityScores:
    case_ids: tuple[str, ...]
    true_quality: tuple[float, ...]
    scores: tuple[tuple[float, ...], ...]  # cases x repeats


def stability_experiment(
    cases: Sequence[StabilityCase],
    noise: NoiseModel,
    repeats: int,
    seed: int = 0,
) -> StabilityScores:
    """m independent noisy judgments per case, aggregated to scalar scores."""
    if repeats < 2:
        raise InvalidInputError("need at least 2 repeats")
    rows = []
    for j, case in enumerate(cases):
        base = rule_judge(case.artifact, case.rules)
        rset = rules_to_requirement_set(case.rules)
        row = []
        for t in range(repeats):
            rng = seeded_stream(seed, j, t, "stability")
            ev = noisy_judge(base, noise, rng, rset)
            row.append(aggregate_fitness(ev.scores))
        rows.append(tuple(row))
    return StabilityScores(
        case_ids=tuple(c.case_id for c in cases),
        true_quality=tuple(c.true_quality for c in cases),
        scores=tuple(rows),
    )


def write_scores_csv(scores: StabilityScores, path: str | Path) -> None:
    lines = ["case_id,repeat,score"]
    for case_id, row in zip(scores.case_ids, scores.scores):
        for t, value in enumerate(row):
            lines.append(f"{case_id},{t},{value!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass(frozen=True, slots=True)
class Scenario:
    """A self-contained simulation task: rules, noise, creator knobs, trial counts."""

    name: str
    instruction: str
    rules: tuple[RulePredicate, ...]
    prerequisites: dict[str, tuple[str, ...]] = field(default_factory=dict)
    noise: NoiseModel = NoiseModel(0.0, 0.0)
    p_initial: float = 0.35
    p_fix: float = 0.6
    stability_cases: int = 15
    stability_repeats: int = 5

    def requirement_set(self) -> RequirementSet:
        return rules_to_requirement_set(self.rules, self.prerequisites)


def _rule_from_dict(raw: dict) -> RulePredicate:
    return RulePredicate(
        requirement_id=raw["id"],
        kind=raw["kind"],
        needle=raw.get("needle"),
        pattern=raw.get("pattern"),
        witness=raw.get("witness"),
        min_len=raw.get("min"),
        max_len=raw.get("max"),
        value=raw.get("value"),
    )


def scenario_from_dict(raw: dict) -> Scenario:
    try:
        rules = tuple(_rule_from_dict(r) for r in raw["rules"])
    except KeyError as exc:
        raise InvalidInputError(f"scenario is missing field {exc}")
    noise_raw = raw.get("noise", {})
    creator_raw = raw.get("creator", {})
    stability_raw = raw.get("stability", {})
    scenario = Scenario(
        name=raw.get("name", "scenario"),
        instruction=raw.get("instruction", "Produce content satisfying every requirement."),
        rules=rules,
        prerequisites={k: tuple(v) for k, v in raw.get("prerequisites", {}).items()},
        noise=NoiseModel(
            eps_sat=float(noise_raw.get("eps_sat", 0.0)),
            eps_unsat=float(noise_raw.get("eps_unsat", 0.0)),
        ),
        p_initial=float(creator_raw.get("p_initial", 0.35)),
        p_fix=float(creator_raw.get("p_fix", 0.6)),
        stability_cases=int(stability_raw.get("cases", 15)),
        stability_repeats=int(stability_raw.get("repeats", 5)),
    )
    scenario.requirement_set()  # validates rule ids and prerequisite links
    return scenario


def load_scenario(name_or_path: str | Path) -> Scenario:
    """Load a scenario JSON file, or a packaged scenario by bare name."""
    path = Path(name_or_path)
    if path.is_file():
        return scenario_from_dict(json.loads(path.read_text(encoding="utf-8")))
    candidate = resources.files("evojudge").joinpath(f"scenarios/{name_or_path}.json")
    if candidate.is_file():
        return scenario_from_dict(json.loads(candidate.read_text(encoding="utf-8")))
    raise InvalidInputError(f"scenario not found: {name_or_path}")


def build_sim_agents(scenario: Scenario, seed: int) -> AgentSet:
    rset = scenario.requirement_set()
    return AgentSet(
        decomposer=SimDecomposer(rset),
        creator=SimCreator(
            scenario.rules, p_initial=scenario.p_initial, p_fix=scenario.p_fix, seed=seed
        ),
        judge=SimJudge(scenario.rules, noise=scenario.noise, seed=seed),
    )
