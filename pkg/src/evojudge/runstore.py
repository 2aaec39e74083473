"""Append-only run log with replay verification and table-style reports.

Each run owns a directory: ``run.jsonl`` (one canonical-JSON event per
line), ``config.snapshot.json``, ``artifacts/``, and the generated
``report.json`` / ``report.txt``. Events are never rewritten. The
determinism hash covers a projection of the log with wall-clock fields
(timestamps, latencies) stripped, so two runs of the same seeded scenario
hash identically across machines.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import IO

from evojudge.core import (
    DomainError,
    Evaluation,
    FeedbackBundle,
    InvalidInputError,
    Requirement,
    RequirementSet,
    canonical_json,
    requirements_met,
    sha256_hex,
)
from evojudge.gateway import Usage, UsageSummary, account

EVENT_KINDS = frozenset(
    {
        "run_start",
        "decomposed",
        "individual_created",
        "rendered",
        "render_failed",
        "judged",
        "eval_failed",
        "selected",
        "mutated",
        "terminated",
        "gateway_call",
        "run_end",
    }
)

_WALLCLOCK_PAYLOAD_KEYS = ("latency_s",)


class StoreError(DomainError):
    pass


def make_run_id(instruction_text: str, config_snapshot: dict) -> str:
    digest = sha256_hex(
        canonical_json({"instruction": instruction_text, "config": config_snapshot}).encode("utf-8")
    )
    return f"run-{digest[:12]}"


class RunStore:
    """Single-writer, append-only event sink for one run."""

    def __init__(self, run_dir: str | Path, run_id: str, config_snapshot: dict):
        self.run_dir = Path(run_dir)
        self.run_id = run_id
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self._log_path = self.run_dir / "run.jsonl"
        if self._log_path.exists():
            raise StoreError(f"refusing to append to an existing log: {self._log_path}")
        (self.run_dir / "config.snapshot.json").write_text(
            json.dumps(config_snapshot, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        (self.run_dir / "artifacts").mkdir(exist_ok=True)
        self._seq = 0
        self._fh: IO[str] | None = open(self._log_path, "a", encoding="utf-8")

    def append_event(self, kind: str, payload: dict, generation: int | None = None) -> None:
        if self._fh is None:
            raise StoreError("run store is closed")
        if kind not in EVENT_KINDS:
            raise InvalidInputError(f"unknown event kind {kind!r}")
        event = {
            "seq": self._seq,
            "ts": time.time(),
            "run_id": self.run_id,
            "generation": generation,
            "kind": kind,
            "payload": payload,
        }
        self._fh.write(canonical_json(event) + "\n")
        self._fh.flush()
        self._seq += 1

    def artifacts_dir(self, generation: int, solution_id: str) -> Path:
        path = self.run_dir / "artifacts" / str(generation) / solution_id
        path.mkdir(parents=True, exist_ok=True)
        return path

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self) -> "RunStore":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def read_events(run_dir: str | Path) -> list[dict]:
    path = Path(run_dir) / "run.jsonl"
    if not path.is_file():
        raise StoreError(f"no run log at {path}")
    events = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        try:
            events.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise StoreError(f"unparseable event at line {lineno}: {exc}")
    return events


def _strip_wallclock(event: dict) -> dict:
    out = {k: v for k, v in event.items() if k != "ts"}
    payload = out.get("payload")
    if isinstance(payload, dict):
        out["payload"] = {k: v for k, v in payload.items() if k not in _WALLCLOCK_PAYLOAD_KEYS}
    return out


def log_hash(run_dir: str | Path) -> str:
    """SHA-256 over the timestamp-stripped canonical projection of the log."""
    lines = [canonical_json(_strip_wallclock(e)) for e in read_events(run_dir)]
    return sha256_hex("\n".join(lines).encode("utf-8"))


@dataclass(frozen=True, slots=True)
class ReplayReport:
    complete: bool
    clean: bool
    violations: tuple[str, ...]
    run_id: str | None
    best_solution_id: str | None
    best_fitness: float | None
    curve: tuple[float, ...]
    generations_executed: int | None
    events: int
    resumable_state: str | None = None


def replay(run_dir: str | Path) -> ReplayReport:
    """Reconstruct a run purely from its events and verify the loop invariants."""
    events = read_events(run_dir)
    violations: list[str] = []
    if not events:
        return ReplayReport(False, False, (), None, None, None, (), None, 0, "empty log")

    for i, event in enumerate(events):
        if event.get("seq") != i:
            violations.append(f"sequence break at line {i}: seq={event.get('seq')}")
            break
    if events[0].get("kind") != "run_start":
        violations.append("log does not start with run_start")

    run_id = events[0].get("run_id")
    run_end = next((e for e in events if e.get("kind") == "run_end"), None)
    if run_end is None:
        last_gen = max((e.get("generation") or 0 for e in events), default=0)
        state = f"incomplete run: {len(events)} events, last generation seen {last_gen}"
        return ReplayReport(False, False, tuple(violations), run_id, None, None, (), None, len(events), state)

    population_size = events[0].get("payload", {}).get("population_size")
    created: dict[int, list[dict]] = {}
    fitness_by_id: dict[str, float] = {}
    judged_by_gen: dict[int, list[str]] = {}
    selected: dict[int, dict] = {}
    for event in events:
        kind = event.get("kind")
        gen = event.get("generation")
        payload = event.get("payload", {})
        if kind == "individual_created":
            created.setdefault(gen, []).append(payload)
        elif kind == "judged":
            fitness_by_id[payload.get("solution_id")] = payload.get("fitness")
            judged_by_gen.setdefault(gen, []).append(payload.get("solution_id"))
        elif kind == "selected":
            selected[gen] = payload

    generations = sorted(created)
    for gen in generations:
        carried = len(selected.get(gen - 1, {}).get("elites", [])) if gen > 0 else 0
        size = len(created[gen]) + carried
        if population_size is not None and gen > 0 and size != population_size:
            violations.append(
                f"generation {gen}: population size {size} != configured {population_size}"
            )
        if gen > 0:
            parent_pool = set(selected.get(gen - 1, {}).get("parents", []))
            for payload in created[gen]:
                parent = payload.get("parent_id")
                if parent is None:
                    violations.append(
                        f"generation {gen}: offspring {payload.get('solution_id')} has no parent"
                    )
                elif parent not in parent_pool:
                    violations.append(
                        f"generation {gen}: offspring {payload.get('solution_id')} "
                        f"parent {parent} not in selected parents"
                    )

    # Recompute the per-generation best, carrying elite fitness forward.
    recomputed_curve: list[float] = []
    for gen in generations:
        candidates = [fitness_by_id[s] for s in judged_by_gen.get(gen, []) if s in fitness_by_id]
        for elite_id in selected.get(gen - 1, {}).get("elites", []) if gen > 0 else []:
            if elite_id in fitness_by_id:
                candidates.append(fitness_by_id[elite_id])
        recomputed_curve.append(max(candidates) if candidates else float("nan"))

    end_payload = run_end.get("payload", {})
    curve = tuple(float(v) for v in end_payload.get("curve", []))
    best_id = end_payload.get("best_solution_id")
    best_fitness = end_payload.get("best_fitness")

    if list(curve) != recomputed_curve:
        violations.append(f"recorded curve {list(curve)} != replayed curve {recomputed_curve}")
    if any(b < a for a, b in zip(curve, curve[1:])):
        violations.append(f"best-fitness curve is not non-decreasing: {list(curve)}")
    if fitness_by_id:
        max_fitness = max(fitness_by_id.values())
        if best_fitness is None or best_fitness != max_fitness:
            culprit = max(fitness_by_id, key=lambda s: fitness_by_id[s])
            violations.append(
                f"recorded best fitness {best_fitness} != max judged fitness "
                f"{max_fitness} (individual {culprit})"
            )
        if best_id not in fitness_by_id:
            violations.append(f"best solution {best_id} was never judged")
        elif fitness_by_id[best_id] != best_fitness:
            violations.append(
                f"best solution {best_id} has fitness {fitness_by_id[best_id]}, "
                f"recorded best is {best_fitness}"
            )

    return ReplayReport(
        complete=True,
        clean=not violations,
        violations=tuple(violations),
        run_id=run_id,
        best_solution_id=best_id,
        best_fitness=best_fitness,
        curve=curve,
        generations_executed=end_payload.get("generations_executed"),
        events=len(events),
    )


@dataclass(frozen=True, slots=True)
class RunReport:
    run_id: str
    gateway_calls: int
    total_cost: float
    average_cost: float
    average_time_s: float
    average_input_tokens: float
    average_output_tokens: float
    usage_missing: bool
    curve: tuple[float, ...]
    generations_executed: int
    best_solution_id: str | None
    best_fitness: float | None
    requirements_met_independent: float | None
    requirements_met_dependent: float | None
    all_pass: bool

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "gateway_calls": self.gateway_calls,
            "total_cost": self.total_cost,
            "average_cost": self.average_cost,
            "average_time_s": self.average_time_s,
            "average_input_tokens": self.average_input_tokens,
            "average_output_tokens": self.average_output_tokens,
            "usage_missing": self.usage_missing,
            "best_fitness_curve": list(self.curve),
            "generations_executed": self.generations_executed,
            "best_solution_id": self.best_solution_id,
            "best_fitness": self.best_fitness,
            "requirements_met_independent": self.requirements_met_independent,
            "requirements_met_dependent": self.requirements_met_dependent,
            "all_pass": self.all_pass,
        }

    def to_text(self) -> str:
        lines = [f"run report: {self.run_id}", "=" * (12 + len(self.run_id))]
        lines.append(f"generations executed: {self.generations_executed}")
        lines.append(f"best fitness: {self.best_fitness}")
        lines.append(f"best solution: {self.best_solution_id}")
        lines.append(f"best-fitness curve: {list(self.curve)}")
        lines.append(f"requirements met (independent): {self.requirements_met_independent}")
        lines.append(f"requirements met (dependent): {self.requirements_met_dependent}")
        lines.append(f"all requirements pass: {self.all_pass}")
        lines.append(f"gateway calls: {self.gateway_calls}")
        if self.usage_missing:
            lines.append("usage: no gateway usage recorded (zeros)")
        lines.append(f"total cost: {self.total_cost}")
        lines.append(f"average cost: {self.average_cost}")
        lines.append(f"average time (s): {self.average_time_s}")
        lines.append(f"average input tokens: {self.average_input_tokens}")
        lines.append(f"average output tokens: {self.average_output_tokens}")
        return "\n".join(lines) + "\n"


def report(run_dir: str | Path, write_files: bool = True) -> RunReport:
    """Aggregate accounting and requirement metrics for a completed run."""
    events = read_events(run_dir)
    run_end = next((e for e in events if e.get("kind") == "run_end"), None)
    if run_end is None:
        raise StoreError("run log has no run_end event; cannot report")
    run_id = events[0].get("run_id", "unknown")

    usages = []
    for event in events:
        if event.get("kind") != "gateway_call":
            continue
        payload = event.get("payload", {})
        if not payload.get("ok"):
            continue
        usages.append(
            Usage(
                input_tokens=int(payload.get("input_tokens", 0)),
                output_tokens=int(payload.get("output_tokens", 0)),
                latency_s=float(payload.get("latency_s") or 0.0),
                cost=float(payload.get("cost", 0.0)),
                usage_missing=bool(payload.get("usage_missing", False)),
            )
        )
    summary: UsageSummary = account(usages)

    decomposed = next((e for e in events if e.get("kind") == "decomposed"), None)
    end_payload = run_end.get("payload", {})
    best_id = end_payload.get("best_solution_id")
    best_fitness = end_payload.get("best_fitness")
    curve = tuple(float(v) for v in end_payload.get("curve", []))

    met_i = met_d = None
    if decomposed is not None and best_id is not None:
        rset = RequirementSet(
            tuple(
                Requirement(
                    id=r["id"],
                    assertion=r["assertion"],
                    prerequisites=tuple(r.get("prerequisites", [])),
                )
                for r in decomposed["payload"]["requirements"]
            )
        )
        judged = next(
            (
                e
                for e in events
                if e.get("kind") == "judged" and e["payload"].get("solution_id") == best_id
            ),
            None,
        )
        if judged is not None:
            payload = judged["payload"]
            evaluation = Evaluation(
                scores=tuple(int(v) for v in payload["scores"]),
                feedback=FeedbackBundle(
                    notes=dict(payload.get("feedback_notes", {})),
                    suggestions=tuple(payload.get("suggestions", [])),
                ),
            )
            met_i = requirements_met(evaluation, rset, "independent")
            met_d = requirements_met(evaluation, rset, "dependent")

    run_report = RunReport(
        run_id=run_id,
        gateway_calls=summary.count,
        total_cost=summary.total_cost,
        average_cost=summary.average_cost,
        average_time_s=summary.average_time_s,
        average_input_tokens=summary.average_input_tokens,
        average_output_tokens=summary.average_output_tokens,
        usage_missing=summary.count == 0 or any(u.usage_missing for u in usages),
        curve=curve,
        generations_executed=int(end_payload.get("generations_executed", max(len(curve) - 1, 0))),
        best_solution_id=best_id,
        best_fitness=best_fitness,
        requirements_met_independent=met_i,
        requirements_met_dependent=met_d,
        all_pass=best_fitness == 1.0,
    )
    if write_files:
        out = Path(run_dir)
        (out / "report.json").write_text(
            json.dumps(run_report.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        (out / "report.txt").write_text(run_report.to_text(), encoding="utf-8")
    return run_report
