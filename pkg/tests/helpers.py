"""Shared fixtures: a scripted gateway and randomized requirement DAGs."""

from __future__ import annotations

import random

from evojudge.core import Requirement, RequirementSet
from evojudge.gateway import Usage


class ScriptedGateway:
    """Replays canned replies in order; records every request it saw."""

    def __init__(self, replies: list[str]):
        self.replies = list(replies)
        self.requests = []

    def complete(self, request) -> tuple[str, Usage]:
        self.requests.append(request)
        if not self.replies:
            raise AssertionError("scripted gateway ran out of replies")
        text = self.replies.pop(0)
        return text, Usage(input_tokens=7, output_tokens=3, latency_s=0.0, cost=0.0)


def random_dag_requirement_set(rng: random.Random, k: int) -> RequirementSet:
    """Random requirement set whose prerequisite edges only point backwards."""
    requirements = []
    for i in range(k):
        prereqs = tuple(f"r{j}" for j in range(i) if rng.random() < 0.3)
        requirements.append(
            Requirement(id=f"r{i}", assertion=f"criterion {i} holds", prerequisites=prereqs)
        )
    return RequirementSet(tuple(requirements))


def dag_edges(rset: RequirementSet) -> set[tuple[int, int]]:
    """(i, j) pairs meaning requirement i directly requires requirement j."""
    index = {r.id: i for i, r in enumerate(rset.requirements)}
    return {
        (index[r.id], index[p])
        for r in rset.requirements
        for p in r.prerequisites
    }
