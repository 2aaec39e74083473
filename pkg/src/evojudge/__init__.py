"""Evolutionary optimization with a requirement-decomposing judge as fitness."""

from evojudge.core import (
    Artifact,
    DomainError,
    Evaluation,
    FeedbackBundle,
    Individual,
    InvalidInputError,
    JudgeMeta,
    Lineage,
    Population,
    Requirement,
    RequirementSet,
    RequirementSetError,
    Solution,
    UserInstruction,
    aggregate_fitness,
    canonical_json,
    requirements_met,
    validate_requirement_set,
)

__all__ = [
    "Artifact",
    "DomainError",
    "Evaluation",
    "FeedbackBundle",
    "Individual",
    "InvalidInputError",
    "JudgeMeta",
    "Lineage",
    "Population",
    "Requirement",
    "RequirementSet",
    "RequirementSetError",
    "Solution",
    "UserInstruction",
    "aggregate_fitness",
    "canonical_json",
    "requirements_met",
    "validate_requirement_set",
]

__version__ = "0.1.0"
