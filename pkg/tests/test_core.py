"""Domain types, fitness aggregation, and requirement metrics."""

from __future__ import annotations

import itertools
import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from evojudge.core import (
    Artifact,
    Evaluation,
    FeedbackBundle,
    Individual,
    InvalidInputError,
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
from helpers import dag_edges, random_dag_requirement_set
from oracles import fitness_oracle, requirements_met_oracle

score_vectors = st.lists(st.integers(min_value=0, max_value=1), min_size=1, max_size=12)


def rset_of(*reqs: Requirement) -> RequirementSet:
    return RequirementSet(tuple(reqs))


def eval_of(*scores: int) -> Evaluation:
    notes = {f"r{i}": "missing" for i, v in enumerate(scores) if v == 0}
    return Evaluation(scores=tuple(scores), feedback=FeedbackBundle(notes=notes))


class TestAggregateFitness:
    def test_three_of_four(self):
        assert aggregate_fitness((1, 1, 0, 1)) == 0.75

    def test_all_fail(self):
        assert aggregate_fitness((0, 0, 0)) == 0.0

    def test_all_pass(self):
        assert aggregate_fitness((1, 1, 1, 1, 1)) == 1.0

    def test_empty_vector_rejected(self):
        with pytest.raises(InvalidInputError):
            aggregate_fitness(())

    def test_fractional_scores_rejected(self):
        with pytest.raises(InvalidInputError):
            aggregate_fitness((1, 0.5, 0))

    @given(score_vectors)
    def test_matches_exact_rational(self, v):
        assert aggregate_fitness(v) == fitness_oracle(v)

    @given(score_vectors)
    def test_monotone_flip_increases_by_one_kth(self, v):
        zeros = [i for i, x in enumerate(v) if x == 0]
        if not zeros:
            return
        flipped = list(v)
        flipped[zeros[0]] = 1
        k = len(v)
        assert aggregate_fitness(flipped) > aggregate_fitness(v)
        assert Fraction(sum(flipped), k) - Fraction(sum(v), k) == Fraction(1, k)

    @given(score_vectors)
    def test_extremes_iff_uniform(self, v):
        fitness = aggregate_fitness(v)
        assert (fitness == 1.0) == all(x == 1 for x in v)
        assert (fitness == 0.0) == all(x == 0 for x in v)


class TestRequirementsMet:
    def test_no_prerequisites_both_modes_equal(self):
        rset = rset_of(Requirement("r0", "a"), Requirement("r1", "b"))
        ev = eval_of(1, 1)
        assert requirements_met(ev, rset, "independent") == 1.0
        assert requirements_met(ev, rset, "dependent") == 1.0

    def test_unmet_prerequisite_gates_dependent(self):
        rset = rset_of(Requirement("r0", "a"), Requirement("r1", "b", ("r0",)))
        ev = eval_of(0, 1)
        assert requirements_met(ev, rset, "independent") == 0.5
        assert requirements_met(ev, rset, "dependent") == 0.0

    def test_three_node_chain(self):
        # r1 <- r2 <- r3, scores (1, 0, 1); frozen from the closure oracle
        rset = rset_of(
            Requirement("r0", "a"),
            Requirement("r1", "b", ("r0",)),
            Requirement("r2", "c", ("r1",)),
        )
        ev = eval_of(1, 0, 1)
        expected = requirements_met_oracle([1, 0, 1], {(1, 0), (2, 1)}, "dependent")
        assert expected == pytest.approx(1 / 3)
        assert requirements_met(ev, rset, "dependent") == expected

    def test_length_mismatch_rejected(self):
        rset = rset_of(Requirement("r0", "a"))
        with pytest.raises(InvalidInputError):
            requirements_met(eval_of(1, 0), rset, "independent")

    @given(st.data())
    def test_dependent_bounded_by_independent(self, data):
        rng = random.Random(data.draw(st.integers(0, 10_000)))
        k = data.draw(st.integers(min_value=1, max_value=8))
        rset = random_dag_requirement_set(rng, k)
        scores = tuple(data.draw(st.integers(0, 1)) for _ in range(k))
        ev = eval_of(*scores)
        independent = requirements_met(ev, rset, "independent")
        dependent = requirements_met(ev, rset, "dependent")
        assert dependent <= independent
        assert independent == aggregate_fitness(scores)

    def test_exhaustive_against_oracle_small(self):
        rng = random.Random(5)
        for _ in range(5):
            k = rng.randint(2, 6)
            rset = random_dag_requirement_set(rng, k)
            edges = dag_edges(rset)
            for combo in itertools.product((0, 1), repeat=k):
                ev = eval_of(*combo)
                for mode in ("independent", "dependent"):
                    assert requirements_met(ev, rset, mode) == requirements_met_oracle(
                        list(combo), edges, mode
                    )


class TestValidateRequirementSet:
    def test_single_requirement_ok(self):
        rset = validate_requirement_set([Requirement("r1", " trimmed ")])
        assert rset.k == 1
        assert rset.requirements[0].assertion == "trimmed"

    def test_two_cycle_rejected(self):
        with pytest.raises(RequirementSetError, match="cycle"):
            validate_requirement_set(
                [Requirement("r1", "a", ("r2",)), Requirement("r2", "b", ("r1",))]
            )

    def test_duplicate_id_rejected(self):
        with pytest.raises(RequirementSetError, match="duplicate.*r1"):
            validate_requirement_set([Requirement("r1", "a"), Requirement("r1", "b")])

    def test_empty_set_rejected(self):
        with pytest.raises(RequirementSetError, match="at least one"):
            validate_requirement_set([])

    def test_dangling_prerequisite_rejected(self):
        with pytest.raises(RequirementSetError, match="unknown prerequisites.*ghost"):
            validate_requirement_set([Requirement("r1", "a", ("ghost",))])

    def test_self_cycle_rejected(self):
        with pytest.raises(RequirementSetError, match="cycle"):
            validate_requirement_set([Requirement("r1", "a", ("r1",))])


class TestTypeInvariants:
    def test_instruction_needs_text(self):
        with pytest.raises(InvalidInputError):
            UserInstruction(id="x", text="   \n")

    def test_solution_needs_content(self):
        with pytest.raises(InvalidInputError):
            Solution(id="s", content="")

    def test_lineage_generation_nonnegative(self):
        with pytest.raises(InvalidInputError):
            Lineage(parent_id=None, generation=-1)

    def test_text_artifact_needs_body(self):
        with pytest.raises(InvalidInputError):
            Artifact(kind="text", text="")

    def test_file_artifact_digest_checked(self, tmp_path):
        path = tmp_path / "a.bin"
        path.write_bytes(b"abc")
        with pytest.raises(InvalidInputError, match="digest mismatch"):
            Artifact(kind="file", path=str(path), digest="0" * 64)

    def test_file_artifact_digest_computed(self, tmp_path):
        path = tmp_path / "a.bin"
        path.write_bytes(b"abc")
        artifact = Artifact.from_file(path)
        assert artifact.digest == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"

    def test_evaluation_scores_binary(self):
        with pytest.raises(InvalidInputError):
            Evaluation(scores=(1, 2))

    def test_evaluation_failures_need_feedback(self):
        with pytest.raises(InvalidInputError):
            Evaluation(scores=(1, 0))

    def test_individual_fitness_iff_evaluated(self):
        sol = Solution(id="s", content="x")
        with pytest.raises(InvalidInputError):
            Individual(solution=sol, fitness=0.5, status="pending")
        with pytest.raises(InvalidInputError):
            Individual(solution=sol, status="evaluated")

    def test_individual_fitness_must_match_scores(self):
        sol = Solution(id="s", content="x")
        ev = eval_of(1, 0)
        with pytest.raises(InvalidInputError):
            Individual(solution=sol, evaluation=ev, fitness=0.75, status="evaluated")
        ok = Individual(solution=sol, evaluation=ev, fitness=0.5, status="evaluated")
        assert ok.fitness == 0.5

    def test_population_size_even(self):
        sol = Solution(id="s", content="x")
        member = Individual(solution=sol)
        with pytest.raises(InvalidInputError):
            Population(generation=0, members=(member,))


class TestCanonicalJson:
    def test_sorted_keys_compact(self):
        assert canonical_json({"b": 1, "a": [1, 2]}) == '{"a":[1,2],"b":1}'

    def test_dataclasses_serialize(self):
        req = Requirement("r1", "a", ("r0",))
        assert canonical_json(req) == '{"assertion":"a","id":"r1","prerequisites":["r0"]}'

    def test_float_round_trip(self):
        assert canonical_json({"x": 0.1}) == '{"x":0.1}'

    def test_identical_values_identical_bytes(self):
        ev1 = eval_of(1, 0, 1)
        ev2 = eval_of(1, 0, 1)
        assert canonical_json(ev1) == canonical_json(ev2)
