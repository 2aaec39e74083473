"""Correlation and ICC statistics against independent oracles."""

from __future__ import annotations

import math
import random

import pytest
from hypothesis import given, strategies as st

from evojudge.core import InvalidInputError
from evojudge.stats import (
    DegenerateVarianceError,
    RatingsMatrix,
    UndefinedCorrelationError,
    _t_sf,
    icc_1_1,
    icc_1_k,
    pearson,
    sample_std,
    stability_report,
)
from oracles import icc_1_1_oracle, icc_1_k_oracle, pearson_oracle, sample_std_oracle


def random_series(rng: random.Random, n: int) -> list[float]:
    return [rng.uniform(-10, 10) for _ in range(n)]


def random_matrix(rng: random.Random, n: int, m: int) -> list[list[float]]:
    return [[rng.uniform(0, 5) for _ in range(m)] for _ in range(n)]


class TestPearson:
    def test_perfect_linearity(self):
        r, p = pearson([1, 2, 3], [2, 4, 6])
        assert r == 1.0
        assert p == 0.0

    def test_perfect_inverse(self):
        r, p = pearson([1, 2, 3], [3, 2, 1])
        assert r == -1.0

    def test_fifteen_pair_fixture_matches_oracle(self):
        rng = random.Random(1515)
        x = random_series(rng, 15)
        y = [0.4 * v + rng.gauss(0, 2) for v in x]
        r, p = pearson(x, y)
        r_oracle, p_oracle = pearson_oracle(x, y)
        assert r == pytest.approx(r_oracle, abs=1e-9)
        assert p == pytest.approx(p_oracle, abs=1e-6)

    def test_zero_variance_rejected(self):
        with pytest.raises(UndefinedCorrelationError):
            pearson([1, 1, 1], [1, 2, 3])

    def test_length_mismatch_rejected(self):
        with pytest.raises(InvalidInputError):
            pearson([1, 2, 3], [1, 2])

    def test_too_short_rejected(self):
        with pytest.raises(InvalidInputError):
            pearson([1, 2], [3, 4])

    @given(st.integers(0, 10_000))
    def test_symmetry(self, seed):
        rng = random.Random(seed)
        x, y = random_series(rng, 8), random_series(rng, 8)
        try:
            rxy, _ = pearson(x, y)
            ryx, _ = pearson(y, x)
        except UndefinedCorrelationError:
            return
        assert rxy == pytest.approx(ryx, abs=1e-12)

    @given(st.integers(0, 10_000), st.floats(-5, 5), st.floats(-3, 3))
    def test_affine_invariance(self, seed, a, b):
        if abs(a) < 1e-6:
            return
        rng = random.Random(seed)
        x, y = random_series(rng, 8), random_series(rng, 8)
        try:
            r, _ = pearson(x, y)
            r_affine, _ = pearson([a * v + b for v in x], y)
        except UndefinedCorrelationError:
            return
        assert r_affine == pytest.approx(math.copysign(1.0, a) * r, abs=1e-9)

    @given(st.integers(0, 10_000))
    def test_r_bounded_p_in_unit_interval(self, seed):
        rng = random.Random(seed)
        x, y = random_series(rng, 10), random_series(rng, 10)
        try:
            r, p = pearson(x, y)
        except UndefinedCorrelationError:
            return
        assert -1.0 <= r <= 1.0
        assert 0.0 < p <= 1.0


class TestStudentTailOracle:
    # classic two-sided 5% critical values
    @pytest.mark.parametrize(
        "t,df", [(12.706, 1), (2.571, 5), (2.228, 10), (2.086, 20), (2.042, 30)]
    )
    def test_tabulated_critical_values(self, t, df):
        assert 2 * _t_sf(t, df) == pytest.approx(0.05, abs=5e-4)

    def test_center_gives_p_one(self):
        assert _t_sf(0.0, 7) == pytest.approx(0.5, abs=1e-12)


class TestIcc:
    def test_perfect_agreement(self):
        matrix = RatingsMatrix.from_rows([[1, 1], [2, 2], [3, 3]])
        assert icc_1_1(matrix) == 1.0
        assert icc_1_k(matrix) == 1.0

    def test_pure_noise_negative(self):
        rows = [[1, 2], [2, 1], [1, 2], [2, 1]]
        matrix = RatingsMatrix.from_rows(rows)
        value = icc_1_1(matrix)
        assert value < 0
        assert value == pytest.approx(icc_1_1_oracle(rows), abs=1e-12)

    def test_4x3_fixture_matches_oracle(self):
        rng = random.Random(43)
        rows = random_matrix(rng, 4, 3)
        matrix = RatingsMatrix.from_rows(rows)
        assert icc_1_1(matrix) == pytest.approx(icc_1_1_oracle(rows), abs=1e-9)
        assert icc_1_k(matrix) == pytest.approx(icc_1_k_oracle(rows), abs=1e-9)

    def test_average_at_least_single_when_bms_dominates(self):
        rng = random.Random(7)
        for _ in range(20):
            rows = [[base + rng.gauss(0, 0.2) for _ in range(4)] for base in range(5)]
            matrix = RatingsMatrix.from_rows(rows)
            assert icc_1_k(matrix) >= icc_1_1(matrix)
            assert icc_1_1(matrix) <= 1.0
            assert icc_1_k(matrix) <= 1.0

    def test_all_equal_matrix_degenerate(self):
        with pytest.raises(DegenerateVarianceError):
            icc_1_1(RatingsMatrix.from_rows([[2, 2], [2, 2]]))
        with pytest.raises(DegenerateVarianceError):
            icc_1_k(RatingsMatrix.from_rows([[2, 2], [2, 2]]))

    def test_matrix_shape_validated(self):
        with pytest.raises(InvalidInputError):
            RatingsMatrix.from_rows([[1, 2]])
        with pytest.raises(InvalidInputError):
            RatingsMatrix.from_rows([[1], [2]])
        with pytest.raises(InvalidInputError):
            RatingsMatrix.from_rows([[1, 2], [3, float("nan")]])


class TestStabilityReport:
    def test_zero_noise_flags_degenerate_correlation(self):
        matrix = RatingsMatrix.from_rows([[0.2, 0.2], [0.5, 0.5], [0.9, 0.9]])
        report = stability_report(matrix)
        assert report.degenerate_correlation
        assert report.r is None
        assert all(s == 0.0 for s in report.case_stds)
        assert report.icc_single == 1.0

    def test_simlab_default_scenario_reports_negative_r(self):
        from evojudge.simlab import (
            build_stability_cases,
            load_scenario,
            stability_experiment,
        )

        scenario = load_scenario("stability")
        cases = build_stability_cases(scenario.rules, scenario.stability_cases)
        scores = stability_experiment(
            cases, scenario.noise, scenario.stability_repeats, seed=42
        )
        report = stability_report(RatingsMatrix.from_rows(scores.scores))
        assert report.r is not None and report.r < 0

    def test_fields_match_component_oracles(self):
        rng = random.Random(99)
        rows = random_matrix(rng, 6, 4)
        matrix = RatingsMatrix.from_rows(rows)
        report = stability_report(matrix)
        means = [sum(row) / 4 for row in rows]
        stds = [sample_std_oracle(row) for row in rows]
        assert list(report.case_means) == pytest.approx(means, abs=1e-12)
        assert list(report.case_stds) == pytest.approx(stds, abs=1e-12)
        r_oracle, p_oracle = pearson_oracle(means, stds)
        assert report.r == pytest.approx(r_oracle, abs=1e-9)
        assert report.p == pytest.approx(p_oracle, abs=1e-6)
        assert report.icc_single == pytest.approx(icc_1_1_oracle(rows), abs=1e-9)
        assert report.icc_average == pytest.approx(icc_1_k_oracle(rows), abs=1e-9)

    def test_sample_std_uses_n_minus_one(self):
        assert sample_std([1.0, 3.0]) == pytest.approx(math.sqrt(2.0))
        assert sample_std([2.0, 2.0, 2.0]) == 0.0
