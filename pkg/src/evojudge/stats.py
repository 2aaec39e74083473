"""Inter-rater reliability and correlation statistics for judge-stability analysis.

Implements sample Pearson correlation with a two-sided t-test p-value, and
the one-way random-effects intraclass correlations ICC(1,1) and ICC(1,k)
for absolute agreement. Sample standard deviations use the n-1 denominator
throughout. Degenerate inputs raise typed errors instead of returning NaN.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from scipy.special import betainc

from evojudge.core import DomainError, InvalidInputError


class UndefinedCorrelationError(DomainError):
    """A series has zero variance; Pearson r is undefined."""


class DegenerateVarianceError(DomainError):
    """The ratings matrix has no usable variance decomposition."""


@dataclass(frozen=True, slots=True)
class RatingsMatrix:
    """n cases by m repeated ratings."""

    values: tuple[tuple[float, ...], ...]

    def __post_init__(self) -> None:
        n = len(self.values)
        if n < 2:
            raise InvalidInputError("ratings matrix needs at least 2 cases")
        m = len(self.values[0])
        if m < 2:
            raise InvalidInputError("ratings matrix needs at least 2 ratings per case")
        for row in self.values:
            if len(row) != m:
                raise InvalidInputError("ratings matrix rows must have equal length")
            if any(not math.isfinite(v) for v in row):
                raise InvalidInputError("ratings must be finite")

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def m(self) -> int:
        return len(self.values[0])

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]]) -> "RatingsMatrix":
        return cls(tuple(tuple(float(v) for v in row) for row in rows))


def read_scores_csv(path: str | Path) -> RatingsMatrix:
    """Read (case_id, repeat, score) rows into a matrix, one row per case."""
    by_case: dict[str, dict[int, float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for record in csv.DictReader(fh):
            try:
                case = record["case_id"]
                repeat = int(record["repeat"])
                score = float(record["score"])
            except (KeyError, TypeError, ValueError) as exc:
                raise InvalidInputError(f"bad scores CSV row {record!r}: {exc}")
            by_case.setdefault(case, {})[repeat] = score
    if not by_case:
        raise InvalidInputError(f"no score rows in {path}")
    rows = []
    for case in by_case:  # insertion order == file order
        repeats = by_case[case]
        rows.append([repeats[i] for i in sorted(repeats)])
    return RatingsMatrix.from_rows(rows)


def _t_sf(t: float, df: int) -> float:
    """Survival function of Student's t via the regularized incomplete beta."""
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    x = df / (df + t * t)
    tail = 0.5 * float(betainc(df / 2.0, 0.5, x))
    return tail if t >= 0 else 1.0 - tail


def pearson(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Sample Pearson r and the two-sided p from t = r*sqrt((n-2)/(1-r^2))."""
    if len(x) != len(y):
        raise InvalidInputError(f"series lengths differ: {len(x)} vs {len(y)}")
    n = len(x)
    if n < 3:
        raise InvalidInputError("pearson needs at least 3 points")
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    dx = [a - mx for a in x]
    dy = [b - my for b in y]
    sxx = math.fsum(a * a for a in dx)
    syy = math.fsum(b * b for b in dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("a series has zero variance")
    r = math.fsum(a * b for a, b in zip(dx, dy)) / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        return r, 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    p = 2.0 * _t_sf(abs(t), n - 2)
    return r, min(p, 1.0)


def _mean_squares(matrix: RatingsMatrix) -> tuple[float, float]:
    """One-way ANOVA: between-case (BMS) and within-case (WMS) mean squares."""
    n, m = matrix.n, matrix.m
    grand = math.fsum(math.fsum(row) for row in matrix.values) / (n * m)
    row_means = [math.fsum(row) / m for row in matrix.values]
    ssb = m * math.fsum((rm - grand) ** 2 for rm in row_means)
    ssw = math.fsum(
        (v - rm) ** 2 for row, rm in zip(matrix.values, row_means) for v in row
    )
    return ssb / (n - 1), ssw / (n * (m - 1))


def icc_1_1(matrix: RatingsMatrix) -> float:
    """Single-rating ICC, one-way random effects, absolute agreement."""
    bms, wms = _mean_squares(matrix)
    if bms == 0.0 and wms == 0.0:
        raise DegenerateVarianceError("all ratings are identical; ICC undefined")
    return (bms - wms) / (bms + (matrix.m - 1) * wms)


def icc_1_k(matrix: RatingsMatrix) -> float:
    """Averaged-ratings ICC, one-way random effects, absolute agreement."""
    bms, wms = _mean_squares(matrix)
    if bms == 0.0:
        raise DegenerateVarianceError("between-case variance is zero; ICC(1,k) undefined")
    return (bms - wms) / bms


def sample_std(values: Sequence[float]) -> float:
    n = len(values)
    if n < 2:
        raise InvalidInputError("sample std needs at least 2 values")
    mean = math.fsum(values) / n
    return math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (n - 1))


@dataclass(frozen=True, slots=True)
class StabilityReport:
    case_means: tuple[float, ...]
    case_stds: tuple[float, ...]
    r: float | None
    p: float | None
    icc_single: float
    icc_average: float
    degenerate_correlation: bool

    def to_dict(self) -> dict:
        return {
            "case_means": list(self.case_means),
            "case_stds": list(self.case_stds),
            "r": self.r,
            "p": self.p,
            "icc_1_1": self.icc_single,
            "icc_1_k": self.icc_average,
            "degenerate_correlation": self.degenerate_correlation,
        }

    def to_text(self) -> str:
        lines = ["judge stability report", "======================"]
        lines.append(f"cases: {len(self.case_means)}")
        if self.degenerate_correlation:
            lines.append("mean-vs-std correlation: degenerate (no variance in a series)")
        else:
            lines.append(f"mean-vs-std correlation: r = {self.r:.6f}, p = {self.p:.6f}")
        lines.append(f"ICC(1,1) = {self.icc_single:.6f}")
        lines.append(f"ICC(1,k) = {self.icc_average:.6f}")
        lines.append("")
        lines.append("case  mean      std")
        for i, (mean, std) in enumerate(zip(self.case_means, self.case_stds)):
            lines.append(f"{i:>4}  {mean:.6f}  {std:.6f}")
        return "\n".join(lines) + "\n"


def stability_report(matrix: RatingsMatrix) -> StabilityReport:
    """Per-case mean/std, their correlation, and both ICCs in one report.

    A zero-variance mean or std series makes the correlation degenerate; the
    report flags it rather than failing, since it is the expected outcome for
    noise-free ratings. ICC degeneracy still raises, as those inputs carry no
    reliability information at all.
    """
    means = tuple(math.fsum(row) / matrix.m for row in matrix.values)
    stds = tuple(sample_std(row) for row in matrix.values)
    try:
        r, p = pearson(means, stds)
        degenerate = False
    except UndefinedCorrelationError:
        r, p = None, None
        degenerate = True
    return StabilityReport(
        case_means=means,
        case_stds=stds,
        r=r,
        p=p,
        icc_single=icc_1_1(matrix),
        icc_average=icc_1_k(matrix),
        degenerate_correlation=degenerate,
    )
