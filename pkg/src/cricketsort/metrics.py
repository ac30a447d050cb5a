"""Sorting-outcome analytics.

Everything in here is pure arithmetic over small tables: the 2x2 sorted
confusion matrix and its class-wise metrics, cumulative arrival series, and
traversal-speed summaries.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Iterable, Sequence

from .boxes import SexLabel
from .errors import ContentError

#: Length of the bridge stretch the camera sees, in millimetres.
DEFAULT_ZONE_MM = 75.0


@dataclass(frozen=True)
class SortConfusion:
    """Counts of sorted individuals: rows are true sex, columns the bin."""

    male_as_male: int = 0
    male_as_female: int = 0
    female_as_male: int = 0
    female_as_female: int = 0

    def __post_init__(self):
        for name in ("male_as_male", "male_as_female", "female_as_male", "female_as_female"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {value!r}")

    @property
    def total(self) -> int:
        return self.male_as_male + self.male_as_female + self.female_as_male + self.female_as_female

    @property
    def trace(self) -> int:
        return self.male_as_male + self.female_as_female

    def as_rows(self) -> tuple[tuple[int, int], tuple[int, int]]:
        """((true male sorted male/female), (true female sorted male/female))."""
        return (
            (self.male_as_male, self.male_as_female),
            (self.female_as_male, self.female_as_female),
        )

    def __add__(self, other: "SortConfusion") -> "SortConfusion":
        return SortConfusion(
            self.male_as_male + other.male_as_male,
            self.male_as_female + other.male_as_female,
            self.female_as_male + other.female_as_male,
            self.female_as_female + other.female_as_female,
        )

    def swapped(self) -> "SortConfusion":
        """The matrix with both label axes swapped."""
        return SortConfusion(
            self.female_as_female, self.female_as_male,
            self.male_as_female, self.male_as_male,
        )


def sorting_accuracy(confusion: SortConfusion) -> float:
    """Fraction of sorted individuals that ended up in the right bin."""
    if confusion.total == 0:
        raise ContentError("confusion matrix is empty, accuracy undefined")
    return confusion.trace / confusion.total


@dataclass(frozen=True)
class LabelMetrics:
    precision: float
    recall: float
    f1: float
    specificity: float
    #: names of metrics whose denominator was zero (reported as 0)
    undefined: tuple[str, ...] = ()


@dataclass(frozen=True)
class ClassMetricsReport:
    male: LabelMetrics
    female: LabelMetrics
    macro_precision: float
    macro_recall: float
    macro_f1: float
    accuracy: float

    def for_label(self, label: SexLabel) -> LabelMetrics:
        return self.male if label is SexLabel.MALE else self.female


def _ratio(num: float, den: float, name: str, undefined: list[str]) -> float:
    if den == 0:
        undefined.append(name)
        return 0.0
    return num / den


def _label_metrics(tp: int, fn: int, fp: int, tn: int) -> LabelMetrics:
    undefined: list[str] = []
    precision = _ratio(tp, tp + fp, "precision", undefined)
    recall = _ratio(tp, tp + fn, "recall", undefined)
    f1 = _ratio(2 * precision * recall, precision + recall, "f1", undefined)
    specificity = _ratio(tn, tn + fp, "specificity", undefined)
    return LabelMetrics(precision, recall, f1, specificity, tuple(undefined))


def class_metrics(confusion: SortConfusion) -> ClassMetricsReport:
    """Per-label precision/recall/F1/specificity plus unweighted macro means.

    Degenerate 0/0 cells report 0 and are flagged in ``undefined`` instead of
    raising, so batch reports never abort.
    """
    if confusion.total == 0:
        raise ContentError("confusion matrix is empty, metrics undefined")
    mm, mf = confusion.male_as_male, confusion.male_as_female
    fm, ff = confusion.female_as_male, confusion.female_as_female
    male = _label_metrics(tp=mm, fn=mf, fp=fm, tn=ff)
    female = _label_metrics(tp=ff, fn=fm, fp=mf, tn=mm)
    return ClassMetricsReport(
        male=male,
        female=female,
        macro_precision=(male.precision + female.precision) / 2.0,
        macro_recall=(male.recall + female.recall) / 2.0,
        macro_f1=(male.f1 + female.f1) / 2.0,
        accuracy=confusion.trace / confusion.total,
    )


@dataclass(frozen=True)
class ArrivalEvent:
    """One individual reaching the far side, in minutes since the run start."""

    time_min: float
    sex: SexLabel

    def __post_init__(self):
        if self.time_min < 0:
            raise ContentError(f"arrival time {self.time_min} is negative")


@dataclass(frozen=True)
class StepSeries:
    """Right-continuous cumulative step function: value jumps at each time."""

    times: tuple[float, ...]
    counts: tuple[int, ...]

    def value_at(self, t: float) -> int:
        i = bisect_right(self.times, t)
        return self.counts[i - 1] if i else 0

    @property
    def final_count(self) -> int:
        return self.counts[-1] if self.counts else 0

    def steps(self) -> tuple[tuple[float, int], ...]:
        return tuple(zip(self.times, self.counts))


def cumulative_arrivals(events: Iterable[ArrivalEvent]) -> dict[SexLabel, StepSeries]:
    """Per-sex cumulative arrival series; empty groups give constant-zero series."""
    by_sex: dict[SexLabel, list[float]] = {SexLabel.FEMALE: [], SexLabel.MALE: []}
    for event in events:
        if event.time_min < 0:
            raise ContentError(f"arrival time {event.time_min} is negative")
        by_sex[event.sex].append(event.time_min)
    series: dict[SexLabel, StepSeries] = {}
    for sex, times in by_sex.items():
        times.sort()
        step_times: list[float] = []
        step_counts: list[int] = []
        for i, t in enumerate(times, start=1):
            if step_times and step_times[-1] == t:
                step_counts[-1] = i
            else:
                step_times.append(t)
                step_counts.append(i)
        series[sex] = StepSeries(tuple(step_times), tuple(step_counts))
    return series


def speed_from_traversal(time_s: float, zone_length_mm: float = DEFAULT_ZONE_MM) -> float:
    """Average speed over the camera zone, in mm/s."""
    if time_s <= 0:
        raise ContentError(f"traversal time must be positive, got {time_s}")
    if zone_length_mm <= 0:
        raise ContentError(f"zone length must be positive, got {zone_length_mm}")
    return zone_length_mm / time_s


@dataclass(frozen=True)
class SpeedRecord:
    """One individual's traversal: true sex, crossing time, and system verdict."""

    cricket_id: str
    sex: SexLabel
    traversal_time_s: float
    classified_as: SexLabel
    speed_mm_s: float

    @property
    def correct(self) -> bool:
        return self.sex is self.classified_as

    @classmethod
    def from_traversal(
        cls,
        cricket_id: str,
        sex: SexLabel,
        time_s: float,
        classified_as: SexLabel,
        zone_length_mm: float = DEFAULT_ZONE_MM,
    ) -> "SpeedRecord":
        return cls(cricket_id, sex, time_s, classified_as, speed_from_traversal(time_s, zone_length_mm))


@dataclass(frozen=True)
class GroupStats:
    """Order statistics of one speed group."""

    count: int
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float


#: Group keys reported by speed_summary, in output order.
SPEED_GROUPS = (
    "female",
    "male",
    "female_correct",
    "female_misclassified",
    "male_correct",
    "male_misclassified",
    "correct",
    "misclassified",
)


@dataclass(frozen=True)
class SpeedSummary:
    """Speed order statistics by sex, by outcome, and by their crossings."""

    groups: dict[str, GroupStats | None]


def _quantile(sorted_values: Sequence[float], p: float) -> float:
    # inclusive linear interpolation; midpoint median for even counts
    n = len(sorted_values)
    if n == 1:
        return sorted_values[0]
    h = (n - 1) * p
    lo = math.floor(h)
    frac = h - lo
    if lo + 1 >= n:
        return sorted_values[-1]
    return sorted_values[lo] + frac * (sorted_values[lo + 1] - sorted_values[lo])


def _group_stats(values: list[float]) -> GroupStats | None:
    if not values:
        return None
    values = sorted(values)
    return GroupStats(
        count=len(values),
        minimum=values[0],
        q1=_quantile(values, 0.25),
        median=_quantile(values, 0.5),
        q3=_quantile(values, 0.75),
        maximum=values[-1],
    )


def speed_summary(records: Iterable[SpeedRecord]) -> SpeedSummary:
    """Order statistics per group; groups with no members come back as None."""
    buckets: dict[str, list[float]] = {key: [] for key in SPEED_GROUPS}
    for rec in records:
        sex = str(rec.sex)
        outcome = "correct" if rec.correct else "misclassified"
        buckets[sex].append(rec.speed_mm_s)
        buckets[f"{sex}_{outcome}"].append(rec.speed_mm_s)
        buckets[outcome].append(rec.speed_mm_s)
    return SpeedSummary({key: _group_stats(vals) for key, vals in buckets.items()})
