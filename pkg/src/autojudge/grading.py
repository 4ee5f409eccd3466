"""Map raw model scores to graded relevance via score quantiles.

Grades are assigned per model from that model's own score distribution:
strictly below the median is 0 (non-relevant), the inclusive band from the
median through the 75th percentile is 1 (related), strictly above the 75th
percentile is 2 (relevant). Because quantiles commute with strictly
increasing transforms, any monotone rescaling of raw scores leaves the
grades unchanged.

The quantile estimator is linear interpolation at index p*(n-1) over the
sorted scores, stated explicitly so independent implementations agree
bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .collection import Qrels
from .errors import DataError, DegenerateInputError, ValidationError
from .scoring import ScoreRecord

SCOPE_GLOBAL = "global"
SCOPE_PER_TOPIC = "per_topic"

MIN_SCORES_PER_GROUP = 4


@dataclass(frozen=True)
class GradeThresholds:
    median: float
    p75: float
    scope: str = SCOPE_GLOBAL

    def __post_init__(self):
        if self.median > self.p75:
            raise ValidationError(f"median {self.median} exceeds p75 {self.p75}")

    def grade(self, score: float) -> int:
        if score < self.median:
            return 0
        if score <= self.p75:
            return 1
        return 2


def _interpolated_quantile(sorted_scores: Sequence[float], p: float) -> float:
    idx = p * (len(sorted_scores) - 1)
    lo = math.floor(idx)
    hi = math.ceil(idx)
    frac = idx - lo
    return sorted_scores[lo] * (1.0 - frac) + sorted_scores[hi] * frac


def quantile_thresholds(
    scores: Sequence[float], scope: str = SCOPE_GLOBAL, group: str = ""
) -> GradeThresholds:
    """Median and 75th-percentile thresholds for one scope group."""
    if len(scores) < MIN_SCORES_PER_GROUP:
        name = group or scope
        raise DegenerateInputError(
            f"scope group {name!r} has {len(scores)} scores; need >= {MIN_SCORES_PER_GROUP}"
        )
    ordered = sorted(scores)
    return GradeThresholds(
        median=_interpolated_quantile(ordered, 0.5),
        p75=_interpolated_quantile(ordered, 0.75),
        scope=scope,
    )


def map_to_grades(
    records: Sequence[ScoreRecord],
    thresholds: GradeThresholds | Mapping[str, GradeThresholds],
) -> Qrels:
    """Apply thresholds to records. For per-topic thresholds pass a mapping
    keyed by qid; a record without a matching group is an error."""
    if not records:
        return Qrels(judgments={}, source="model:unknown")
    model_ids = {r.model_id for r in records}
    if len(model_ids) > 1:
        raise ValidationError(f"records mix model ids: {sorted(model_ids)}")
    judgments: dict[tuple[str, str], int] = {}
    for r in records:
        if isinstance(thresholds, GradeThresholds):
            t = thresholds
        else:
            t = thresholds.get(r.qid)
            if t is None:
                raise DataError(f"no thresholds for scope group {r.qid!r}")
        key = (r.qid, r.docid)
        if key in judgments:
            raise ValidationError(f"duplicate score record for {key}")
        judgments[key] = t.grade(r.raw_score)
    return Qrels(judgments=judgments, source=f"model:{model_ids.pop()}")


def grade_records(records: Sequence[ScoreRecord], scope: str = SCOPE_GLOBAL) -> Qrels:
    """Compute thresholds at the given scope and grade all records."""
    if scope == SCOPE_GLOBAL:
        thresholds = quantile_thresholds([r.raw_score for r in records])
        return map_to_grades(records, thresholds)
    if scope == SCOPE_PER_TOPIC:
        by_qid: dict[str, list[float]] = {}
        for r in records:
            by_qid.setdefault(r.qid, []).append(r.raw_score)
        per_topic = {
            qid: quantile_thresholds(scores, scope=SCOPE_PER_TOPIC, group=qid)
            for qid, scores in by_qid.items()
        }
        return map_to_grades(records, per_topic)
    raise DataError(f"unknown grading scope {scope!r}")
