import math
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from autojudge.errors import DataError, DegenerateInputError, ValidationError
from autojudge.grading import (
    SCOPE_PER_TOPIC,
    GradeThresholds,
    grade_records,
    map_to_grades,
    quantile_thresholds,
)
from autojudge.scoring import ScoreRecord


def records_from(scores, model_id="m", qid="q1"):
    return [
        ScoreRecord(qid=qid, docid=f"d{i:04d}", model_id=model_id, raw_score=float(s))
        for i, s in enumerate(scores)
    ]


def reference_quantile(values, p):
    """Independent oracle: numpy's linear interpolation at p*(n-1)."""
    return float(np.quantile(np.asarray(values, dtype=float), p, method="linear"))


class TestQuantileThresholds:
    def test_eight_values(self):
        t = quantile_thresholds([10, 20, 30, 40, 50, 60, 70, 80])
        assert t.median == 45.0
        assert t.p75 == 62.5

    def test_matches_numpy_oracle(self, rng):
        for _ in range(50):
            scores = [rng.uniform(0, 100) for _ in range(rng.randint(4, 40))]
            t = quantile_thresholds(scores)
            assert math.isclose(t.median, reference_quantile(scores, 0.5), abs_tol=1e-12)
            assert math.isclose(t.p75, reference_quantile(scores, 0.75), abs_tol=1e-12)

    def test_constant_scores(self):
        t = quantile_thresholds([5, 5, 5, 5])
        assert (t.median, t.p75) == (5, 5)

    def test_too_few_scores(self):
        with pytest.raises(DegenerateInputError, match="3 scores"):
            quantile_thresholds([1, 2, 3])

    def test_error_names_group(self):
        with pytest.raises(DegenerateInputError, match="t42"):
            quantile_thresholds([1.0], scope=SCOPE_PER_TOPIC, group="t42")


class TestMapToGrades:
    def test_eight_value_example(self):
        scores = [10, 20, 30, 40, 50, 60, 70, 80]
        recs = records_from(scores)
        qrels = map_to_grades(recs, quantile_thresholds(scores))
        grades = [qrels.judgments[(r.qid, r.docid)] for r in recs]
        assert grades == [0, 0, 0, 0, 1, 1, 2, 2]

    def test_constant_scores_all_grade_one(self):
        recs = records_from([7, 7, 7, 7, 7])
        qrels = map_to_grades(recs, quantile_thresholds([7, 7, 7, 7, 7]))
        assert set(qrels.judgments.values()) == {1}

    def test_score_exactly_at_p75_gets_grade_one(self):
        t = GradeThresholds(median=10.0, p75=20.0)
        assert t.grade(20.0) == 1
        assert t.grade(20.0000001) == 2
        assert t.grade(10.0) == 1
        assert t.grade(9.9999999) == 0

    def test_source_carries_model_id(self):
        recs = records_from([1, 2, 3, 4], model_id="llm-x")
        qrels = grade_records(recs)
        assert qrels.source == "model:llm-x"

    def test_mixed_model_ids_rejected(self):
        recs = records_from([1, 2], model_id="a") + records_from([3, 4], model_id="b")
        with pytest.raises(ValidationError, match="mix"):
            map_to_grades(recs, GradeThresholds(median=2, p75=3))

    def test_per_topic_thresholds_missing_group(self):
        recs = records_from([1, 2, 3, 4], qid="q9")
        with pytest.raises(DataError, match="q9"):
            map_to_grades(recs, {"q1": GradeThresholds(median=2, p75=3)})


class TestGradeRecords:
    def test_global_distribution_on_tie_free_scores(self, rng):
        scores = rng.sample(range(1_000_000), 1000)
        qrels = grade_records(records_from(scores))
        counts = {g: 0 for g in (0, 1, 2)}
        for g in qrels.judgments.values():
            counts[g] += 1
        assert abs(counts[0] - 500) <= 1
        assert abs(counts[1] - 250) <= 1
        assert abs(counts[2] - 250) <= 1

    def test_per_topic_scope(self, rng):
        recs = []
        for qid, base in (("q1", 0.0), ("q2", 1000.0)):
            for i in range(8):
                recs.append(
                    ScoreRecord(qid=qid, docid=f"d{i}", model_id="m", raw_score=base + i)
                )
        qrels = grade_records(recs, scope=SCOPE_PER_TOPIC)
        for qid in ("q1", "q2"):
            grades = [qrels.judgments[(qid, f"d{i}")] for i in range(8)]
            assert grades == [0, 0, 0, 0, 1, 1, 2, 2]

    def test_per_topic_scope_small_group_names_topic(self):
        recs = records_from([1, 2, 3, 4], qid="q1") + records_from([5], qid="q2")
        with pytest.raises(DegenerateInputError, match="q2"):
            grade_records(recs, scope=SCOPE_PER_TOPIC)

    @given(st.lists(st.integers(min_value=0, max_value=10**6), min_size=4, max_size=60, unique=True))
    def test_monotonicity(self, scores):
        recs = records_from(scores)
        qrels = grade_records(recs)
        graded = sorted(
            (r.raw_score, qrels.judgments[(r.qid, r.docid)]) for r in recs
        )
        grades_in_score_order = [g for _, g in graded]
        assert grades_in_score_order == sorted(grades_in_score_order)

    def test_monotone_transform_invariance(self, rng):
        scores = [rng.uniform(1, 100) for _ in range(200)]
        baseline = grade_records(records_from(scores))

        transforms = []
        for _ in range(50):
            a = rng.uniform(0.1, 5.0)
            b = rng.uniform(-10, 10)
            c = rng.uniform(0.0, 2.0)
            transforms.append(lambda x, a=a, b=b, c=c: a * x + b + c * x**3)

        for f in transforms:
            qrels = grade_records(records_from([f(s) for s in scores]))
            assert qrels.judgments == baseline.judgments

    def test_clip_scale_constant_has_no_effect(self, rng):
        scores = [rng.uniform(0, 1) for _ in range(100)]
        a = grade_records(records_from([2.5 * s for s in scores]))
        b = grade_records(records_from([1.0 * s for s in scores]))
        assert a.judgments == b.judgments
