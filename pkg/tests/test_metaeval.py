import math
import random

import pytest
import scipy.stats
from hypothesis import given
from hypothesis import strategies as st

from autojudge.collection import Qrels, parse_run
from autojudge.errors import DataError, UndefinedStatisticError
from autojudge.metaeval import (
    ConfusionMatrix3,
    average_ranks,
    bias_table_csv,
    cohen_kappa,
    compare,
    confusion_matrix,
    confusion_csv,
    correlation_table_csv,
    cdf_csv,
    kappa_from_counts,
    kendall_tau,
    pearson_rho,
    relative_delta,
    report_to_json,
    score_cdf,
    spearman_rho,
)
from autojudge.metrics import RunEvaluation, evaluate_run
from autojudge.scoring import ScoreRecord


# -- definitional oracles ------------------------------------------------------


def tau_b_oracle(x, y):
    c = d = tx = ty = 0
    n = len(x)
    for i in range(n):
        for j in range(i + 1, n):
            sx = (x[i] > x[j]) - (x[i] < x[j])
            sy = (y[i] > y[j]) - (y[i] < y[j])
            if sx == 0 and sy == 0:
                continue
            if sx == 0:
                tx += 1
            elif sy == 0:
                ty += 1
            elif sx == sy:
                c += 1
            else:
                d += 1
    return (c - d) / math.sqrt((c + d + tx) * (c + d + ty))


def pearson_oracle(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


def ranks_oracle(values):
    ranks = {}
    ordered = sorted(values)
    for v in set(values):
        positions = [i + 1 for i, u in enumerate(ordered) if u == v]
        ranks[v] = sum(positions) / len(positions)
    return [ranks[v] for v in values]


def spearman_oracle(x, y):
    return pearson_oracle(ranks_oracle(x), ranks_oracle(y))


def kappa_oracle(counts):
    total = sum(sum(row) for row in counts)
    po = sum(counts[i][i] for i in range(len(counts))) / total
    pe = sum(
        (sum(counts[i]) / total) * (sum(r[i] for r in counts) / total)
        for i in range(len(counts))
    )
    return (po - pe) / (1 - pe)


def random_vectors(rng, n, tie_prone=False):
    if tie_prone:
        return (
            [rng.randint(0, 4) for _ in range(n)],
            [rng.randint(0, 4) for _ in range(n)],
        )
    return (
        [rng.uniform(0, 1) for _ in range(n)],
        [rng.uniform(0, 1) for _ in range(n)],
    )


# -- correlations ---------------------------------------------------------------


class TestKendallTau:
    def test_identity(self):
        assert kendall_tau([1, 2, 3, 4], [1, 2, 3, 4]) == 1.0

    def test_reversal(self):
        assert kendall_tau([1, 2, 3, 4], [4, 3, 2, 1]) == -1.0

    def test_worked_example(self):
        got = kendall_tau([1, 2, 3, 4], [1, 3, 2, 4])
        assert math.isclose(got, 4 / 6, rel_tol=1e-12)

    def test_constant_input_undefined(self):
        with pytest.raises(UndefinedStatisticError):
            kendall_tau([1, 1, 1], [1, 2, 3])

    def test_matches_scipy_with_ties(self, rng):
        for _ in range(100):
            n = rng.randint(2, 12)
            x, y = random_vectors(rng, n, tie_prone=True)
            if len(set(x)) < 2 or len(set(y)) < 2:
                continue
            expected = scipy.stats.kendalltau(x, y, variant="b").statistic
            assert math.isclose(kendall_tau(x, y), expected, abs_tol=1e-12)


class TestSpearman:
    def test_monotone_transform_gives_one(self):
        x = [3.0, 1.0, 4.0, 1.5, 9.0]
        y = [math.exp(v) for v in x]
        assert spearman_rho(x, y) == 1.0

    def test_reversal(self):
        assert spearman_rho([1, 2, 3], [3, 2, 1]) == -1.0

    def test_worked_example(self):
        assert math.isclose(spearman_rho([1, 2, 3], [1, 3, 2]), 0.5, rel_tol=1e-12)

    def test_average_ranks_with_ties(self):
        assert average_ranks([10, 20, 20, 30]) == [1.0, 2.5, 2.5, 4.0]

    def test_matches_scipy(self, rng):
        for _ in range(100):
            n = rng.randint(2, 12)
            x, y = random_vectors(rng, n, tie_prone=rng.random() < 0.5)
            if len(set(x)) < 2 or len(set(y)) < 2:
                continue
            expected = scipy.stats.spearmanr(x, y).statistic
            assert math.isclose(spearman_rho(x, y), expected, abs_tol=1e-12)


class TestPearson:
    def test_affine_invariance(self):
        x = [1.0, 2.0, 5.0, 7.0]
        y = [2 * v + 3 for v in x]
        assert pearson_rho(x, y) == 1.0

    def test_negation(self):
        x = [1.0, 2.0, 5.0]
        assert pearson_rho(x, [-v for v in x]) == -1.0

    def test_worked_example(self):
        got = pearson_rho([1, 2, 3], [2, 2, 5])
        assert math.isclose(got, math.sqrt(3) / 2, rel_tol=1e-12)

    def test_constant_undefined(self):
        with pytest.raises(UndefinedStatisticError):
            pearson_rho([2, 2, 2], [1, 2, 3])

    def test_matches_scipy(self, rng):
        for _ in range(100):
            n = rng.randint(2, 12)
            x, y = random_vectors(rng, n)
            expected = scipy.stats.pearsonr(x, y).statistic
            assert math.isclose(pearson_rho(x, y), expected, abs_tol=1e-10)

    @given(
        st.lists(st.floats(min_value=-100, max_value=100), min_size=2, max_size=12),
    )
    def test_rank_statistics_depend_only_on_ranks(self, x):
        y = [v + 2.0 for v in x]
        transformed = [math.atan(v / 50.0) * 10 for v in x]
        if len(set(x)) < 2 or len(set(y)) < 2 or len(set(transformed)) != len(set(x)):
            return
        assert math.isclose(
            spearman_rho(x, y), spearman_rho(transformed, y), abs_tol=1e-9
        )
        assert math.isclose(
            kendall_tau(x, y), kendall_tau(transformed, y), abs_tol=1e-12
        )


# -- kappa and confusion --------------------------------------------------------


class TestCohenKappa:
    def test_identical_qrels(self):
        q = Qrels({("q1", "d1"): 0, ("q1", "d2"): 1, ("q2", "d3"): 2})
        assert cohen_kappa(q, q) == 1.0

    def test_two_class_diagonal(self):
        counts = [[10, 0, 0], [0, 10, 0], [0, 0, 0]]
        assert kappa_from_counts(counts) == 1.0

    def test_worked_example(self):
        counts = [[20, 5, 0], [10, 15, 0], [0, 0, 0]]
        assert math.isclose(kappa_from_counts(counts), 0.4, rel_tol=1e-12)
        assert math.isclose(kappa_from_counts(counts), kappa_oracle(counts), rel_tol=1e-12)

    def test_empty_intersection_is_error(self):
        a = Qrels({("q1", "d1"): 1})
        b = Qrels({("q2", "d2"): 1})
        with pytest.raises(DataError):
            cohen_kappa(a, b)

    def test_chance_agreement_one_identical(self):
        counts = [[7, 0, 0], [0, 0, 0], [0, 0, 0]]
        assert kappa_from_counts(counts) == 1.0

    def test_constant_but_different_labelings(self):
        # Chance agreement is 0 here (marginals concentrate on different
        # labels), so kappa is defined and equals the observed agreement: 0.
        counts = [[0, 7, 0], [0, 0, 0], [0, 0, 0]]
        assert kappa_from_counts(counts) == 0.0

    def test_matches_sklearn_oracle(self, rng):
        from sklearn.metrics import cohen_kappa_score

        for _ in range(50):
            n = rng.randint(5, 40)
            ref_labels = [rng.randint(0, 2) for _ in range(n)]
            mod_labels = [rng.randint(0, 2) for _ in range(n)]
            ref = Qrels({("q", f"d{i}"): g for i, g in enumerate(ref_labels)})
            mod = Qrels({("q", f"d{i}"): g for i, g in enumerate(mod_labels)})
            expected = cohen_kappa_score(ref_labels, mod_labels)
            try:
                got = cohen_kappa(ref, mod)
            except UndefinedStatisticError:
                assert math.isnan(expected) or expected == 0.0
                continue
            assert math.isclose(got, expected, abs_tol=1e-12)

    def test_weighted_variants(self, rng):
        from sklearn.metrics import cohen_kappa_score

        ref_labels = [rng.randint(0, 2) for _ in range(60)]
        mod_labels = [rng.randint(0, 2) for _ in range(60)]
        ref = Qrels({("q", f"d{i}"): g for i, g in enumerate(ref_labels)})
        mod = Qrels({("q", f"d{i}"): g for i, g in enumerate(mod_labels)})
        for weighting in ("linear", "quadratic"):
            expected = cohen_kappa_score(ref_labels, mod_labels, weights=weighting)
            got = cohen_kappa(ref, mod, weighted=weighting)
            assert math.isclose(got, expected, abs_tol=1e-12)

    def test_missing_as_zero_flag(self):
        ref = Qrels({("q", "d1"): 2, ("q", "d2"): 0})
        mod = Qrels({("q", "d1"): 2})
        cm = confusion_matrix(ref, mod, missing_as_zero=True)
        assert cm.total == 2
        assert cm.counts[0][0] == 1
        assert cm.counts[2][2] == 1


class TestConfusionMatrix:
    def test_identical_all_grade_two(self):
        q = Qrels({(f"q{i}", "d"): 2 for i in range(7)})
        cm = confusion_matrix(q, q)
        assert cm.counts[2][2] == 7
        assert cm.total == 7
        assert cm.is_diagonal()

    def test_disjoint_is_error(self):
        with pytest.raises(DataError):
            confusion_matrix(Qrels({("a", "d"): 1}), Qrels({("b", "d"): 1}))

    def test_hand_counted_fixture(self):
        ref = Qrels({("q", "d1"): 0, ("q", "d2"): 1, ("q", "d3"): 2, ("q", "d4"): 2})
        mod = Qrels({("q", "d1"): 1, ("q", "d2"): 1, ("q", "d3"): 0, ("q", "d4"): 2})
        cm = confusion_matrix(ref, mod)
        assert cm.counts == ((0, 1, 0), (0, 1, 0), (1, 0, 1))

    def test_negative_counts_rejected(self):
        with pytest.raises(ValueError):
            ConfusionMatrix3(counts=((0, 0, 0), (0, -1, 0), (0, 0, 0)))


# -- relative delta ---------------------------------------------------------------


def evals_with_means(pairs):
    return [
        RunEvaluation(run_tag=tag, per_topic=[], mean={"ndcg@10": v, "map": v})
        for tag, v in pairs
    ]


CLASSES = {"c1": "clip_based", "c2": "clip_based", "o1": "other", "o2": "other"}


class TestRelativeDelta:
    def test_equal_means_zero(self):
        evals = evals_with_means([("c1", 0.5), ("o1", 0.5)])
        assert relative_delta(evals, CLASSES, "ndcg@10") == 0.0

    def test_hand_set_means(self):
        evals = evals_with_means([("c1", 0.6), ("o1", 0.3)])
        got = relative_delta(evals, CLASSES, "ndcg@10")
        assert math.isclose(got, 200 / 3, rel_tol=1e-9)

    def test_antisymmetry(self):
        evals = evals_with_means([("c1", 0.3), ("o1", 0.6)])
        got = relative_delta(evals, CLASSES, "ndcg@10")
        assert math.isclose(got, -200 / 3, rel_tol=1e-9)

    def test_class_averaging(self):
        evals = evals_with_means([("c1", 0.4), ("c2", 0.8), ("o1", 0.1), ("o2", 0.5)])
        got = relative_delta(evals, CLASSES, "map")
        assert math.isclose(got, 2 * (0.6 - 0.3) / 0.9 * 100, rel_tol=1e-12)

    def test_missing_class_is_error(self):
        evals = evals_with_means([("c1", 0.5)])
        with pytest.raises(DataError, match="each system class"):
            relative_delta(evals, CLASSES, "ndcg@10")

    def test_unclassified_run_is_error(self):
        evals = evals_with_means([("c1", 0.5), ("mystery", 0.5)])
        with pytest.raises(DataError, match="mystery"):
            relative_delta(evals, CLASSES, "ndcg@10")

    def test_zero_means_undefined(self):
        evals = evals_with_means([("c1", 0.0), ("o1", 0.0)])
        with pytest.raises(UndefinedStatisticError):
            relative_delta(evals, CLASSES, "ndcg@10")


# -- score CDF --------------------------------------------------------------------


def records(scores):
    return [ScoreRecord("q", f"d{i}", "m", float(s)) for i, s in enumerate(scores)]


class TestScoreCdf:
    def test_single_score(self):
        assert score_cdf(records([5])) == [(5.0, 1.0)]

    def test_counting_example(self):
        assert score_cdf(records([1, 2, 2, 4])) == [(1.0, 0.25), (2.0, 0.75), (4.0, 1.0)]

    def test_empty_is_error(self):
        with pytest.raises(DataError):
            score_cdf([])

    @given(st.lists(st.integers(min_value=0, max_value=50), min_size=1, max_size=200))
    def test_valid_cdf(self, scores):
        points = score_cdf(records(scores))
        fractions = [f for _, f in points]
        assert fractions == sorted(fractions)
        assert fractions[-1] == 1.0
        xs = [s for s, _ in points]
        assert xs == sorted(set(xs))


# -- compare -----------------------------------------------------------------------


def _mini_runs():
    texts = {
        "alpha": "q1 Q0 d1 1 3.0 alpha\nq1 Q0 d2 2 2.0 alpha\nq2 Q0 d3 1 1.0 alpha\n",
        "beta": "q1 Q0 d2 1 3.0 beta\nq1 Q0 d1 2 2.0 beta\nq2 Q0 d4 1 1.0 beta\n",
        "gamma": "q1 Q0 d3 1 3.0 gamma\nq1 Q0 d1 2 2.0 gamma\nq2 Q0 d3 1 1.0 gamma\n",
    }
    return [parse_run(t) for t in texts.values()]


REF = Qrels(
    {
        ("q1", "d1"): 2,
        ("q1", "d2"): 1,
        ("q1", "d3"): 0,
        ("q2", "d3"): 2,
        ("q2", "d4"): 0,
    }
)


class TestCompare:
    def test_self_comparison_identity(self):
        runs = _mini_runs()
        report = compare(runs, REF, REF)
        for metric in report.metric_names():
            assert report.correlations[metric]["tau"] == 1.0
            assert report.correlations[metric]["spearman"] == 1.0
            assert report.correlations[metric]["pearson"] == 1.0
        assert report.kappa == 1.0
        assert report.confusion.is_diagonal()

    def test_inverted_ranking_gives_minus_one(self):
        runs = _mini_runs()
        ref_evals = {r.tag: evaluate_run(r, REF).mean["ndcg@10"] for r in runs}
        # Build model qrels producing the reverse ranking: flip all grades.
        flipped = Qrels({k: 2 - g for k, g in REF.judgments.items()}, source="model:flip")
        model_means = {r.tag: evaluate_run(r, flipped).mean["ndcg@10"] for r in runs}
        x = [ref_evals[t] for t in sorted(ref_evals)]
        y = [model_means[t] for t in sorted(model_means)]
        if len(set(x)) >= 2 and len(set(y)) >= 2 and tau_b_oracle(x, y) == -1.0:
            report = compare(runs, REF, flipped)
            assert report.correlations["ndcg@10"]["tau"] == -1.0

    def test_report_structure_and_serialization(self):
        runs = _mini_runs()
        model = Qrels(
            {k: min(2, g + 1) for k, g in REF.judgments.items()}, source="model:m1"
        )
        classes = {"alpha": "clip_based", "beta": "other", "gamma": "other"}
        recs = records([3, 1, 4, 1, 5])
        report = compare(runs, REF, model, classes=classes, records=recs)
        assert report.model_id == "m1"
        assert report.relative_delta is not None
        assert report.relative_delta_reference is not None
        assert report.cdf is not None

        json_text = report_to_json(report)
        assert '"kappa"' in json_text
        table = correlation_table_csv(report)
        assert table.startswith("model,")
        bias = bias_table_csv(report)
        assert "human" in bias
        assert confusion_csv(report.confusion).count("\n") == 4
        assert cdf_csv(report.cdf).startswith("score,")

    def test_constant_rankings_reported_as_undefined(self):
        runs = _mini_runs()
        empty_model = Qrels({k: 0 for k in REF.judgments}, source="model:null")
        report = compare(runs, REF, empty_model)
        for metric in report.metric_names():
            assert report.correlations[metric]["tau"] is None
        text = correlation_table_csv(report)
        assert "undefined" in text

    def test_deliberate_oracle_cross_check(self, rng):
        # Random mean vectors: the report correlations must match the
        # definitional oracles applied to the same per-run means.
        runs = _mini_runs()
        model = Qrels(
            {k: rng.choice([0, 1, 2]) for k in REF.judgments}, source="model:m2"
        )
        report = compare(runs, REF, model)
        x = [evaluate_run(r, REF).mean["map"] for r in sorted(runs, key=lambda r: r.tag)]
        y = [evaluate_run(r, model).mean["map"] for r in sorted(runs, key=lambda r: r.tag)]
        got = report.correlations["map"]["tau"]
        if len(set(x)) < 2 or len(set(y)) < 2:
            assert got is None
        else:
            assert math.isclose(got, tau_b_oracle(x, y), abs_tol=1e-12)
