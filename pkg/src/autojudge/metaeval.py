"""Compare model-based qrels against reference qrels.

System-ranking agreement is measured with tie-corrected Kendall's tau-b,
Spearman (Pearson over average ranks), and Pearson correlations over the
per-run mean metric values. Label agreement uses unweighted Cohen's kappa
over the 3x3 confusion matrix of co-judged pairs (optionally weighted, or
with missing model judgments counted as grade 0). Evaluation bias is the
normalized percent difference between mean effectiveness of clip_based and
other systems: 2 * (M_clip - M_other) / (M_clip + M_other) * 100.

Undefined statistics (constant rankings, degenerate chance agreement) raise
UndefinedStatisticError and are reported as explicit nulls, never as 0.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .collection import Qrels, Run
from .errors import DataError, UndefinedStatisticError
from .metrics import RunEvaluation, evaluate_run
from .scoring import ScoreRecord

GRADE_LABELS = ("Non-relevant", "Related", "Relevant")


# -- rank and value correlations -------------------------------------------


def _check_vectors(x: Sequence[float], y: Sequence[float]) -> None:
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise ValueError("need at least 2 observations")
    if len(set(x)) < 2 or len(set(y)) < 2:
        raise UndefinedStatisticError("correlation undefined for constant input")


def kendall_tau(x: Sequence[float], y: Sequence[float]) -> float:
    """Tie-corrected tau-b: (C - D) / sqrt((C + D + Tx)(C + D + Ty)), where
    Tx/Ty count pairs tied only in x / only in y."""
    _check_vectors(x, y)
    concordant = discordant = ties_x = ties_y = 0
    n = len(x)
    for i in range(n):
        for j in range(i + 1, n):
            dx = x[i] - x[j]
            dy = y[i] - y[j]
            if dx == 0 and dy == 0:
                continue
            if dx == 0:
                ties_x += 1
            elif dy == 0:
                ties_y += 1
            elif (dx > 0) == (dy > 0):
                concordant += 1
            else:
                discordant += 1
    denom = math.sqrt(
        (concordant + discordant + ties_x) * (concordant + discordant + ties_y)
    )
    return (concordant - discordant) / denom


def average_ranks(values: Sequence[float]) -> list[float]:
    """Fractional ranks starting at 1; ties share the average of their positions."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def pearson_rho(x: Sequence[float], y: Sequence[float]) -> float:
    """Plain product-moment correlation; exact 1.0 on identical inputs."""
    _check_vectors(x, y)
    n = len(x)
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    dx = [v - mx for v in x]
    dy = [v - my for v in y]
    sxx = math.fsum(a * a for a in dx)
    syy = math.fsum(b * b for b in dy)
    sxy = math.fsum(a * b for a, b in zip(dx, dy))
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedStatisticError("correlation undefined for constant input")
    r = sxy / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def spearman_rho(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation of fractional ranks."""
    _check_vectors(x, y)
    return pearson_rho(average_ranks(x), average_ranks(y))


# -- label agreement ---------------------------------------------------------


@dataclass(frozen=True)
class ConfusionMatrix3:
    """3x3 counts over co-judged pairs; rows = reference grade, cols = model grade."""

    counts: tuple[tuple[int, int, int], ...]

    def __post_init__(self):
        if len(self.counts) != 3 or any(len(row) != 3 for row in self.counts):
            raise ValueError("confusion matrix must be 3x3")
        if any(c < 0 for row in self.counts for c in row):
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return sum(c for row in self.counts for c in row)

    def is_diagonal(self) -> bool:
        return all(
            self.counts[i][j] == 0 for i in range(3) for j in range(3) if i != j
        )


def confusion_matrix(ref: Qrels, model: Qrels, missing_as_zero: bool = False) -> ConfusionMatrix3:
    """Count grade co-occurrences over pairs judged in both qrels.

    With ``missing_as_zero``, every reference pair is counted and pairs the
    model did not judge take model grade 0.
    """
    if missing_as_zero:
        items = [(g, model.judgments.get(key, 0)) for key, g in ref.judgments.items()]
    else:
        items = [
            (g, model.judgments[key])
            for key, g in ref.judgments.items()
            if key in model.judgments
        ]
    if not items:
        raise DataError("no co-judged (qid, docid) pairs between the two qrels")
    counts = [[0, 0, 0], [0, 0, 0], [0, 0, 0]]
    for ref_grade, model_grade in items:
        counts[ref_grade][model_grade] += 1
    return ConfusionMatrix3(counts=tuple(tuple(row) for row in counts))


def kappa_from_counts(counts: Sequence[Sequence[int]], weighted: str | None = None) -> float:
    """Cohen's kappa from a square confusion matrix.

    ``weighted`` may be "linear" or "quadratic" for the weighted variant.
    """
    n = len(counts)
    total = sum(c for row in counts for c in row)
    if total == 0:
        raise DataError("empty confusion matrix")
    row_marg = [sum(counts[i][j] for j in range(n)) for i in range(n)]
    col_marg = [sum(counts[i][j] for i in range(n)) for j in range(n)]

    if weighted is None:
        observed = sum(counts[i][i] for i in range(n)) / total
        expected = sum(row_marg[i] * col_marg[i] for i in range(n)) / (total * total)
        if expected == 1.0:
            if observed == 1.0:
                return 1.0
            raise UndefinedStatisticError("kappa undefined: chance agreement is 1")
        return (observed - expected) / (1.0 - expected)

    if weighted == "linear":
        weight = lambda i, j: abs(i - j)
    elif weighted == "quadratic":
        weight = lambda i, j: (i - j) ** 2
    else:
        raise ValueError(f"unknown kappa weighting {weighted!r}")
    observed_w = sum(
        weight(i, j) * counts[i][j] for i in range(n) for j in range(n)
    ) / total
    expected_w = sum(
        weight(i, j) * row_marg[i] * col_marg[j] for i in range(n) for j in range(n)
    ) / (total * total)
    if expected_w == 0.0:
        if observed_w == 0.0:
            return 1.0
        raise UndefinedStatisticError("weighted kappa undefined: no expected disagreement")
    return 1.0 - observed_w / expected_w


def cohen_kappa(
    ref: Qrels, model: Qrels, missing_as_zero: bool = False, weighted: str | None = None
) -> float:
    """Chance-corrected agreement between two gradings of the same pairs."""
    cm = confusion_matrix(ref, model, missing_as_zero=missing_as_zero)
    return kappa_from_counts(cm.counts, weighted=weighted)


# -- evaluation bias ---------------------------------------------------------


def relative_delta(
    evaluations: Sequence[RunEvaluation],
    classes: Mapping[str, str],
    metric: str,
) -> float:
    """Percent bias toward clip_based systems for one metric; positive favors
    clip_based."""
    clip_means: list[float] = []
    other_means: list[float] = []
    for ev in evaluations:
        cls = classes.get(ev.run_tag)
        if cls is None:
            raise DataError(f"run {ev.run_tag!r} has no system class")
        if metric not in ev.mean:
            raise DataError(f"run {ev.run_tag!r} has no metric {metric!r}")
        (clip_means if cls == "clip_based" else other_means).append(ev.mean[metric])
    if not clip_means or not other_means:
        raise DataError("need at least one run in each system class")
    m_clip = sum(clip_means) / len(clip_means)
    m_other = sum(other_means) / len(other_means)
    if m_clip + m_other == 0.0:
        raise UndefinedStatisticError("relative delta undefined: both class means are 0")
    return 2.0 * (m_clip - m_other) / (m_clip + m_other) * 100.0


# -- score distribution ------------------------------------------------------


def score_cdf(records: Sequence[ScoreRecord]) -> list[tuple[float, float]]:
    """Empirical CDF points (score, fraction <= score); final fraction is 1."""
    if not records:
        raise DataError("cannot build a CDF from zero records")
    scores = sorted(r.raw_score for r in records)
    n = len(scores)
    points: list[tuple[float, float]] = []
    for i, s in enumerate(scores, start=1):
        if i == n or scores[i] != s:
            points.append((s, i / n))
    return points


# -- full comparison ---------------------------------------------------------


@dataclass
class MetaReport:
    """Per-model comparison bundle against the reference qrels."""

    model_id: str
    k: int
    correlations: dict[str, dict[str, float | None]]
    kappa: float | None
    confusion: ConfusionMatrix3
    relative_delta: dict[str, float | None] | None
    relative_delta_reference: dict[str, float | None] | None
    cdf: list[tuple[float, float]] | None
    rankings: dict[str, dict[str, dict[str, float]]]

    def metric_names(self) -> list[str]:
        return [f"ndcg@{self.k}", "map"]


def _guard(fn, *args):
    try:
        return fn(*args)
    except UndefinedStatisticError:
        return None


def compare(
    runs: Sequence[Run],
    ref_qrels: Qrels,
    model_qrels: Qrels,
    classes: Mapping[str, str] | None = None,
    k: int = 10,
    binarize_at: int = 1,
    records: Sequence[ScoreRecord] | None = None,
    missing_as_zero: bool = False,
) -> MetaReport:
    """Evaluate all runs under both qrels and assemble the full meta-report."""
    runs = sorted(runs, key=lambda r: r.tag)
    ref_evals = [evaluate_run(r, ref_qrels, k=k, binarize_at=binarize_at) for r in runs]
    model_evals = [evaluate_run(r, model_qrels, k=k, binarize_at=binarize_at) for r in runs]

    metric_names = [f"ndcg@{k}", "map"]
    correlations: dict[str, dict[str, float | None]] = {}
    for metric in metric_names:
        x = [ev.mean[metric] for ev in ref_evals]
        y = [ev.mean[metric] for ev in model_evals]
        correlations[metric] = {
            "tau": _guard(kendall_tau, x, y),
            "spearman": _guard(spearman_rho, x, y),
            "pearson": _guard(pearson_rho, x, y),
        }

    confusion = confusion_matrix(ref_qrels, model_qrels, missing_as_zero=missing_as_zero)
    kappa = _guard(
        lambda: kappa_from_counts(confusion.counts)
    )

    delta_model = delta_ref = None
    if classes is not None:
        delta_model = {
            m: _guard(relative_delta, model_evals, classes, m) for m in metric_names
        }
        delta_ref = {
            m: _guard(relative_delta, ref_evals, classes, m) for m in metric_names
        }

    rankings = {
        "reference": {
            m: {ev.run_tag: ev.mean[m] for ev in ref_evals} for m in metric_names
        },
        "model": {
            m: {ev.run_tag: ev.mean[m] for ev in model_evals} for m in metric_names
        },
    }

    model_id = model_qrels.source.removeprefix("model:")
    return MetaReport(
        model_id=model_id,
        k=k,
        correlations=correlations,
        kappa=kappa,
        confusion=confusion,
        relative_delta=delta_model,
        relative_delta_reference=delta_ref,
        cdf=score_cdf(records) if records else None,
        rankings=rankings,
    )


# -- serialization -----------------------------------------------------------


def report_to_json(report: MetaReport) -> str:
    obj = {
        "model_id": report.model_id,
        "k": report.k,
        "correlations": report.correlations,
        "kappa": report.kappa,
        "confusion": [list(row) for row in report.confusion.counts],
        "relative_delta": report.relative_delta,
        "relative_delta_reference": report.relative_delta_reference,
        "cdf": [[s, f] for s, f in report.cdf] if report.cdf is not None else None,
        "rankings": report.rankings,
    }
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _fmt(value: float | None) -> str:
    return "undefined" if value is None else f"{value:.6f}"


def correlation_table_csv(report: MetaReport) -> str:
    """One row per model: tau/spearman/pearson per metric, then kappa."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["model"]
    for metric in report.metric_names():
        header += [f"tau_{metric}", f"spearman_{metric}", f"pearson_{metric}"]
    header.append("kappa")
    writer.writerow(header)
    row = [report.model_id]
    for metric in report.metric_names():
        corr = report.correlations[metric]
        row += [_fmt(corr["tau"]), _fmt(corr["spearman"]), _fmt(corr["pearson"])]
    row.append(_fmt(report.kappa))
    writer.writerow(row)
    return buf.getvalue()


def bias_table_csv(report: MetaReport) -> str:
    """Relative delta per metric for the model qrels and the reference qrels."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["model"] + [f"delta_{m}" for m in report.metric_names()])
    rows = [(report.model_id, report.relative_delta), ("human", report.relative_delta_reference)]
    for label, deltas in rows:
        if deltas is None:
            continue
        writer.writerow([label] + [_fmt(deltas[m]) for m in report.metric_names()])
    return buf.getvalue()


def cdf_csv(cdf: Sequence[tuple[float, float]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["score", "cumulative_fraction"])
    for score, fraction in cdf:
        writer.writerow([repr(score), repr(fraction)])
    return buf.getvalue()


def confusion_csv(cm: ConfusionMatrix3) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["reference_grade", "model_0", "model_1", "model_2"])
    for grade, row in enumerate(cm.counts):
        writer.writerow([grade, *row])
    return buf.getvalue()
