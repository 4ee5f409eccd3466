"""Run evaluation: NDCG@k and (mean) average precision against graded qrels.

NDCG uses the trec_eval-style graded gain 2^g - 1 with a log2(rank+1)
discount; the ideal ordering covers all judged documents for the topic, and
unjudged documents count as grade 0. AP binarizes at a configurable grade
(default: grade >= 1 is relevant). Topics with no relevant documents are
excluded from the MAP mean; topics with an all-zero ideal gain contribute
NDCG 0.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from typing import Sequence

from .collection import Qrels, Run

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TopicScore:
    qid: str
    metric_name: str
    value: float


@dataclass
class RunEvaluation:
    run_tag: str
    per_topic: list[TopicScore]
    mean: dict[str, float]


def _dcg(gains: Sequence[int]) -> float:
    return sum((2.0**g - 1.0) / math.log2(i + 1.0) for i, g in enumerate(gains, start=1))


def ndcg_at_k(ranked_docids: Sequence[str], qrels: Qrels, qid: str, k: int) -> float:
    """Normalized DCG at cutoff k; 0.0 when the topic has no positive gain.

    ``ranked_docids`` must already be deduplicated.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    judged = qrels.topic_judgments(qid)
    gains = [judged.get(d, 0) for d in ranked_docids[:k]]
    ideal = sorted(judged.values(), reverse=True)[:k]
    idcg = _dcg(ideal)
    if idcg == 0.0:
        return 0.0
    return _dcg(gains) / idcg


def average_precision(
    ranked_docids: Sequence[str], qrels: Qrels, qid: str, binarize_at: int = 1
) -> float:
    """AP with relevance defined as grade >= binarize_at; 0.0 when the topic
    has no relevant documents."""
    if binarize_at not in (1, 2):
        raise ValueError(f"binarize_at must be 1 or 2, got {binarize_at}")
    judged = qrels.topic_judgments(qid)
    relevant = {d for d, g in judged.items() if g >= binarize_at}
    if not relevant:
        return 0.0
    hits = 0
    precision_sum = 0.0
    for i, docid in enumerate(ranked_docids, start=1):
        if docid in relevant:
            hits += 1
            precision_sum += hits / i
    return precision_sum / len(relevant)


def relevant_count(qrels: Qrels, qid: str, binarize_at: int = 1) -> int:
    return sum(1 for g in qrels.topic_judgments(qid).values() if g >= binarize_at)


def evaluate_run(run: Run, qrels: Qrels, k: int = 10, binarize_at: int = 1) -> RunEvaluation:
    """Evaluate one run over every topic in the qrels.

    Rankings use the canonical order (score descending, docid ascending on
    ties); run entries for topics absent from the qrels are ignored with a
    warning.
    """
    qrels_topics = qrels.topics()
    extra = sorted(set(run.qids()) - set(qrels_topics))
    if extra:
        logger.warning(
            "run %s: ignoring %d topics absent from qrels (e.g. %s)",
            run.tag, len(extra), extra[:3],
        )

    ndcg_name = f"ndcg@{k}"
    per_topic: list[TopicScore] = []
    ndcg_values: list[float] = []
    ap_values: list[float] = []
    for qid in qrels_topics:
        ranking = run.ranking(qid)
        ndcg = ndcg_at_k(ranking, qrels, qid, k)
        per_topic.append(TopicScore(qid=qid, metric_name=ndcg_name, value=ndcg))
        ndcg_values.append(ndcg)
        if relevant_count(qrels, qid, binarize_at) > 0:
            ap = average_precision(ranking, qrels, qid, binarize_at)
            per_topic.append(TopicScore(qid=qid, metric_name="map", value=ap))
            ap_values.append(ap)

    def mean(values: list[float]) -> float:
        return sum(values) / len(values) if values else 0.0

    return RunEvaluation(
        run_tag=run.tag,
        per_topic=per_topic,
        mean={ndcg_name: mean(ndcg_values), "map": mean(ap_values)},
    )


def evaluations_to_csv(evaluations: Sequence[RunEvaluation]) -> str:
    """CSV report: run_tag, qid (or "all"), metric, value."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["run_tag", "qid", "metric", "value"])
    for ev in sorted(evaluations, key=lambda e: e.run_tag):
        for ts in sorted(ev.per_topic, key=lambda t: (t.qid, t.metric_name)):
            writer.writerow([ev.run_tag, ts.qid, ts.metric_name, f"{ts.value:.6f}"])
        for name in sorted(ev.mean):
            writer.writerow([ev.run_tag, "all", name, f"{ev.mean[name]:.6f}"])
    return buf.getvalue()
