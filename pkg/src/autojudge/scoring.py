"""Turn backend responses into numeric relevance scores.

Two routes: embedding backends score a pair as the scaled, zero-clamped
cosine between the truncated context text embedding and the image embedding;
generative backends get the full instruction prompt and their reply is parsed
for ``Relevance: <integer>``. Pairs whose reply cannot be parsed are recorded
as failures, excluded from downstream quantile grading, and default to
grade 0 there.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass

import numpy as np

from .backends import BackendClient, BackendConfig, JudgmentCache, map_bounded
from .collection import ImageDoc, Pool, Topic
from .errors import BackendError, ConfigError, ParseError, RelevanceParseError
from .prompting import PromptTemplate, render_context_only

logger = logging.getLogger(__name__)

DEFAULT_SCORE_SCALE = 2.5
DEFAULT_CONTEXT_BUDGET = 77

# "Relevance", optional markdown, a colon, optional markdown/quotes, an
# integer, optional "/100". Tolerates surrounding prose; first match wins.
_RELEVANCE_RE = re.compile(
    r"relevance\s*[*_]*\s*:\s*[*_\"'`]*\s*(\d+)\s*(?:/\s*100)?",
    re.IGNORECASE,
)


@dataclass(frozen=True)
class ScoreRecord:
    """One raw model judgment for a (topic, image) pair."""

    qid: str
    docid: str
    model_id: str
    raw_score: float
    raw_response: str | None = None


@dataclass(frozen=True)
class ScoreFailure:
    qid: str
    docid: str
    reason: str


@dataclass
class ScoringResult:
    records: list[ScoreRecord]
    failures: list[ScoreFailure]


def clip_score(text_emb, img_emb, w: float = DEFAULT_SCORE_SCALE) -> float:
    """Scaled, zero-clamped cosine similarity: w * max(cos(text, image), 0)."""
    a = np.asarray(text_emb, dtype=np.float64)
    b = np.asarray(img_emb, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"embedding shapes differ: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cannot score a zero embedding")
    cos = min(1.0, float(np.dot(a, b) / (na * nb)))
    return w * max(cos, 0.0)


def parse_relevance(raw_text: str, lenient: bool = False) -> int:
    """Extract the integer from the first ``Relevance: <score>`` occurrence.

    Scores outside [1, 100] raise unless ``lenient``, which clamps instead.
    """
    match = _RELEVANCE_RE.search(raw_text)
    if match is None:
        raise RelevanceParseError(f"no relevance score in response: {raw_text[:80]!r}")
    value = int(match.group(1))
    if not 1 <= value <= 100:
        if not lenient:
            raise RelevanceParseError(f"relevance score {value} outside [1, 100]")
        value = min(max(value, 1), 100)
    return value


def score_pool(
    pool: Pool,
    topics: list[Topic],
    corpus: list[ImageDoc],
    cfg: BackendConfig,
    cache: JudgmentCache | None = None,
    template: PromptTemplate | None = None,
    context_budget: int = DEFAULT_CONTEXT_BUDGET,
    w: float = DEFAULT_SCORE_SCALE,
    lenient: bool = True,
) -> ScoringResult:
    """Produce one ScoreRecord (or a recorded failure) per pooled pair.

    Inputs are checked for coverage before any network call. Records come
    back sorted by (qid, docid); under a replay backend the result is a pure
    function of (pool, cache).
    """
    topic_by_qid = {t.qid: t for t in topics}
    doc_by_id = {d.docid: d for d in corpus}
    pairs = pool.sorted_pairs()
    missing_topics = sorted({q for q, _ in pairs if q not in topic_by_qid})
    if missing_topics:
        raise ConfigError(f"pool references unknown topics: {missing_topics[:5]}")
    missing_docs = sorted({d for _, d in pairs if d not in doc_by_id})
    if missing_docs:
        raise ConfigError(f"pool references unknown docs: {missing_docs[:5]}")

    client = BackendClient(cfg, cache)
    if cfg.is_generative:
        return _score_generative(client, pairs, topic_by_qid, doc_by_id, template, lenient)
    return _score_embedding(client, pairs, topic_by_qid, doc_by_id, context_budget, w)


def _score_generative(client, pairs, topic_by_qid, doc_by_id, template, lenient) -> ScoringResult:
    batch = [(topic_by_qid[q], doc_by_id[d]) for q, d in pairs]
    responses = client.judge_batch(batch, template=template)
    records: list[ScoreRecord] = []
    failures: list[ScoreFailure] = []
    for (qid, docid), resp in zip(pairs, responses):
        if not resp.ok:
            failures.append(ScoreFailure(qid, docid, resp.error))
            continue
        try:
            score = parse_relevance(resp.raw_text, lenient=lenient)
        except RelevanceParseError as exc:
            failures.append(ScoreFailure(qid, docid, str(exc)))
            continue
        records.append(
            ScoreRecord(
                qid=qid,
                docid=docid,
                model_id=client.cfg.model_id,
                raw_score=float(score),
                raw_response=resp.raw_text,
            )
        )
    return ScoringResult(records=records, failures=failures)


def _score_embedding(client, pairs, topic_by_qid, doc_by_id, context_budget, w) -> ScoringResult:
    model_id = client.cfg.model_id
    qids = sorted({q for q, _ in pairs})
    docids = sorted({d for _, d in pairs})

    def embed_topic(qid: str):
        text = render_context_only(topic_by_qid[qid], context_budget)
        key = JudgmentCache.make_key(model_id, qid, "", JudgmentCache.payload_hash(text))
        return client.embed(text, cache_key=key)

    def embed_image(docid: str):
        ref = doc_by_id[docid].image_ref
        key = JudgmentCache.make_key(model_id, "", docid, JudgmentCache.payload_hash(ref))
        return client.embed(ref, cache_key=key, is_image=True)

    def guarded(fn, arg):
        try:
            return fn(arg)
        except (BackendError, ValueError) as exc:
            logger.warning("embedding failed for %r: %s", arg, exc)
            return exc

    workers = client.cfg.max_concurrency
    topic_embs = dict(
        zip(qids, map_bounded(lambda q: guarded(embed_topic, q), qids, workers))
    )
    image_embs = dict(
        zip(docids, map_bounded(lambda d: guarded(embed_image, d), docids, workers))
    )

    records: list[ScoreRecord] = []
    failures: list[ScoreFailure] = []
    for qid, docid in pairs:
        t_emb, i_emb = topic_embs[qid], image_embs[docid]
        if isinstance(t_emb, Exception):
            failures.append(ScoreFailure(qid, docid, f"text embedding failed: {t_emb}"))
            continue
        if isinstance(i_emb, Exception):
            failures.append(ScoreFailure(qid, docid, f"image embedding failed: {i_emb}"))
            continue
        try:
            score = clip_score(t_emb, i_emb, w)
        except ValueError as exc:
            failures.append(ScoreFailure(qid, docid, str(exc)))
            continue
        records.append(
            ScoreRecord(qid=qid, docid=docid, model_id=model_id, raw_score=score)
        )
    return ScoringResult(records=records, failures=failures)


def score_records_to_jsonl(records: list[ScoreRecord]) -> str:
    """Serialize records as JSON lines; raw_response omitted when absent."""
    lines = []
    for r in records:
        obj = {"qid": r.qid, "docid": r.docid, "model_id": r.model_id, "raw_score": r.raw_score}
        if r.raw_response is not None:
            obj["raw_response"] = r.raw_response
        lines.append(json.dumps(obj, sort_keys=True))
    return "".join(line + "\n" for line in lines)


def load_score_records(text: str) -> list[ScoreRecord]:
    records: list[ScoreRecord] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}", line_no) from None
        try:
            records.append(
                ScoreRecord(
                    qid=str(obj["qid"]),
                    docid=str(obj["docid"]),
                    model_id=str(obj["model_id"]),
                    raw_score=float(obj["raw_score"]),
                    raw_response=obj.get("raw_response"),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad score record: {exc}", line_no) from None
    return records
