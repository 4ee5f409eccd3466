"""Data model and bit-exact I/O for topics, runs, qrels, and pooled judgment sets.

File formats:
  run    -- ``qid Q0 docid rank score tag`` (6 whitespace-separated fields)
  qrels  -- ``qid 0 docid grade``
  topics -- JSON lines with keys qid, page_title, page_context, section_title,
            section_context
  corpus -- JSON lines with keys docid, image_ref and optional caption

All parsers take the full file content as a string and report 1-based line
numbers in errors. Parsing either returns a fully valid value or raises; no
partially valid run or qrels is ever returned.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ParseError, ValidationError

logger = logging.getLogger(__name__)

GRADES = (0, 1, 2)
SYSTEM_CLASSES = ("clip_based", "other")

TOPIC_TEXT_FIELDS = ("page_title", "page_context", "section_title", "section_context")


@dataclass(frozen=True)
class Topic:
    """One test query: the four textual context fields of a Wikipedia section."""

    qid: str
    page_title: str = ""
    page_context: str = ""
    section_title: str = ""
    section_context: str = ""


@dataclass(frozen=True)
class ImageDoc:
    """One corpus image: identifier plus an opaque locator (path or URL)."""

    docid: str
    image_ref: str
    caption: str | None = None


@dataclass(frozen=True)
class RunEntry:
    qid: str
    docid: str
    rank: int
    score: float
    tag: str


@dataclass(frozen=True)
class Run:
    """One system's ranked retrieval output, in file order."""

    tag: str
    entries: tuple[RunEntry, ...]
    system_class: str = "other"

    def qids(self) -> list[str]:
        return sorted({e.qid for e in self.entries})

    def ranking(self, qid: str) -> list[str]:
        """Canonical ranking for one topic: score descending, docid ascending on ties."""
        entries = [e for e in self.entries if e.qid == qid]
        entries.sort(key=lambda e: (-e.score, e.docid))
        return [e.docid for e in entries]


@dataclass
class Qrels:
    """Graded relevance judgments: (qid, docid) -> grade in {0, 1, 2}.

    ``source`` is "human" for reference judgments or "model:<model_id>" for
    model-generated ones.
    """

    judgments: dict[tuple[str, str], int]
    source: str = "human"

    def grade(self, qid: str, docid: str, default: int = 0) -> int:
        return self.judgments.get((qid, docid), default)

    def topics(self) -> list[str]:
        return sorted({qid for qid, _ in self.judgments})

    def topic_judgments(self, qid: str) -> dict[str, int]:
        return {d: g for (q, d), g in self.judgments.items() if q == qid}

    def __len__(self) -> int:
        return len(self.judgments)


@dataclass(frozen=True)
class DepthPolicy:
    """Pooling depth per run tag, with a default for unlisted tags."""

    default: int = 25
    per_tag: dict[str, int] = field(default_factory=dict)

    def depth_for(self, tag: str) -> int:
        return self.per_tag.get(tag, self.default)


@dataclass(frozen=True)
class Pool:
    """The set of (qid, docid) pairs selected for judgment."""

    pairs: frozenset[tuple[str, str]]
    depth_policy: DepthPolicy

    def sorted_pairs(self) -> list[tuple[str, str]]:
        return sorted(self.pairs)

    def __len__(self) -> int:
        return len(self.pairs)


def _split_lines(text: str):
    for line_no, line in enumerate(text.splitlines(), start=1):
        if line.strip():
            yield line_no, line


def parse_run(text: str) -> Run:
    """Parse a TREC-format run. The second column is ignored by convention.

    Raises ParseError for malformed lines and ValidationError when ranks are
    not exactly 1..n per topic or a docid repeats within a topic.
    """
    entries: list[RunEntry] = []
    for line_no, line in _split_lines(text):
        fields = line.split()
        if len(fields) != 6:
            raise ParseError(f"expected 6 fields, got {len(fields)}", line_no)
        qid, _, docid, rank_s, score_s, tag = fields
        try:
            rank = int(rank_s)
        except ValueError:
            raise ParseError(f"non-integer rank {rank_s!r}", line_no) from None
        if rank < 1:
            raise ParseError(f"rank must be positive, got {rank}", line_no)
        try:
            score = float(score_s)
        except ValueError:
            raise ParseError(f"non-numeric score {score_s!r}", line_no) from None
        if math.isnan(score) or math.isinf(score):
            raise ParseError(f"score must be finite, got {score_s!r}", line_no)
        entries.append(RunEntry(qid=qid, docid=docid, rank=rank, score=score, tag=tag))

    if not entries:
        raise ValidationError("run contains no entries")

    tag = entries[0].tag
    for e in entries:
        if e.tag != tag:
            raise ValidationError(f"mixed run tags: {tag!r} and {e.tag!r}")

    by_qid: dict[str, list[RunEntry]] = {}
    for e in entries:
        by_qid.setdefault(e.qid, []).append(e)
    for qid, group in by_qid.items():
        seen_docids: set[str] = set()
        for e in group:
            if e.docid in seen_docids:
                raise ValidationError(f"duplicate docid {e.docid!r} for qid {qid!r}")
            seen_docids.add(e.docid)
        ranks = sorted(e.rank for e in group)
        if ranks != list(range(1, len(group) + 1)):
            raise ValidationError(f"ranks for qid {qid!r} are not exactly 1..{len(group)}")

    return Run(tag=tag, entries=tuple(entries))


def write_run(run: Run) -> str:
    """Serialize a run in canonical form: single spaces, shortest float repr."""
    lines = [f"{e.qid} Q0 {e.docid} {e.rank} {e.score!r} {e.tag}" for e in run.entries]
    return "".join(line + "\n" for line in lines)


def parse_qrels(text: str, lenient: bool = False) -> Qrels:
    """Parse TREC qrels. Grades outside {0,1,2} are an error unless ``lenient``,
    in which case they are clamped into range."""
    judgments: dict[tuple[str, str], int] = {}
    for line_no, line in _split_lines(text):
        fields = line.split()
        if len(fields) != 4:
            raise ParseError(f"expected 4 fields, got {len(fields)}", line_no)
        qid, _, docid, grade_s = fields
        try:
            grade = int(grade_s)
        except ValueError:
            raise ParseError(f"non-integer grade {grade_s!r}", line_no) from None
        if grade not in GRADES:
            if not lenient:
                raise ParseError(f"grade {grade} outside {{0,1,2}}", line_no)
            grade = min(max(grade, 0), 2)
        key = (qid, docid)
        if key in judgments:
            raise ValidationError(f"duplicate judgment for ({qid}, {docid})")
        judgments[key] = grade
    return Qrels(judgments=judgments)


def write_qrels(qrels: Qrels) -> str:
    """Serialize qrels sorted by (qid, docid); deterministic byte output."""
    lines = [
        f"{qid} 0 {docid} {grade}"
        for (qid, docid), grade in sorted(qrels.judgments.items())
    ]
    return "".join(line + "\n" for line in lines)


def pool(runs: list[Run], depth_policy: DepthPolicy) -> Pool:
    """Union of each run's top-k entries by rank. Scores are ignored; the
    result does not depend on the order of ``runs``."""
    pairs = {
        (e.qid, e.docid)
        for run in runs
        for e in run.entries
        if e.rank <= depth_policy.depth_for(run.tag)
    }
    return Pool(pairs=frozenset(pairs), depth_policy=depth_policy)


def load_topics(text: str) -> list[Topic]:
    """Load topics from JSON lines. A missing text field becomes an empty
    string with a warning; a missing or empty qid is an error."""
    topics: list[Topic] = []
    seen: set[str] = set()
    for line_no, line in _split_lines(text):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}", line_no) from None
        if not isinstance(obj, dict):
            raise ParseError("topic line is not a JSON object", line_no)
        qid = obj.get("qid")
        if not qid or not isinstance(qid, str):
            raise ParseError("missing or empty qid", line_no)
        if qid in seen:
            raise ValidationError(f"duplicate qid {qid!r}")
        seen.add(qid)
        values = {}
        for name in TOPIC_TEXT_FIELDS:
            value = obj.get(name)
            if value is None:
                logger.warning("topic %s: missing %s, using empty string", qid, name)
                value = ""
            values[name] = str(value)
        topics.append(Topic(qid=qid, **values))
    return topics


def load_corpus(text: str) -> list[ImageDoc]:
    """Load the corpus manifest from JSON lines."""
    docs: list[ImageDoc] = []
    seen: set[str] = set()
    for line_no, line in _split_lines(text):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}", line_no) from None
        if not isinstance(obj, dict):
            raise ParseError("corpus line is not a JSON object", line_no)
        docid = obj.get("docid")
        if not docid or not isinstance(docid, str):
            raise ParseError("missing or empty docid", line_no)
        if docid in seen:
            raise ValidationError(f"duplicate docid {docid!r}")
        seen.add(docid)
        image_ref = obj.get("image_ref")
        if not image_ref or not isinstance(image_ref, str):
            raise ParseError(f"doc {docid!r}: missing image_ref", line_no)
        caption = obj.get("caption")
        docs.append(ImageDoc(docid=docid, image_ref=image_ref, caption=caption))
    return docs


def write_pool_pairs(pairs) -> str:
    """Serialize pool pairs as JSON lines sorted by (qid, docid)."""
    lines = [
        json.dumps({"qid": qid, "docid": docid}, sort_keys=True)
        for qid, docid in sorted(pairs)
    ]
    return "".join(line + "\n" for line in lines)


def load_pool_pairs(text: str) -> list[tuple[str, str]]:
    pairs: list[tuple[str, str]] = []
    for line_no, line in _split_lines(text):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}", line_no) from None
        if "qid" not in obj or "docid" not in obj:
            raise ParseError("pool line missing qid or docid", line_no)
        pairs.append((str(obj["qid"]), str(obj["docid"])))
    return pairs


def load_runs_dir(path: str | Path) -> list[Run]:
    """Parse every regular file in a directory as a run, sorted by filename."""
    directory = Path(path)
    if not directory.is_dir():
        raise ValidationError(f"runs directory not found: {directory}")
    runs: list[Run] = []
    tags: set[str] = set()
    for file in sorted(p for p in directory.iterdir() if p.is_file()):
        try:
            run = parse_run(file.read_text(encoding="utf-8"))
        except (ParseError, ValidationError) as exc:
            raise type(exc)(f"{file.name}: {exc}") from None
        if run.tag in tags:
            raise ValidationError(f"duplicate run tag {run.tag!r} in {file.name}")
        tags.add(run.tag)
        runs.append(run)
    if not runs:
        raise ValidationError(f"no run files in {directory}")
    return runs
