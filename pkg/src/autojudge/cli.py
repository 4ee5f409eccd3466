"""Command-line pipeline: pool -> judge -> grade -> eval -> compare.

Every subcommand reads a JSON config (see config.py), writes its artifacts
under the configured output directory only, and is idempotent given unchanged
inputs and cache. All writes are atomic (temp file + rename). Exit codes:
0 success, 1 config/validation error, 2 data error, 3 backend error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
import tempfile
from pathlib import Path

from . import backends, collection, grading, metaeval, metrics, plots, scoring
from .config import ModelSpec, PipelineConfig, load_config, load_run_classes
from .errors import AutojudgeError, ConfigError, DataError
from .prompting import PromptTemplate

logger = logging.getLogger(__name__)


def write_text_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def model_slug(model_id: str) -> str:
    """Filesystem-safe form of a model id (slashes etc. become underscores)."""
    return re.sub(r"[^A-Za-z0-9._-]+", "_", model_id)


def _read(path: Path, what: str) -> str:
    if not path.is_file():
        raise DataError(f"{what} not found: {path}")
    return path.read_text(encoding="utf-8")


def _load_template(cfg: PipelineConfig) -> PromptTemplate | None:
    if cfg.template is None:
        return None
    return PromptTemplate.from_text(_read(cfg.template, "template file"))


def _pool_path(cfg: PipelineConfig) -> Path:
    return cfg.output_dir / "pool.jsonl"


def _scores_path(cfg: PipelineConfig, model_id: str) -> Path:
    return cfg.output_dir / f"scores.{model_slug(model_id)}.jsonl"


def _qrels_path(cfg: PipelineConfig, model_id: str) -> Path:
    return cfg.output_dir / f"qrels.{model_slug(model_id)}.txt"


def _cache(cfg: PipelineConfig) -> backends.JudgmentCache:
    path = cfg.cache_path or cfg.output_dir / "cache.jsonl"
    return backends.JudgmentCache(path)


# -- subcommands -------------------------------------------------------------


def cmd_pool(cfg: PipelineConfig) -> Path:
    runs = collection.load_runs_dir(cfg.require("runs_dir"))
    pooled = collection.pool(runs, cfg.depth)
    out = _pool_path(cfg)
    write_text_atomic(out, collection.write_pool_pairs(pooled.pairs))
    print(f"pool size: {len(pooled)}")
    return out


def cmd_judge(cfg: PipelineConfig, model_id: str) -> Path:
    spec = cfg.model_spec(model_id)
    backend = spec.backend
    if backend.kind != "replay" and backend.api_key_env and not os.environ.get(backend.api_key_env):
        raise ConfigError(f"API key environment variable {backend.api_key_env} is not set")

    pairs = collection.load_pool_pairs(_read(_pool_path(cfg), "pool file (run `autojudge pool` first)"))
    pool = collection.Pool(pairs=frozenset(pairs), depth_policy=cfg.depth)
    topics = collection.load_topics(_read(cfg.require("topics"), "topics file"))
    corpus = collection.load_corpus(_read(cfg.require("corpus"), "corpus manifest"))

    result = scoring.score_pool(
        pool,
        topics,
        corpus,
        backend,
        cache=_cache(cfg),
        template=_load_template(cfg),
        context_budget=spec.context_token_budget,
        w=spec.score_scale,
        lenient=spec.lenient_parse,
    )
    out = _scores_path(cfg, model_id)
    write_text_atomic(out, scoring.score_records_to_jsonl(result.records))
    print(
        f"{model_id}: scored {len(result.records)} pairs, {len(result.failures)} failures",
        file=sys.stderr,
    )
    for failure in result.failures[:20]:
        print(f"  failed ({failure.qid}, {failure.docid}): {failure.reason}", file=sys.stderr)
    if len(result.failures) > 20:
        print(f"  ... and {len(result.failures) - 20} more", file=sys.stderr)
    return out


def _grade_model(cfg: PipelineConfig, model_id: str) -> collection.Qrels:
    records = scoring.load_score_records(
        _read(_scores_path(cfg, model_id), f"scores file for {model_id} (run `autojudge judge` first)")
    )
    qrels = grading.grade_records(records, scope=cfg.grading_scope)

    # Pooled pairs that never produced a score count as non-relevant.
    pool_file = _pool_path(cfg)
    if pool_file.is_file():
        scored = set(qrels.judgments)
        for pair in collection.load_pool_pairs(pool_file.read_text(encoding="utf-8")):
            if pair not in scored:
                qrels.judgments[pair] = 0
    return qrels


def cmd_grade(cfg: PipelineConfig, model_id: str) -> Path:
    qrels = _grade_model(cfg, model_id)
    out = _qrels_path(cfg, model_id)
    write_text_atomic(out, collection.write_qrels(qrels))
    print(f"{model_id}: wrote {len(qrels)} judgments")
    return out


def cmd_eval(cfg: PipelineConfig, qrels_path: Path | None = None) -> Path:
    qrels_file = qrels_path or cfg.require("reference_qrels")
    qrels = collection.parse_qrels(_read(qrels_file, "qrels file"))
    runs = collection.load_runs_dir(cfg.require("runs_dir"))
    evaluations = [
        metrics.evaluate_run(run, qrels, k=cfg.k, binarize_at=cfg.binarize_at)
        for run in runs
    ]
    out = cfg.output_dir / f"eval.{Path(qrels_file).stem}.csv"
    write_text_atomic(out, metrics.evaluations_to_csv(evaluations))
    print(f"evaluated {len(runs)} runs -> {out.name}")
    return out


def cmd_compare(cfg: PipelineConfig, model_id: str) -> list[Path]:
    ref_qrels = collection.parse_qrels(_read(cfg.require("reference_qrels"), "reference qrels"))
    runs = collection.load_runs_dir(cfg.require("runs_dir"))

    model_qrels_path = _qrels_path(cfg, model_id)
    if model_qrels_path.is_file():
        model_qrels = collection.parse_qrels(model_qrels_path.read_text(encoding="utf-8"))
        model_qrels.source = f"model:{model_id}"
    else:
        model_qrels = _grade_model(cfg, model_id)
        write_text_atomic(model_qrels_path, collection.write_qrels(model_qrels))

    classes = None
    if cfg.run_classes is not None and cfg.run_classes.is_file():
        classes = load_run_classes(cfg.run_classes)
    else:
        logger.warning("no run-classes manifest; relative delta will be omitted")

    records = None
    scores_file = _scores_path(cfg, model_id)
    if scores_file.is_file():
        records = scoring.load_score_records(scores_file.read_text(encoding="utf-8"))

    report = metaeval.compare(
        runs,
        ref_qrels,
        model_qrels,
        classes=classes,
        k=cfg.k,
        binarize_at=cfg.binarize_at,
        records=records,
    )
    report.model_id = model_id

    slug = model_slug(model_id)
    written: list[Path] = []

    def emit(name: str, text: str) -> None:
        path = cfg.output_dir / name
        write_text_atomic(path, text)
        written.append(path)

    emit(f"report.{slug}.json", metaeval.report_to_json(report))
    emit(f"correlations.{slug}.csv", metaeval.correlation_table_csv(report))
    emit(f"bias.{slug}.csv", metaeval.bias_table_csv(report))
    if report.cdf is not None:
        emit(f"cdf.{slug}.csv", metaeval.cdf_csv(report.cdf))
    emit(f"confusion.{slug}.csv", metaeval.confusion_csv(report.confusion))

    if cfg.figures:
        written.append(
            plots.scatter_figure(report, classes, f"ndcg@{cfg.k}", cfg.output_dir / "scatter.svg")
        )
        if report.cdf is not None:
            written.append(plots.cdf_figure(report.cdf, model_id, cfg.output_dir / f"cdf.{slug}.svg"))
        written.append(
            plots.confusion_figure(report.confusion, model_id, cfg.output_dir / f"confusion.{slug}.svg")
        )

    print(f"{model_id}: wrote {len(written)} report files")
    return written


# -- argument parsing --------------------------------------------------------


def _apply_overrides(cfg: PipelineConfig, args: argparse.Namespace) -> PipelineConfig:
    for attr, arg_name in [
        ("topics", "topics"),
        ("corpus", "corpus"),
        ("runs_dir", "runs_dir"),
        ("reference_qrels", "ref_qrels"),
        ("run_classes", "run_classes"),
        ("output_dir", "out_dir"),
        ("template", "template"),
        ("cache_path", "cache"),
    ]:
        value = getattr(args, arg_name, None)
        if value is not None:
            setattr(cfg, attr, Path(value).resolve())
    if getattr(args, "depth", None) is not None:
        cfg.depth = collection.DepthPolicy(default=args.depth, per_tag=cfg.depth.per_tag)
    if getattr(args, "k", None) is not None:
        cfg.k = args.k
    if getattr(args, "binarize_at", None) is not None:
        cfg.binarize_at = args.binarize_at
    if getattr(args, "scope", None) is not None:
        cfg.grading_scope = args.scope
    if getattr(args, "no_figures", False):
        cfg.figures = False
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="autojudge",
        description="Automated relevance judgment and meta-evaluation for image-text retrieval.",
    )
    parser.add_argument("--config", required=True, help="path to the pipeline config JSON")
    parser.add_argument("--out-dir", help="override the output directory")
    parser.add_argument("--topics", help="override the topics file")
    parser.add_argument("--corpus", help="override the corpus manifest")
    parser.add_argument("--runs-dir", help="override the runs directory")
    parser.add_argument("--ref-qrels", help="override the reference qrels file")
    parser.add_argument("--run-classes", help="override the run-classes manifest")
    parser.add_argument("--template", help="override the prompt template file")
    parser.add_argument("--cache", help="override the judgment cache path")
    parser.add_argument("--depth", type=int, help="override the default pooling depth")
    parser.add_argument("--k", type=int, help="override the NDCG cutoff")
    parser.add_argument("--binarize-at", type=int, choices=(1, 2), help="MAP relevance threshold")
    parser.add_argument("--scope", choices=("global", "per_topic"), help="grading scope")
    parser.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("pool", help="pool run files into (qid, docid) pairs")
    p_judge = sub.add_parser("judge", help="score pooled pairs with one model")
    p_judge.add_argument("--model", required=True, help="model id from the config's backends map")
    p_grade = sub.add_parser("grade", help="convert scores to graded qrels")
    p_grade.add_argument("--model", required=True)
    p_eval = sub.add_parser("eval", help="evaluate all runs against a qrels file")
    p_eval.add_argument("--qrels", help="qrels to evaluate against (default: reference qrels)")
    p_compare = sub.add_parser("compare", help="meta-evaluate model qrels against the reference")
    p_compare.add_argument("--model", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "pool":
            cmd_pool(cfg)
        elif args.command == "judge":
            cmd_judge(cfg, args.model)
        elif args.command == "grade":
            cmd_grade(cfg, args.model)
        elif args.command == "eval":
            cmd_eval(cfg, Path(args.qrels).resolve() if args.qrels else None)
        elif args.command == "compare":
            cmd_compare(cfg, args.model)
    except AutojudgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
