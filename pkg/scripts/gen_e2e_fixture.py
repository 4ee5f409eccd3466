#!/usr/bin/env python3
"""Regenerate the end-to-end replay fixture and its golden outputs.

Builds a self-contained workspace (5 topics, 20 images, 6 runs of which 3 are
clip_based, reference qrels, replay caches for a generative and an embedding
mock model) and then runs the real CLI over it to refrese the golden files.

Usage: python3 scripts/gen_e2e_fixture.py [dest]   (default tests/fixtures/e2e)
"""

import json
import random
import shutil
import sys
from pathlib import Path

from autojudge import cli
from autojudge.backends import JudgmentCache
from autojudge.collection import DepthPolicy, ImageDoc, Topic, load_runs_dir, pool
from autojudge.prompting import render_context_only, render_full

SEED = 20240117
DEPTH = 5
EMB_DIM = 8

TOPICS = [
    Topic(
        qid="t01",
        page_title="Golden Gate Bridge",
        page_context="The Golden Gate Bridge is a suspension bridge spanning the strait between San Francisco Bay and the Pacific Ocean.",
        section_title="Construction",
        section_context="Construction began on January 5, 1933, and the bridge opened to vehicular traffic in 1937.",
    ),
    Topic(
        qid="t02",
        page_title="Honey bee",
        page_context="Honey bees are eusocial flying insects known for their construction of perennial colonial nests from wax.",
        section_title="Pollination",
        section_context="Honey bees are important pollinators of many crop species and wild plants.",
    ),
    Topic(
        qid="t03",
        page_title="Aurora",
        page_context="An aurora is a natural light display in Earth's sky, predominantly seen in high-latitude regions.",
        section_title="Causes",
        section_context="Auroras are the result of disturbances in the magnetosphere caused by the solar wind.",
    ),
    Topic(
        qid="t04",
        page_title="Venice",
        page_context="Venice is a city in northeastern Italy built on a group of 118 small islands separated by canals.",
        section_title="Transport",
        section_context="The classical Venetian boat is the gondola, although it is now mostly used for tourists.",
    ),
    Topic(
        qid="t05",
        page_title="Chess",
        page_context="Chess is a board game for two players played on a checkered board with sixty-four squares.",
        section_title="Opening theory",
        section_context="A chess opening is the initial stage of a chess game, organized into a consolidated body of theory.",
    ),
]

RUN_TAGS = {
    "clip-dense-a": "clip_based",
    "clip-dense-b": "clip_based",
    "clip-hybrid-c": "clip_based",
    "sparse-x": "other",
    "caption-y": "other",
    "multistage-z": "other",
}

GENERATIVE_TEMPLATES = [
    "Relevance: {n}",
    "The image clearly relates to the section. Relevance: {n}/100",
    "**Relevance:** {n}",
    "After considering the criteria above,\nrelevance: {n}",
    'Output: "Relevance: {n}"',
]

REFUSALS = {
    ("t02", "d007"): "I cannot determine the relevance of this image.",
    ("t05", "d013"): "As a careful assistant, I am unable to rate this content.",
}


def build_inputs(dest: Path, rng: random.Random):
    docs = [
        ImageDoc(docid=f"d{i:03d}", image_ref=f"images/d{i:03d}.jpg", caption=f"photo {i}")
        for i in range(1, 21)
    ]

    dest.joinpath("topics.jsonl").write_text(
        "".join(
            json.dumps(
                {
                    "qid": t.qid,
                    "page_title": t.page_title,
                    "page_context": t.page_context,
                    "section_title": t.section_title,
                    "section_context": t.section_context,
                }
            )
            + "\n"
            for t in TOPICS
        ),
        encoding="utf-8",
    )
    dest.joinpath("corpus.jsonl").write_text(
        "".join(
            json.dumps({"docid": d.docid, "image_ref": d.image_ref, "caption": d.caption}) + "\n"
            for d in docs
        ),
        encoding="utf-8",
    )

    runs_dir = dest / "runs"
    runs_dir.mkdir()
    for tag in RUN_TAGS:
        lines = []
        for t in TOPICS:
            ranked = rng.sample([d.docid for d in docs], 8)
            for rank, docid in enumerate(ranked, start=1):
                score = round(10.0 - rank + rng.uniform(0, 0.5), 4)
                lines.append(f"{t.qid} Q0 {docid} {rank} {score} {tag}")
        runs_dir.joinpath(f"{tag}.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")

    dest.joinpath("classes.json").write_text(
        json.dumps(RUN_TAGS, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    pooled = pool(load_runs_dir(runs_dir), DepthPolicy(default=DEPTH))
    pairs = pooled.sorted_pairs()

    grades = {}
    for qid, docid in pairs:
        grades[(qid, docid)] = rng.choices([0, 1, 2], weights=[5, 3, 2])[0]
    dest.joinpath("qrels.human.txt").write_text(
        "".join(f"{q} 0 {d} {g}\n" for (q, d), g in sorted(grades.items())),
        encoding="utf-8",
    )

    return docs, pairs, grades


def build_caches(dest: Path, docs, pairs, grades, rng: random.Random):
    topic_by_qid = {t.qid: t for t in TOPICS}
    doc_by_id = {d.docid: d for d in docs}
    entries = []

    # Generative model: scores loosely track the human grades, wrapped in
    # varied response formats, with two refusals to exercise the failure path.
    for i, (qid, docid) in enumerate(pairs):
        prompt = render_full(topic_by_qid[qid], doc_by_id[docid])
        key = JudgmentCache.make_key(
            "mock-llm", qid, docid,
            JudgmentCache.payload_hash(prompt.text, prompt.image_ref),
        )
        if (qid, docid) in REFUSALS:
            raw = REFUSALS[(qid, docid)]
        else:
            score = max(1, min(100, 20 + 30 * grades[(qid, docid)] + rng.randint(-8, 8)))
            raw = GENERATIVE_TEMPLATES[i % len(GENERATIVE_TEMPLATES)].format(n=score)
        entries.append({"key": key, "model_id": "mock-llm", "raw_text": raw,
                        "params": {"temperature": 0.0}, "timestamp": 0})

    # Embedding model: topic vectors are random unit-ish directions; image
    # vectors lean toward the topics that consider them relevant.
    topic_vecs = {}
    for t in TOPICS:
        vec = [rng.uniform(-1, 1) for _ in range(EMB_DIM)]
        topic_vecs[t.qid] = vec
        text = render_context_only(t, 77)
        key = JudgmentCache.make_key("mock-clip", t.qid, "", JudgmentCache.payload_hash(text))
        entries.append({"key": key, "model_id": "mock-clip",
                        "embedding": [round(v, 6) for v in vec], "timestamp": 0})

    pooled_docids = sorted({d for _, d in pairs})
    for docid in pooled_docids:
        vec = [rng.uniform(-0.3, 0.3) for _ in range(EMB_DIM)]
        for (qid, d), g in grades.items():
            if d == docid and g > 0:
                vec = [a + 0.6 * g * b for a, b in zip(vec, topic_vecs[qid])]
        key = JudgmentCache.make_key(
            "mock-clip", "", docid, JudgmentCache.payload_hash(doc_by_id[docid].image_ref)
        )
        entries.append({"key": key, "model_id": "mock-clip",
                        "embedding": [round(v, 6) for v in vec], "timestamp": 0})

    dest.joinpath("cache.jsonl").write_text(
        "".join(json.dumps(e, sort_keys=True) + "\n" for e in entries), encoding="utf-8"
    )


def write_config(dest: Path):
    config = {
        "topics": "topics.jsonl",
        "corpus": "corpus.jsonl",
        "runs_dir": "runs",
        "reference_qrels": "qrels.human.txt",
        "run_classes": "classes.json",
        "output_dir": "out",
        "cache": "cache.jsonl",
        "depth": {"default": DEPTH},
        "k": 10,
        "binarize_at": 1,
        "grading_scope": "global",
        "backends": {
            "mock-llm": {"kind": "replay", "model_id": "mock-llm", "replay_mode": "generative"},
            "mock-clip": {"kind": "replay", "model_id": "mock-clip", "replay_mode": "embedding"},
        },
    }
    dest.joinpath("config.json").write_text(
        json.dumps(config, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def run_pipeline(config: Path, out_dir: Path):
    base = ["--config", str(config), "--out-dir", str(out_dir)]
    steps = [
        ["pool"],
        ["judge", "--model", "mock-llm"],
        ["judge", "--model", "mock-clip"],
        ["grade", "--model", "mock-llm"],
        ["grade", "--model", "mock-clip"],
        ["eval"],
        ["eval", "--qrels", str(out_dir / "qrels.mock-llm.txt")],
        ["eval", "--qrels", str(out_dir / "qrels.mock-clip.txt")],
        ["compare", "--model", "mock-llm"],
        ["compare", "--model", "mock-clip"],
    ]
    for step in steps:
        code = cli.main(base + step)
        if code != 0:
            raise SystemExit(f"pipeline step {step} failed with exit code {code}")


def main():
    dest = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("tests/fixtures/e2e")
    if dest.exists():
        shutil.rmtree(dest)
    dest.mkdir(parents=True)

    rng = random.Random(SEED)
    docs, pairs, grades = build_inputs(dest, rng)
    build_caches(dest, docs, pairs, grades, rng)
    write_config(dest)
    run_pipeline(dest / "config.json", dest / "golden")
    print(f"fixture written to {dest} ({len(pairs)} pooled pairs)")
    print(f"golden files: {sorted(p.name for p in (dest / 'golden').iterdir())}")


if __name__ == "__main__":
    main()
