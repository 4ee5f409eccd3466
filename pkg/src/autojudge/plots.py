"""Render comparison figures to files next to the delimited reports.

Three figures accompany each meta-report: a scatter of per-run effectiveness
under reference vs. model qrels with clip_based runs highlighted, a step plot
of the raw-score CDF, and a confusion-matrix heatmap. All figures are written
with the Agg backend and a pinned SVG hash salt so output is stable for a
given matplotlib install.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "autojudge"

import matplotlib.pyplot as plt

from .metaeval import GRADE_LABELS, ConfusionMatrix3, MetaReport

_SVG_METADATA = {"Date": None}

CLIP_COLOR = "#d62728"
OTHER_COLOR = "#1f77b4"


def _save(fig, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix.lower() == ".svg":
        fig.savefig(path, format="svg", metadata=_SVG_METADATA)
    else:
        fig.savefig(path)
    plt.close(fig)


def scatter_figure(
    report: MetaReport,
    classes: Mapping[str, str] | None,
    metric: str,
    path: str | Path,
) -> Path:
    """Per-run mean effectiveness under both qrels, clip_based runs in red."""
    path = Path(path)
    ref = report.rankings["reference"][metric]
    model = report.rankings["model"][metric]
    fig, ax = plt.subplots(figsize=(5, 5))
    seen_classes = set()
    for tag in sorted(ref):
        cls = (classes or {}).get(tag, "other")
        color = CLIP_COLOR if cls == "clip_based" else OTHER_COLOR
        label = cls if cls not in seen_classes else None
        seen_classes.add(cls)
        ax.scatter(ref[tag], model[tag], color=color, label=label, s=36, zorder=3)
    lim = max([*ref.values(), *model.values(), 0.01]) * 1.1
    ax.plot([0, lim], [0, lim], linestyle="--", color="gray", linewidth=1, zorder=1)
    ax.set_xlim(0, lim)
    ax.set_ylim(0, lim)
    ax.set_xlabel(f"{metric} (reference qrels)")
    ax.set_ylabel(f"{metric} ({report.model_id} qrels)")
    ax.set_title(f"Run effectiveness: {metric}")
    if seen_classes:
        ax.legend(loc="lower right")
    fig.tight_layout()
    _save(fig, path)
    return path


def cdf_figure(cdf: Sequence[tuple[float, float]], model_id: str, path: str | Path) -> Path:
    """Step plot of the cumulative distribution of raw relevance scores."""
    path = Path(path)
    scores = [s for s, _ in cdf]
    fractions = [f for _, f in cdf]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.step(scores, fractions, where="post", color=OTHER_COLOR)
    ax.set_ylim(0, 1.02)
    ax.set_xlabel("raw relevance score")
    ax.set_ylabel("cumulative fraction")
    ax.set_title(f"Score CDF: {model_id}")
    ax.grid(True, linewidth=0.3, alpha=0.5)
    fig.tight_layout()
    _save(fig, path)
    return path


def confusion_figure(cm: ConfusionMatrix3, model_id: str, path: str | Path) -> Path:
    """Heatmap of reference vs. model grades with annotated counts."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(4.5, 4))
    data = [list(row) for row in cm.counts]
    im = ax.imshow(data, cmap="Blues")
    vmax = max(max(row) for row in data) or 1
    for i in range(3):
        for j in range(3):
            color = "white" if data[i][j] > vmax / 2 else "black"
            ax.text(j, i, str(data[i][j]), ha="center", va="center", color=color)
    ticks = [f"{g}\n{label}" for g, label in enumerate(GRADE_LABELS)]
    ax.set_xticks(range(3), ticks)
    ax.set_yticks(range(3), ticks)
    ax.set_xlabel("model grade")
    ax.set_ylabel("reference grade")
    ax.set_title(f"Grade agreement: {model_id}")
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    _save(fig, path)
    return path
