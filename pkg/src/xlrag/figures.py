"""Matplotlib renderings of segment reports and policy comparisons.

Figures are written next to the delimited/JSON outputs they visualize; the
Agg backend keeps rendering headless and reproducible.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import MetricValue, SegmentReport

_SAVE_KWARGS = {"dpi": 150, "metadata": {"Software": "xlrag"}}


def _segment_labels(report: SegmentReport) -> list[tuple[str, MetricValue]]:
    rows = [(f"{u}→{d}", cell.hit20) for (u, d), cell in sorted(report.cells.items())]
    rows += [
        ("same", report.same_language.hit20),
        ("cross", report.cross_language.hit20),
        ("overall", report.overall.hit20),
    ]
    return rows


def plot_segment_hit20(report: SegmentReport, path: str | Path) -> None:
    """Bar chart of Hits@20 per language-combination segment with 95% CIs."""
    rows = _segment_labels(report)
    labels = [label for label, _ in rows]
    values = [v.p if v.defined else 0.0 for _, v in rows]
    errors = [v.ci_half_width if v.defined else 0.0 for _, v in rows]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(np.arange(len(rows)), values, yerr=errors, capsize=3, color="#4878a8")
    ax.set_xticks(np.arange(len(rows)))
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("Hits@20")
    ax.set_title("Retrieval Hits@20 by language combination")
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def plot_policy_comparison(
    columns: Sequence[tuple[str, Mapping[str, MetricValue] | None]],
    segment_order: Sequence[str],
    path: str | Path,
) -> None:
    """Grouped Hits@20 bars: one group per segment, one bar per policy column.

    Columns with no results (missing runs) are skipped, leaving a visible gap.
    """
    present = [(label, segments) for label, segments in columns if segments is not None]
    fig, ax = plt.subplots(figsize=(8, 4.5))
    width = 0.8 / max(len(columns), 1)
    x = np.arange(len(segment_order))
    palette = ("#4878a8", "#e49444", "#6a9f58", "#d1605e", "#85594c")
    for slot, (label, segments) in enumerate(columns):
        if segments is None:
            continue
        values = [segments[s].p if segments[s].defined else 0.0 for s in segment_order]
        errors = [segments[s].ci_half_width if segments[s].defined else 0.0 for s in segment_order]
        offset = (slot - (len(columns) - 1) / 2) * width
        ax.bar(x + offset, values, width=width, yerr=errors, capsize=2,
               label=label, color=palette[slot % len(palette)])
    ax.set_xticks(x)
    ax.set_xticklabels(segment_order, rotation=30, ha="right")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("Hits@20")
    ax.set_title("Retrieval Hits@20 by policy and segment")
    if present:
        ax.legend()
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)
