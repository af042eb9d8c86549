"""Score-breakdown figures for ranking reports.

Rendering is headless (Agg) and deterministic: fixed figure geometry,
fixed colors, and pinned PNG metadata so repeated runs produce
identical bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .ranking import Recommendation, ScoreWeights

__all__ = ["render_score_figure"]

_CRITERIA = ("mildness", "yield", "availability_cost", "safety", "step_count")
_COLORS = ("#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3")


def _label(rec: Recommendation, max_len: int = 38) -> str:
    text = "+".join(rec.pathway.canonical_order) or "(target available)"
    return text if len(text) <= max_len else text[: max_len - 1] + "…"


def render_score_figure(
    recommendations: list[Recommendation],
    weights: ScoreWeights,
    path: str | Path,
    top_n: int = 10,
) -> None:
    """Write a stacked bar chart of weighted subscore contributions.

    One bar per pathway (best at the top), segments per criterion;
    segment widths are weight × subscore, so bars sum to the total
    score.
    """
    recs = recommendations[:top_n]
    height = max(2.2, 0.5 * len(recs) + 1.6)
    fig, ax = plt.subplots(figsize=(8.0, height))
    if recs:
        ys = list(range(len(recs)))[::-1]
        left = [0.0] * len(recs)
        w = weights.as_dict()
        for criterion, color in zip(_CRITERIA, _COLORS):
            widths = [w[criterion] * r.per_criterion[criterion] for r in recs]
            ax.barh(ys, widths, left=left, color=color, label=criterion, height=0.6)
            left = [a + b for a, b in zip(left, widths)]
        ax.set_yticks(ys)
        ax.set_yticklabels([_label(r) for r in recs], fontsize=8)
        ax.set_xlim(0, 1)
        ax.legend(loc="lower right", fontsize=7)
    else:
        ax.text(0.5, 0.5, "no pathways to rank", ha="center", va="center")
        ax.set_axis_off()
    ax.set_xlabel("weighted score contribution")
    ax.set_title("pathway score breakdown")
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": "retroplan"})
    plt.close(fig)
