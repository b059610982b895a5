"""Figure rendering for the report paths.

Every figure-writing subcommand saves PNGs next to its delimited output.
The Agg backend is forced so runs work headless, and PNG metadata is
pinned so identical runs write identical bytes.
"""

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .evalkit import DifficultyReport, ResultTable  # noqa: E402
from .humaneval import BwsScores  # noqa: E402

_FIG_SIZE = (6.4, 4.0)
_METADATA = {"Software": "themescout"}


def _save(fig, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, metadata=_METADATA)
    plt.close(fig)


def save_eval_figure(table: ResultTable, k_values: Sequence[int], path: Path) -> None:
    """Mean precision@k and recall@k across papers, one line per variant."""
    fig, (ax_p, ax_r) = plt.subplots(1, 2, figsize=(_FIG_SIZE[0] * 1.6, _FIG_SIZE[1]), sharex=True)
    for variant in table.variants:
        precisions, recalls = [], []
        for k in k_values:
            cells = [table.cell(d, variant, k) for d in table.doc_ids
                     if (d, variant) in table.rows and (d, variant) not in table.errors]
            defined = [c for c in cells if c.precision is not None]
            precisions.append(sum(c.precision for c in defined) / len(defined) if defined else 0.0)
            recalls.append(sum(c.recall for c in defined) / len(defined) if defined else 0.0)
        label = variant if len(variant) <= 40 else variant[:37] + "..."
        ax_p.plot(list(k_values), precisions, marker="o", markersize=3, label=label)
        ax_r.plot(list(k_values), recalls, marker="o", markersize=3, label=label)
    ax_p.set_xlabel("k")
    ax_r.set_xlabel("k")
    ax_p.set_ylabel("mean precision@k")
    ax_r.set_ylabel("mean recall@k")
    ax_p.set_ylim(-0.02, 1.02)
    ax_r.set_ylim(-0.02, 1.02)
    ax_r.legend(fontsize=7, loc="lower right")
    fig.suptitle(f"{table.theme_name} - {table.model_id}")
    fig.tight_layout()
    _save(fig, path)


def save_difficulty_figure(reports: Sequence[DifficultyReport], path: Path) -> None:
    """Keyword-coverage ratio per (paper, theme), colored by label."""
    colors = {"hard": "#c0392b", "medium": "#e67e22", "easy": "#27ae60"}
    labels = [f"{r.doc_id}\n{r.theme_id}" for r in reports]
    fig, ax = plt.subplots(figsize=(max(_FIG_SIZE[0], 0.9 * len(reports)), _FIG_SIZE[1]))
    ax.bar(range(len(reports)), [r.ratio for r in reports],
           color=[colors[r.label] for r in reports])
    if reports:
        ax.axhline(reports[0].easy_threshold, linestyle="--", linewidth=1, color="gray")
    ax.set_xticks(range(len(reports)))
    ax.set_xticklabels(labels, fontsize=6, rotation=45, ha="right")
    ax.set_ylabel("gold paragraphs with keywords / gold paragraphs")
    ax.set_ylim(0, 1.05)
    fig.tight_layout()
    _save(fig, path)


def save_bws_figure(scores: BwsScores, path: Path) -> None:
    models = sorted(scores.scores, key=lambda m: (-scores.scores[m], m))
    fig, ax = plt.subplots(figsize=_FIG_SIZE)
    ax.bar(range(len(models)), [scores.scores[m] for m in models], color="#2c3e50")
    ax.set_xticks(range(len(models)))
    ax.set_xticklabels(models, fontsize=8)
    ax.set_ylabel(f"best-worst score ({scores.aggregation})")
    fig.tight_layout()
    _save(fig, path)
